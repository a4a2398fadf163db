#pragma once

// Modified Bessel functions of the second kind in log space, and the first
// and inverse moments of the generalized inverse Gaussian distribution
//
//   GIG(theta | gamma, rho, tau) ∝ theta^(gamma-1) exp(-rho*theta - tau/theta).
//
// K_nu(x) is evaluated for a base order mu = nu - round(nu) in [-1/2, 1/2]
// (Temme's series for x < 2, Steed's continued fraction otherwise) and then
// carried to nu by forward recurrence on the ratio K_{mu+1}/K_mu, so nothing
// overflows for large orders or underflows for large x.

#include "bnpbss/errors.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace bnpbss {

namespace detail {

// Taylor coefficients of 1/Gamma(z) about 0: 1/Gamma(z) = sum_k kRecipGamma[k] z^k.
inline constexpr std::array<double, 29> kRecipGamma = {
    0.0,
    1.0,
    0.57721566490153286061,
    -0.65587807152025388108,
    -0.042002635034095235529,
    0.1665386113822914895,
    -0.042197734555544336748,
    -0.0096219715278769735621,
    0.0072189432466630995424,
    -0.0011651675918590651121,
    -0.00021524167411495097282,
    0.00012805028238811618615,
    -0.000020134854780788238656,
    -1.2504934821426706573e-6,
    1.1330272319816958824e-6,
    -2.0563384169776071035e-7,
    6.1160951044814158179e-9,
    5.0020076444692229301e-9,
    -1.1812745704870201446e-9,
    1.0434267116911005105e-10,
    7.782263439905071254e-12,
    -3.6968056186422057082e-12,
    5.100370287454475979e-13,
    -2.0583260535665067832e-14,
    -5.3481225394230179824e-15,
    1.2267786282382607902e-15,
    -1.1812593016974587695e-16,
    1.1866922547516003326e-18,
    1.4123806553180317816e-18,
};

/// Temme's auxiliary gamma quantities for |mu| <= 1/2:
///   gam1 = (1/G(1-mu) - 1/G(1+mu)) / (2 mu),  gam2 = (1/G(1-mu) + 1/G(1+mu)) / 2,
///   gampl = 1/G(1+mu), gammi = 1/G(1-mu).
struct TemmeGammas {
    double gam1, gam2, gampl, gammi;
};

inline TemmeGammas temme_gammas(double mu) {
    // 1/G(1+mu) = sum_{k>=1} c_k mu^(k-1) = even(mu^2) + mu * odd(mu^2), where
    // even collects c_1, c_3, ... and odd collects c_2, c_4, ...
    const double mu2 = mu * mu;
    double even = 0.0, odd = 0.0;
    for (std::size_t k = kRecipGamma.size() - 1; k >= 1; --k) {
        if (k % 2 == 1)
            even = even * mu2 + kRecipGamma[k];
        else
            odd = odd * mu2 + kRecipGamma[k];
    }
    TemmeGammas g{};
    g.gampl = even + mu * odd;
    g.gammi = even - mu * odd;
    g.gam1 = -odd;
    g.gam2 = even;
    return g;
}

/// log K_mu(x) and K_{mu+1}(x)/K_mu(x) for |mu| <= 1/2.
struct BaseBessel {
    double log_k;
    double ratio_up;
};

inline BaseBessel bessel_k_base(double mu, double x) {
    constexpr double eps = 1e-16;
    constexpr int max_iter = 100000;
    if (x < 2.0) {
        const double x2 = 0.5 * x;
        const double pimu = std::numbers::pi * mu;
        const double fact = std::abs(pimu) < eps ? 1.0 : pimu / std::sin(pimu);
        double d = -std::log(x2);
        double e = mu * d;
        const double fact2 = std::abs(e) < eps ? 1.0 : std::sinh(e) / e;
        const TemmeGammas g = temme_gammas(mu);
        double ff = fact * (g.gam1 * std::cosh(e) + g.gam2 * fact2 * d);
        double sum = ff;
        e = std::exp(e);
        double p = 0.5 * e / g.gampl;
        double q = 0.5 / (e * g.gammi);
        double c = 1.0;
        d = x2 * x2;
        double sum1 = p;
        for (int i = 1; i <= max_iter; ++i) {
            ff = (i * ff + p + q) / (i * static_cast<double>(i) - mu * mu);
            c *= d / i;
            p /= (i - mu);
            q /= (i + mu);
            const double del = c * ff;
            sum += del;
            const double del1 = c * (p - i * ff);
            sum1 += del1;
            if (std::abs(del) < std::abs(sum) * eps) break;
        }
        const double k_mu = sum;
        const double k_mu1 = sum1 * 2.0 / x;
        return {std::log(k_mu), k_mu1 / k_mu};
    }
    double b = 2.0 * (1.0 + x);
    double d = 1.0 / b;
    double h = d, delh = d;
    double q1 = 0.0, q2 = 1.0;
    const double a1 = 0.25 - mu * mu;
    double q = a1, c = a1;
    double a = -a1;
    double s = 1.0 + q * delh;
    for (int i = 1; i <= max_iter; ++i) {
        a -= 2 * i;
        c = -a * c / (i + 1.0);
        const double qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        const double dels = q * delh;
        s += dels;
        if (std::abs(dels / s) < eps) break;
    }
    h = a1 * h;
    const double log_k = 0.5 * std::log(std::numbers::pi / (2.0 * x)) - x - std::log(s);
    return {log_k, (mu + x + 0.5 - h) / x};
}

} // namespace detail

/// Natural log of the modified Bessel function of the second kind K_order(x).
inline double log_bessel_k(double order, double x) {
    if (!(x > 0.0) || !std::isfinite(x))
        throw DomainError("log_bessel_k: x must be positive and finite, got " + std::to_string(x));
    if (!std::isfinite(order)) throw DomainError("log_bessel_k: non-finite order");
    const double nu = std::abs(order);
    const double n = std::floor(nu + 0.5);
    const double mu = nu - n;
    const detail::BaseBessel base = detail::bessel_k_base(mu, x);
    double log_k = base.log_k;
    double ratio = base.ratio_up;
    for (int step = 1; step <= static_cast<int>(n); ++step) {
        log_k += std::log(ratio);
        ratio = 1.0 / ratio + 2.0 * (mu + step) / x;
    }
    return log_k;
}

/// log K at the three orders |nu-1|, |nu|, |nu+1| sharing as much work as
/// possible. Returns {log K_{nu-1}, log K_nu, log K_{nu+1}}.
inline std::array<double, 3> log_bessel_k_triplet(double nu, double x) {
    if (!(x > 0.0) || !std::isfinite(x))
        throw DomainError("log_bessel_k: x must be positive and finite");
    const double a = std::abs(nu);
    // Orders a-1 (possibly negative), a, a+1. K is even in the order.
    const double n = std::floor(a + 0.5);
    const double mu = a - n;
    std::array<double, 3> out{};
    if (n >= 1.0) {
        // a-1, a, a+1 all lie on the chain starting at mu.
        const double start = n - 1.0;
        const detail::BaseBessel base = detail::bessel_k_base(mu, x);
        double log_k = base.log_k;
        double ratio = base.ratio_up;
        for (int step = 1; step <= static_cast<int>(start); ++step) {
            log_k += std::log(ratio);
            ratio = 1.0 / ratio + 2.0 * (mu + step) / x;
        }
        const double lkm1 = log_k;
        const double lk = lkm1 + std::log(ratio);
        ratio = 1.0 / ratio + 2.0 * (mu + start + 1.0) / x;
        const double lkp1 = lk + std::log(ratio);
        out = {lkm1, lk, lkp1};
    } else {
        // a in [0, 1/2): K_{a-1} = K_{1-a} comes from a second base evaluation at -a.
        const detail::BaseBessel base = detail::bessel_k_base(mu, x);
        const double lk = base.log_k;
        const double lkp1 = lk + std::log(base.ratio_up);
        const detail::BaseBessel other = detail::bessel_k_base(-a, x); // K_{-a} = K_a, K_{1-a}
        const double lkm1 = other.log_k + std::log(other.ratio_up);
        out = {lkm1, lk, lkp1};
    }
    if (nu < 0.0) std::swap(out[0], out[2]);
    return out;
}

struct GigParams {
    double gamma = 1.0;
    double rho = 1.0;
    double tau = 1.0;

    void validate() const {
        if (!std::isfinite(gamma) || !(rho > 0.0) || !std::isfinite(rho) || !(tau >= 0.0) ||
            !std::isfinite(tau))
            throw DomainError("GIG parameters require finite gamma, rho > 0, tau >= 0");
        if (tau == 0.0 && !(gamma > 0.0))
            throw DomainError("GIG with tau = 0 requires gamma > 0 (Gamma limit)");
    }
};

struct GigMoments {
    double mean = 0.0;     ///< E[theta]
    double inv_mean = 0.0; ///< E[1/theta]
    bool inv_divergent = false;
    bool mean_divergent = false;
};

/// Below this value of 2*sqrt(rho*tau) the Gamma (or inverse-Gamma) limit is used.
inline constexpr double kGigLimitThreshold = 1e-10;

namespace detail {

inline GigMoments gig_moments_unchecked(const GigParams& p) {
    GigMoments m;
    const double x = 2.0 * std::sqrt(p.rho * p.tau);
    if (x < kGigLimitThreshold) {
        if (p.gamma > 0.0) {
            // Gamma(gamma, rho) limit.
            m.mean = p.gamma / p.rho;
            if (p.gamma > 1.0)
                m.inv_mean = p.rho / (p.gamma - 1.0);
            else
                m.inv_divergent = true;
        } else if (p.gamma < 0.0) {
            // Inverse-Gamma(-gamma, tau) limit.
            m.inv_mean = -p.gamma / p.tau;
            if (p.gamma < -1.0)
                m.mean = p.tau / (-p.gamma - 1.0);
            else
                m.mean_divergent = true;
        } else {
            m.mean_divergent = m.inv_divergent = true;
        }
        return m;
    }
    const auto lk = log_bessel_k_triplet(p.gamma, x);
    const double half_log_ratio = 0.5 * (std::log(p.tau) - std::log(p.rho));
    m.mean = std::exp(lk[2] - lk[1] + half_log_ratio);
    m.inv_mean = std::exp(lk[0] - lk[1] - half_log_ratio);
    return m;
}

} // namespace detail

/// E[theta] and E[1/theta] of GIG(gamma, rho, tau). Throws DivergentMoment
/// when a requested moment does not exist (Gamma limit with gamma <= 1).
inline GigMoments gig_moments(const GigParams& p) {
    p.validate();
    GigMoments m = detail::gig_moments_unchecked(p);
    if (m.inv_divergent)
        throw DivergentMoment("E[1/theta] diverges for gamma=" + std::to_string(p.gamma) +
                              " in the Gamma limit");
    if (m.mean_divergent)
        throw DivergentMoment("E[theta] diverges for gamma=" + std::to_string(p.gamma) +
                              " in the inverse-Gamma limit");
    return m;
}

/// Moments clamped to [floor, cap]; divergent moments are set to cap.
inline GigMoments gig_moments_clamped(const GigParams& p, double floor = 1e-12,
                                      double cap = 1e12) {
    GigMoments m = detail::gig_moments_unchecked(p);
    auto clamp = [&](double v, bool divergent) {
        if (divergent || !(v <= cap)) return cap;
        return v < floor ? floor : v;
    };
    m.mean = clamp(m.mean, m.mean_divergent);
    m.inv_mean = clamp(m.inv_mean, m.inv_divergent);
    return m;
}

/// log of the GIG normalizer 2 (tau/rho)^(gamma/2) K_gamma(2 sqrt(rho tau)).
inline double gig_log_normalizer(const GigParams& p) {
    const double x = 2.0 * std::sqrt(p.rho * p.tau);
    if (x < kGigLimitThreshold) {
        if (p.gamma > 0.0) return std::lgamma(p.gamma) - p.gamma * std::log(p.rho);
        if (p.gamma < 0.0) return std::lgamma(-p.gamma) + p.gamma * std::log(p.tau);
        throw DivergentMoment("GIG normalizer diverges for gamma = 0 in the degenerate limit");
    }
    return std::numbers::ln2 + 0.5 * p.gamma * (std::log(p.tau) - std::log(p.rho)) +
           log_bessel_k(p.gamma, x);
}

} // namespace bnpbss
