#pragma once

// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls into the library's Bessel code.

#include <cmath>
#include <functional>

namespace oracle {

/// K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt, trapezoid rule on [0, t_max].
inline double bessel_k_quadrature(double nu, double x, int points = 1000000) {
    // Integrand is below exp(-x cosh t + |nu| t); stop once that is negligible.
    double t_max = 1.0;
    while (-x * std::cosh(t_max) + std::abs(nu) * t_max > -x - 80.0) t_max += 0.5;
    const double h = t_max / points;
    long double sum = 0.5L * std::exp(-x);
    for (int n = 1; n <= points; ++n) {
        const double t = n * h;
        const long double w = n == points ? 0.5L : 1.0L;
        sum += w * std::exp(-x * std::cosh(t)) * std::cosh(nu * t);
    }
    return static_cast<double>(sum * h);
}

struct GigQuadrature {
    double log_norm; ///< log int theta^(g-1) exp(-rho theta - tau/theta) dtheta
    double mean;
    double inv_mean;
};

/// Moments of GIG(gamma, rho, tau) by the trapezoid rule in u = log(theta),
/// where the integrand exp(gamma u - rho e^u - tau e^-u) is smooth and decays
/// doubly exponentially on both sides. The grid is centred on the mode and
/// extended until the log-integrand falls 60 nats below its peak.
inline GigQuadrature gig_quadrature(double g, double rho, double tau, int points = 200000) {
    auto f = [&](double u) { return g * u - rho * std::exp(u) - tau * std::exp(-u); };
    const double mode = std::log((g + std::sqrt(g * g + 4.0 * rho * tau)) / (2.0 * rho));
    const double peak = f(mode);
    double lo = mode - 0.1, hi = mode + 0.1;
    while (f(lo) > peak - 60.0) lo -= 0.1;
    while (f(hi) > peak - 60.0) hi += 0.1;
    const double h = (hi - lo) / points;
    long double z = 0, m1 = 0, mi = 0;
    for (int n = 0; n <= points; ++n) {
        const double u = lo + n * h;
        const long double w = (n == 0 || n == points ? 0.5L : 1.0L) * std::exp(f(u) - peak);
        z += w;
        m1 += w * std::exp(u);
        mi += w * std::exp(-u);
    }
    return {static_cast<double>(std::log(z * h) + peak), static_cast<double>(m1 / z),
            static_cast<double>(mi / z)};
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

} // namespace oracle
