#pragma once

// Non-parametric source-variance model
//
//   r_ij = sum_k z_k t_ik v_kj,   t ~ Gamma(a0, a0), v ~ Gamma(b0, b0), z ~ Gamma(c0, c_m)
//
// with a fully factorized GIG posterior over t, v and z. Every update below is
// the exact coordinate minimizer of the variational bound for fixed auxiliary
// constants alpha (first-order bound on log r) and beta (Jensen bound on 1/r).
//
// Index conventions: t-quantities are I x K (bin, basis), v-quantities K x J
// (basis, frame), z-quantities length K. Power matrices are I x J.

#include "bnpbss/core.hpp"
#include "bnpbss/gig.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace bnpbss {

inline constexpr double kMomentFloor = 1e-12;
inline constexpr double kInvMomentCap = 1e12;

struct VBSourceModel {
    Index K = 0;
    double a0 = 0.1, b0 = 0.1, c0 = 1.0 / 30.0;
    double cm = 1.0;

    Eigen::MatrixXd rho_t, tau_t; // I x K
    Eigen::MatrixXd rho_v, tau_v; // K x J
    Eigen::VectorXd rho_z, tau_z; // K

    Eigen::MatrixXd Et, Et_inv;
    Eigen::MatrixXd Ev, Ev_inv;
    Eigen::VectorXd Ez, Ez_inv;

    std::vector<bool> active;

    Index bins() const { return rho_t.rows(); }
    Index frames() const { return rho_v.cols(); }

    std::vector<Index> active_indices() const {
        std::vector<Index> idx;
        for (Index k = 0; k < K; ++k)
            if (active[static_cast<std::size_t>(k)]) idx.push_back(k);
        return idx;
    }
};

inline Index active_count(const VBSourceModel& model) {
    return static_cast<Index>(std::count(model.active.begin(), model.active.end(), true));
}

namespace detail {

inline GigMoments clamped_moments(double shape, double rho, double tau) {
    return gig_moments_clamped({shape, rho, tau}, kMomentFloor, kInvMomentCap);
}

inline void refresh_t(VBSourceModel& m, const std::vector<Index>& cols) {
    for (Index k : cols)
        for (Index i = 0; i < m.bins(); ++i) {
            const auto g = clamped_moments(m.a0, m.rho_t(i, k), m.tau_t(i, k));
            m.Et(i, k) = g.mean;
            m.Et_inv(i, k) = g.inv_mean;
        }
}

inline void refresh_v(VBSourceModel& m, const std::vector<Index>& rows) {
    for (Index j = 0; j < m.frames(); ++j)
        for (Index k : rows) {
            const auto g = clamped_moments(m.b0, m.rho_v(k, j), m.tau_v(k, j));
            m.Ev(k, j) = g.mean;
            m.Ev_inv(k, j) = g.inv_mean;
        }
}

inline void refresh_z(VBSourceModel& m, const std::vector<Index>& idx) {
    for (Index k : idx) {
        const auto g = clamped_moments(m.c0, m.rho_z(k), m.tau_z(k));
        m.Ez(k) = g.mean;
        m.Ez_inv(k) = g.inv_mean;
    }
}

inline std::vector<Index> all_indices(Index n) {
    std::vector<Index> v(static_cast<std::size_t>(n));
    for (Index k = 0; k < n; ++k) v[static_cast<std::size_t>(k)] = k;
    return v;
}

inline double masked_mean(const Eigen::MatrixXd& power, const std::vector<bool>* frame_mask) {
    double sum = 0.0;
    Index count = 0;
    for (Index j = 0; j < power.cols(); ++j) {
        if (frame_mask && !(*frame_mask)[static_cast<std::size_t>(j)]) continue;
        sum += power.col(j).sum();
        count += power.rows();
    }
    return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

} // namespace detail

/// Recomputes every cached moment from the hyperparameters.
inline void refresh_moments(VBSourceModel& model) {
    const auto all = detail::all_indices(model.K);
    detail::refresh_t(model, all);
    detail::refresh_v(model, all);
    detail::refresh_z(model, all);
}

/// Prior rate of z matching the expected source power:
///   c_m = c0 K / mean_ij(power).
/// Frames with frame_mask[j] == false are left out of the mean.
inline double compute_cm(const Eigen::MatrixXd& power, Index K, double c0,
                         const std::vector<bool>* frame_mask = nullptr) {
    const double mean = detail::masked_mean(power, frame_mask);
    if (!(mean > 0.0) || !std::isfinite(mean))
        throw InvalidArgument("compute_cm: mean power must be positive and finite");
    return c0 * static_cast<double>(K) / mean;
}

/// Draws every rho and tau from Gamma(1000, 1000) and caches the moments.
inline VBSourceModel init_vb_model(const Eigen::MatrixXd& power, Index K, double a0,
                                   double b0, double c0, std::uint64_t seed,
                                   const std::vector<bool>* frame_mask = nullptr) {
    if (K < 1) throw InvalidArgument("init_vb_model: K must be >= 1");
    if (!(a0 > 0) || !(b0 > 0) || !(c0 > 0))
        throw InvalidArgument("init_vb_model: prior shapes must be positive");
    if ((power.array() < 0.0).any() || !power.allFinite())
        throw InvalidArgument("init_vb_model: power must be finite and nonnegative");

    VBSourceModel m;
    m.K = K;
    m.a0 = a0;
    m.b0 = b0;
    m.c0 = c0;
    m.cm = compute_cm(power, K, c0, frame_mask);

    const Index I = power.rows(), J = power.cols();
    std::mt19937_64 rng(seed);
    std::gamma_distribution<double> draw(1000.0, 1.0 / 1000.0);
    auto fill = [&](auto& mat) {
        for (Index c = 0; c < mat.cols(); ++c)
            for (Index r = 0; r < mat.rows(); ++r) mat(r, c) = draw(rng);
    };
    m.rho_t.resize(I, K);
    m.tau_t.resize(I, K);
    m.rho_v.resize(K, J);
    m.tau_v.resize(K, J);
    m.rho_z.resize(K);
    m.tau_z.resize(K);
    fill(m.rho_t);
    fill(m.tau_t);
    fill(m.rho_v);
    fill(m.tau_v);
    fill(m.rho_z);
    fill(m.tau_z);

    m.Et.resize(I, K);
    m.Et_inv.resize(I, K);
    m.Ev.resize(K, J);
    m.Ev_inv.resize(K, J);
    m.Ez.resize(K);
    m.Ez_inv.resize(K);
    m.active.assign(static_cast<std::size_t>(K), true);
    refresh_moments(m);
    return m;
}

/// Auxiliary constants of the bound. alpha is stored densely; beta is kept in
/// factored form beta_ijk = wt(i,k) wz(k) wv(k,j) / norm(i,j) over the active
/// bases (compact index p), and is zero for inactive bases.
struct BoundAuxiliaries {
    Eigen::MatrixXd alpha; // I x J
    Eigen::MatrixXd norm;  // I x J
    Eigen::MatrixXd wt;    // I x Ka
    Eigen::MatrixXd wv;    // Ka x J
    Eigen::VectorXd wz;    // Ka
    std::vector<Index> active;
    std::vector<Index> position; // basis k -> compact index, or -1
    BetaTightening tightening = BetaTightening::minimizer;

    double beta(Index i, Index j, Index k) const {
        const Index p = position[static_cast<std::size_t>(k)];
        if (p < 0) return 0.0;
        return wt(i, p) * wz(p) * wv(p, j) / norm(i, j);
    }

    /// Materialized beta, laid out as beta[(i * J + j) * K + k].
    std::vector<double> beta_tensor() const {
        const Index I = alpha.rows(), J = alpha.cols();
        const auto K = static_cast<Index>(position.size());
        std::vector<double> out(static_cast<std::size_t>(I * J * K));
        for (Index i = 0; i < I; ++i)
            for (Index j = 0; j < J; ++j)
                for (Index k = 0; k < K; ++k)
                    out[static_cast<std::size_t>((i * J + j) * K + k)] = beta(i, j, k);
        return out;
    }
};

inline BoundAuxiliaries compute_auxiliaries(const VBSourceModel& model,
                                            BetaTightening tightening = BetaTightening::minimizer) {
    BoundAuxiliaries aux;
    aux.tightening = tightening;
    aux.active = model.active_indices();
    aux.position.assign(static_cast<std::size_t>(model.K), -1);
    for (std::size_t p = 0; p < aux.active.size(); ++p)
        aux.position[static_cast<std::size_t>(aux.active[p])] = static_cast<Index>(p);
    const auto& A = aux.active;

    const Eigen::MatrixXd Et = model.Et(Eigen::all, A);
    const Eigen::MatrixXd Ev = model.Ev(A, Eigen::all);
    const Eigen::VectorXd Ez = model.Ez(A);
    aux.alpha = Et * Ez.asDiagonal() * Ev;

    if (tightening == BetaTightening::minimizer) {
        aux.wt = model.Et_inv(Eigen::all, A).cwiseInverse();
        aux.wv = model.Ev_inv(A, Eigen::all).cwiseInverse();
        aux.wz = model.Ez_inv(A).cwiseInverse();
    } else {
        aux.wt = model.Et_inv(Eigen::all, A);
        aux.wv = model.Ev_inv(A, Eigen::all);
        aux.wz = model.Ez_inv(A);
    }
    aux.norm = aux.wt * aux.wz.asDiagonal() * aux.wv;
    return aux;
}

namespace detail {

inline void check_finite(const Eigen::MatrixXd& mat, const char* what) {
    for (Index c = 0; c < mat.cols(); ++c)
        for (Index r = 0; r < mat.rows(); ++r)
            if (!std::isfinite(mat(r, c)))
                throw NumericError(std::string(what) + " is non-finite at (" + std::to_string(r) +
                                   ", " + std::to_string(c) + ")");
}

/// power / norm^2, the data weight shared by all tau updates.
inline Eigen::MatrixXd normalized_power(const Eigen::MatrixXd& power, const BoundAuxiliaries& aux) {
    if (power.rows() != aux.alpha.rows() || power.cols() != aux.alpha.cols())
        throw InvalidArgument("power matrix shape does not match the model");
    return power.cwiseQuotient(aux.norm.cwiseProduct(aux.norm));
}

} // namespace detail

/// Basis update:
///   rho_t(i,k) = a0 + E[z_k] sum_j E[v_kj] / alpha_ij
///   tau_t(i,k) = sum_j power_ij beta_ijk^2 E[1/z_k] E[1/v_kj]
inline void update_t(VBSourceModel& model, const Eigen::MatrixXd& power,
                     const BoundAuxiliaries& aux) {
    const auto& A = aux.active;
    const Eigen::MatrixXd pn = detail::normalized_power(power, aux);
    const Eigen::MatrixXd inv_alpha = aux.alpha.cwiseInverse();
    const Eigen::MatrixXd Ev = model.Ev(A, Eigen::all);
    const Eigen::VectorXd Ez = model.Ez(A);

    const Eigen::MatrixXd g = inv_alpha * Ev.transpose();
    Eigen::MatrixXd rho = (g * Ez.asDiagonal()).array() + model.a0;

    const Eigen::MatrixXd wv_sq_inv = aux.wv.cwiseAbs2().cwiseProduct(model.Ev_inv(A, Eigen::all));
    const Eigen::VectorXd zfac = aux.wz.cwiseAbs2().cwiseProduct(model.Ez_inv(A));
    Eigen::MatrixXd tau = (pn * wv_sq_inv.transpose()).cwiseProduct(aux.wt.cwiseAbs2()) *
                          zfac.asDiagonal();
    detail::check_finite(rho, "rho_t");
    detail::check_finite(tau, "tau_t");
    model.rho_t(Eigen::all, A) = rho;
    model.tau_t(Eigen::all, A) = tau;
    detail::refresh_t(model, A);
}

/// Activation update, the mirror of update_t with (i <-> j, a0 -> b0).
inline void update_v(VBSourceModel& model, const Eigen::MatrixXd& power,
                     const BoundAuxiliaries& aux) {
    const auto& A = aux.active;
    const Eigen::MatrixXd pn = detail::normalized_power(power, aux);
    const Eigen::MatrixXd inv_alpha = aux.alpha.cwiseInverse();
    const Eigen::MatrixXd Et = model.Et(Eigen::all, A);
    const Eigen::VectorXd Ez = model.Ez(A);

    const Eigen::MatrixXd g = Et.transpose() * inv_alpha;
    Eigen::MatrixXd rho = (Ez.asDiagonal() * g).array() + model.b0;

    const Eigen::MatrixXd wt_sq_inv = aux.wt.cwiseAbs2().cwiseProduct(model.Et_inv(Eigen::all, A));
    const Eigen::VectorXd zfac = aux.wz.cwiseAbs2().cwiseProduct(model.Ez_inv(A));
    Eigen::MatrixXd tau = zfac.asDiagonal() *
                          (wt_sq_inv.transpose() * pn).cwiseProduct(aux.wv.cwiseAbs2());
    detail::check_finite(rho, "rho_v");
    detail::check_finite(tau, "tau_v");
    model.rho_v(A, Eigen::all) = rho;
    model.tau_v(A, Eigen::all) = tau;
    detail::refresh_v(model, A);
}

/// Reliability update:
///   rho_z(k) = c_m + sum_ij E[t_ik] E[v_kj] / alpha_ij
///   tau_z(k) = sum_ij power_ij beta_ijk^2 E[1/t_ik] E[1/v_kj]
inline void update_z(VBSourceModel& model, const Eigen::MatrixXd& power,
                     const BoundAuxiliaries& aux) {
    const auto& A = aux.active;
    const Eigen::MatrixXd pn = detail::normalized_power(power, aux);
    const Eigen::MatrixXd inv_alpha = aux.alpha.cwiseInverse();
    const Eigen::MatrixXd Et = model.Et(Eigen::all, A);
    const Eigen::MatrixXd Ev = model.Ev(A, Eigen::all);

    const Eigen::MatrixXd g = inv_alpha * Ev.transpose();
    Eigen::VectorXd rho = Et.cwiseProduct(g).colwise().sum().transpose().array() + model.cm;

    const Eigen::MatrixXd wt_sq_inv = aux.wt.cwiseAbs2().cwiseProduct(model.Et_inv(Eigen::all, A));
    const Eigen::MatrixXd wv_sq_inv = aux.wv.cwiseAbs2().cwiseProduct(model.Ev_inv(A, Eigen::all));
    Eigen::VectorXd tau = wt_sq_inv.cwiseProduct(pn * wv_sq_inv.transpose())
                              .colwise()
                              .sum()
                              .transpose()
                              .cwiseProduct(aux.wz.cwiseAbs2());
    detail::check_finite(rho, "rho_z");
    detail::check_finite(tau, "tau_z");
    model.rho_z(A) = rho;
    model.tau_z(A) = tau;
    detail::refresh_z(model, A);
}

/// r_ij = sum_{active k} E[z_k] E[t_ik] E[v_kj], floored at 1e-12 * mean(r).
inline Eigen::MatrixXd expected_variance(const VBSourceModel& model) {
    const auto A = model.active_indices();
    Eigen::MatrixXd r = model.Et(Eigen::all, A) * model.Ez(A).asDiagonal() *
                        model.Ev(A, Eigen::all);
    const double floor = 1e-12 * r.mean();
    r = r.cwiseMax(floor > 0.0 ? floor : std::numeric_limits<double>::min());
    return r;
}

/// Deactivates every basis whose share E[z_k] / sum_active E[z] is below
/// `threshold`. The largest basis always survives. Returns how many were pruned.
inline Index prune_bases(VBSourceModel& model, double threshold) {
    if (!(threshold >= 0.0 && threshold < 1.0))
        throw InvalidArgument("prune threshold must lie in [0, 1)");
    if (threshold == 0.0) return 0;
    const auto A = model.active_indices();
    double total = 0.0;
    Index best = A.front();
    for (Index k : A) {
        total += model.Ez(k);
        if (model.Ez(k) > model.Ez(best)) best = k;
    }
    Index pruned = 0;
    for (Index k : A) {
        if (k == best) continue;
        if (model.Ez(k) / total < threshold) {
            model.active[static_cast<std::size_t>(k)] = false;
            ++pruned;
        }
    }
    return pruned;
}

namespace detail {

/// KL(GIG(a, rho, tau) || Gamma(a, b)) from the cached moments.
inline double gig_gamma_kl(double a, double b, double rho, double tau, double mean,
                           double inv_mean) {
    const double log_z = gig_log_normalizer({a, rho, tau});
    return (b - rho) * mean - tau * inv_mean - log_z - a * std::log(b) + std::lgamma(a);
}

} // namespace detail

/// Variational upper bound on sum_ij E_q[log r_ij + power_ij / r_ij] + KL(q || p)
/// for the given (possibly stale) auxiliaries. Every update_* call does not
/// increase it; recomputing the auxiliaries does not increase it either.
inline double variational_bound(const VBSourceModel& model, const Eigen::MatrixXd& power,
                                 const BoundAuxiliaries& aux) {
    const auto& A = aux.active;
    const Eigen::MatrixXd pn = detail::normalized_power(power, aux);
    const Eigen::MatrixXd wt_sq_inv = aux.wt.cwiseAbs2().cwiseProduct(model.Et_inv(Eigen::all, A));
    const Eigen::MatrixXd wv_sq_inv = aux.wv.cwiseAbs2().cwiseProduct(model.Ev_inv(A, Eigen::all));
    const Eigen::VectorXd zfac = aux.wz.cwiseAbs2().cwiseProduct(model.Ez_inv(A));
    const Eigen::MatrixXd jensen = wt_sq_inv * zfac.asDiagonal() * wv_sq_inv;
    const Eigen::MatrixXd mean_r =
        model.Et(Eigen::all, A) * model.Ez(A).asDiagonal() * model.Ev(A, Eigen::all);

    double data = 0.0;
    for (Index j = 0; j < power.cols(); ++j)
        for (Index i = 0; i < power.rows(); ++i) {
            const double al = aux.alpha(i, j);
            data += pn(i, j) * jensen(i, j) + std::log(al) - 1.0 + mean_r(i, j) / al;
        }

    double kl = 0.0;
    for (Index k = 0; k < model.K; ++k) {
        for (Index i = 0; i < model.bins(); ++i)
            kl += detail::gig_gamma_kl(model.a0, model.a0, model.rho_t(i, k), model.tau_t(i, k),
                                       model.Et(i, k), model.Et_inv(i, k));
        for (Index j = 0; j < model.frames(); ++j)
            kl += detail::gig_gamma_kl(model.b0, model.b0, model.rho_v(k, j), model.tau_v(k, j),
                                       model.Ev(k, j), model.Ev_inv(k, j));
        kl += detail::gig_gamma_kl(model.c0, model.cm, model.rho_z(k), model.tau_z(k),
                                   model.Ez(k), model.Ez_inv(k));
    }
    return data + kl;
}

/// Bound with freshly tightened auxiliaries.
inline double variational_bound(const VBSourceModel& model, const Eigen::MatrixXd& power,
                                BetaTightening tightening = BetaTightening::minimizer) {
    return variational_bound(model, power, compute_auxiliaries(model, tightening));
}

/// One coordinate-ascent sweep (t, v, z) with auxiliaries recomputed before each update.
inline void vb_sweep(VBSourceModel& model, const Eigen::MatrixXd& power,
                     BetaTightening tightening = BetaTightening::minimizer) {
    update_t(model, power, compute_auxiliaries(model, tightening));
    update_v(model, power, compute_auxiliaries(model, tightening));
    update_z(model, power, compute_auxiliaries(model, tightening));
}

} // namespace bnpbss
