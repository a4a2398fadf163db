#pragma once

// Itakura-Saito NMF with the majorization-minimization multiplicative
// updates used by ILRMA (square-root exponent, monotone in the divergence).

#include "bnpbss/core.hpp"

#include <cstdint>
#include <random>

namespace bnpbss {

struct NmfModel {
    Eigen::MatrixXd T; // I x K bases
    Eigen::MatrixXd V; // K x J activations

    Eigen::MatrixXd variance() const { return T * V; }
};

inline constexpr double kNmfFloor = 1e-12;

inline NmfModel init_nmf(Index bins, Index frames, Index K, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    NmfModel m;
    m.T.resize(bins, K);
    m.V.resize(K, frames);
    for (Index c = 0; c < K; ++c)
        for (Index r = 0; r < bins; ++r) m.T(r, c) = std::max(u(rng), kNmfFloor);
    for (Index c = 0; c < frames; ++c)
        for (Index r = 0; r < K; ++r) m.V(r, c) = std::max(u(rng), kNmfFloor);
    return m;
}

/// sum_ij (p/r - log(p/r) - 1). Entries with p == 0 contribute p/r - ... with
/// the log term dropped, which keeps the value finite.
inline double is_divergence(const Eigen::MatrixXd& power, const Eigen::MatrixXd& model) {
    double d = 0.0;
    for (Index j = 0; j < power.cols(); ++j)
        for (Index i = 0; i < power.rows(); ++i) {
            const double q = power(i, j) / model(i, j);
            d += q > 0.0 ? q - std::log(q) - 1.0 : 0.0;
        }
    return d;
}

/// One sweep: T then V.
///   T <- T * sqrt( ((P / R^2) V^T) / ((1 / R) V^T) )
///   V <- V * sqrt( (T^T (P / R^2)) / (T^T (1 / R)) )
inline void nmf_is_update(NmfModel& nmf, const Eigen::MatrixXd& power) {
    if (power.rows() != nmf.T.rows() || power.cols() != nmf.V.cols())
        throw InvalidArgument("nmf_is_update: power shape does not match the model");

    Eigen::MatrixXd r = nmf.variance().cwiseMax(kNmfFloor);
    Eigen::MatrixXd inv_r = r.cwiseInverse();
    Eigen::MatrixXd p_r2 = power.cwiseProduct(inv_r.cwiseAbs2());
    nmf.T = nmf.T.cwiseProduct(
                    (p_r2 * nmf.V.transpose()).cwiseQuotient(inv_r * nmf.V.transpose()).cwiseSqrt())
                .cwiseMax(kNmfFloor);

    r = nmf.variance().cwiseMax(kNmfFloor);
    inv_r = r.cwiseInverse();
    p_r2 = power.cwiseProduct(inv_r.cwiseAbs2());
    nmf.V = nmf.V.cwiseProduct(
                    (nmf.T.transpose() * p_r2).cwiseQuotient(nmf.T.transpose() * inv_r).cwiseSqrt())
                .cwiseMax(kNmfFloor);
}

} // namespace bnpbss
