#pragma once

// Auxiliary-function demixing: weighted covariances, iterative-projection row
// updates, the negative log-likelihood Q, and projection back.
//
//   Q = -2 J sum_i log|det W_i| + sum_ijm ( log r_ijm + |y_ijm|^2 / r_ijm )

#include "bnpbss/core.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace bnpbss {

/// V = (1/J') sum_j x_ij x_ij^H / r(i, j) over the frames kept by frame_mask
/// (all frames when the mask is null; J' is the number of kept frames).
inline Eigen::MatrixXcd weighted_covariance(const Spectrogram& X, const Eigen::MatrixXd& r,
                                            Index i,
                                            const std::vector<bool>* frame_mask = nullptr) {
    if (r.rows() != X.bins() || r.cols() != X.frames())
        throw InvalidArgument("weighted_covariance: variance shape does not match spectrogram");
    const Index M = X.streams();
    Eigen::MatrixXcd V = Eigen::MatrixXcd::Zero(M, M);
    Index used = 0;
    for (Index j = 0; j < X.frames(); ++j) {
        if (frame_mask && !(*frame_mask)[static_cast<std::size_t>(j)]) continue;
        const double w = r(i, j);
        if (!(w > 0.0))
            throw InvalidArgument("weighted_covariance: non-positive variance at (" +
                                  std::to_string(i) + ", " + std::to_string(j) + ")");
        const auto x = X.vec(i, j);
        V.noalias() += (x * x.adjoint()) / w;
        ++used;
    }
    if (used > 0) V /= static_cast<double>(used);
    return V;
}

namespace detail {

inline bool try_ip(const Eigen::MatrixXcd& W, const Eigen::MatrixXcd& V, Index m,
                   Eigen::VectorXcd& w) {
    const Eigen::FullPivLU<Eigen::MatrixXcd> lu(W * V);
    if (!lu.isInvertible()) return false;
    w = lu.solve(Eigen::VectorXcd::Unit(W.rows(), m));
    const double s = (w.adjoint() * V * w)(0, 0).real();
    if (!(s > 0.0) || !std::isfinite(s)) return false;
    w /= std::sqrt(s);
    return w.allFinite();
}

} // namespace detail

/// New demixing filter w_{i,m} (so that y_m = w^H x):
///   w <- (W V)^{-1} e_m,  w <- w / sqrt(w^H V w).
/// A singular W V is retried once with V loaded by 1e-10 trace(V)/M on the diagonal.
inline Eigen::VectorXcd ip_update(const Eigen::MatrixXcd& W, const Eigen::MatrixXcd& V, Index m) {
    if (m < 0 || m >= W.rows()) throw IndexError("ip_update: source index out of range");
    Eigen::VectorXcd w;
    if (detail::try_ip(W, V, m, w)) return w;
    const Index M = V.rows();
    double load = 1e-10 * V.trace().real() / static_cast<double>(M);
    if (!(load > 0.0)) load = 1e-10;
    const Eigen::MatrixXcd Vl = V + load * Eigen::MatrixXcd::Identity(M, M);
    if (detail::try_ip(W, Vl, m, w)) return w;
    throw SingularMatrix("ip_update: W V is singular for source " + std::to_string(m));
}

/// y_ij = W_i x_ij.
inline Spectrogram demix(const DemixingStack& W, const Spectrogram& X) {
    if (W.bins() != X.bins() || W.streams() != X.streams())
        throw InvalidArgument("demix: demixing stack does not match spectrogram");
    Spectrogram Y(X.bins(), X.frames(), X.streams(), X.window_len(), X.hop(), X.sample_rate());
    for (Index i = 0; i < X.bins(); ++i) {
        const auto& Wi = W.matrices[static_cast<std::size_t>(i)];
        for (Index j = 0; j < X.frames(); ++j) Y.vec(i, j).noalias() = Wi * X.vec(i, j);
    }
    return Y;
}

/// log|det W| via LU; -inf for a singular matrix.
inline double log_abs_det(const Eigen::MatrixXcd& W) {
    const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(W);
    double s = 0.0;
    const auto& LU = lu.matrixLU();
    for (Index k = 0; k < LU.rows(); ++k) {
        const double a = std::abs(LU(k, k));
        if (!(a > 0.0)) return -std::numeric_limits<double>::infinity();
        s += std::log(a);
    }
    return s;
}

/// Q for demixed spectra Y and per-source variances r[m] (I x J each).
/// Returns +inf when some W_i is singular.
inline double cost(const DemixingStack& W, const Spectrogram& Y,
                   const std::vector<Eigen::MatrixXd>& r) {
    if (static_cast<Index>(r.size()) != Y.streams())
        throw InvalidArgument("cost: need one variance matrix per source");
    const double J = static_cast<double>(Y.frames());
    double q = 0.0;
    for (const auto& Wi : W.matrices) {
        const double ld = log_abs_det(Wi);
        if (!std::isfinite(ld)) return std::numeric_limits<double>::infinity();
        q -= 2.0 * J * ld;
    }
    for (Index m = 0; m < Y.streams(); ++m) {
        const auto& rm = r[static_cast<std::size_t>(m)];
        if (rm.rows() != Y.bins() || rm.cols() != Y.frames())
            throw InvalidArgument("cost: variance shape does not match spectrogram");
        for (Index i = 0; i < Y.bins(); ++i)
            for (Index j = 0; j < Y.frames(); ++j) {
                const double v = rm(i, j);
                if (!(v > 0.0)) throw InvalidArgument("cost: non-positive variance");
                q += std::log(v) + std::norm(Y(i, j, m)) / v;
            }
    }
    return q;
}

/// Updates every row of W_i, source by source, rebuilding V_{i,m} from r[m].
inline void ip_update_bin(Eigen::MatrixXcd& Wi, const Spectrogram& X,
                          const std::vector<Eigen::MatrixXd>& r, Index i,
                          const std::vector<bool>* frame_mask = nullptr) {
    for (Index m = 0; m < X.streams(); ++m) {
        const Eigen::MatrixXcd V = weighted_covariance(X, r[static_cast<std::size_t>(m)], i, frame_mask);
        try {
            Wi.row(m) = ip_update(Wi, V, m).adjoint();
        } catch (const SingularMatrix& e) {
            throw SingularMatrix(std::string(e.what()) + " at bin " + std::to_string(i));
        }
    }
}

/// One full sweep over all bins.
inline void ip_sweep(DemixingStack& W, const Spectrogram& X, const std::vector<Eigen::MatrixXd>& r,
                     const std::vector<bool>* frame_mask = nullptr) {
    for (Index i = 0; i < X.bins(); ++i)
        ip_update_bin(W.matrices[static_cast<std::size_t>(i)], X, r, i, frame_mask);
}

/// Source images on the reference channel: y_img_ijm = [W_i^{-1}]_{ref,m} y_ijm.
inline Spectrogram project_back(const DemixingStack& W, const Spectrogram& Y, Index ref) {
    if (ref < 0 || ref >= Y.streams()) throw IndexError("project_back: reference channel out of range");
    if (W.bins() != Y.bins()) throw InvalidArgument("project_back: stack does not match spectrogram");
    Spectrogram out(Y.bins(), Y.frames(), Y.streams(), Y.window_len(), Y.hop(), Y.sample_rate());
    for (Index i = 0; i < Y.bins(); ++i) {
        const Eigen::FullPivLU<Eigen::MatrixXcd> lu(W.matrices[static_cast<std::size_t>(i)]);
        if (!lu.isInvertible())
            throw SingularMatrix("project_back: W is singular at bin " + std::to_string(i));
        const Eigen::RowVectorXcd a = lu.inverse().row(ref);
        for (Index j = 0; j < Y.frames(); ++j)
            for (Index m = 0; m < Y.streams(); ++m) out(i, j, m) = a(m) * Y(i, j, m);
    }
    return out;
}

} // namespace bnpbss
