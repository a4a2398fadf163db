#pragma once

// Source-to-distortion/interference/artifact ratios with time-invariant
// filter distortion of `filter_len` taps.
//
// The estimate (zero-padded by filter_len - 1 samples) is split as
//   estimate = s_target + e_interf + e_artif
// where s_target is its least-squares projection on delayed copies of the
// true source, s_target + e_interf the projection on delayed copies of all
// references, and e_artif the residual.

#include "bnpbss/core.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace bnpbss {

inline constexpr double kDbCap = 250.0;

struct Decomposition {
    Eigen::VectorXd s_target;
    Eigen::VectorXd e_interf;
    Eigen::VectorXd e_artif;
    bool regularized = false;
};

struct EvalScores {
    // Indexed by estimate.
    std::vector<double> sdr, sir, sar;
    /// permutation[e] is the reference matched to estimate e.
    std::vector<int> permutation;
    bool regularized = false;
};

/// 10 log10(num / den) clipped to [-250, 250].
inline double capped_db(double num, double den) {
    if (!(den > 0.0)) return num > 0.0 ? kDbCap : 0.0;
    if (!(num > 0.0)) return -kDbCap;
    return std::clamp(10.0 * std::log10(num / den), -kDbCap, kDbCap);
}

namespace detail {

inline Index next_pow2(Index n) {
    Index p = 1;
    while (p < n) p <<= 1;
    return p;
}

/// Shared state for projecting several estimates on the same references.
class ProjectionBasis {
  public:
    ProjectionBasis(const std::vector<Eigen::VectorXd>& refs, Index filter_len)
        : refs_(refs), L_(filter_len) {
        if (refs.empty()) throw InvalidArgument("bss_eval: need at least one reference");
        if (filter_len < 1) throw InvalidArgument("bss_eval: filter length must be >= 1");
        T_ = refs.front().size();
        for (const auto& r : refs)
            if (r.size() != T_) throw InvalidArgument("bss_eval: references differ in length");
        if (T_ < 1) throw InvalidArgument("bss_eval: empty references");
        nfft_ = next_pow2(T_ + L_);
        fft_.SetFlag(Eigen::FFT<double>::HalfSpectrum);
        for (const auto& r : refs) spectra_.push_back(forward(r));

        const Index N = static_cast<Index>(refs.size());
        gram_.resize(N * L_, N * L_);
        for (Index a = 0; a < N; ++a)
            for (Index b = a; b < N; ++b) {
                const std::vector<double> c = xcorr(spectra_[a], spectra_[b]);
                // c_ab(d) = sum_u r_a[u] r_b[u + d]; entry ((a,l1),(b,l2)) = c_ab(l1 - l2).
                for (Index l1 = 0; l1 < L_; ++l1)
                    for (Index l2 = 0; l2 < L_; ++l2) {
                        const double v = lag(c, l1 - l2);
                        gram_(a * L_ + l1, b * L_ + l2) = v;
                        gram_(b * L_ + l2, a * L_ + l1) = v;
                    }
            }
        full_ = factor(gram_);
        for (Index n = 0; n < N; ++n) blocks_.push_back(factor(gram_.block(n * L_, n * L_, L_, L_)));
    }

    Decomposition decompose(const Eigen::VectorXd& estimate, Index target) {
        if (estimate.size() != T_) throw InvalidArgument("bss_eval: estimate length differs from references");
        const Index N = static_cast<Index>(refs_.size());
        if (target < 0 || target >= N) throw IndexError("bss_eval: target index out of range");
        const auto est = forward(estimate);
        Eigen::VectorXd rhs(N * L_);
        for (Index a = 0; a < N; ++a) {
            const std::vector<double> c = xcorr(spectra_[a], est);
            for (Index l = 0; l < L_; ++l) rhs(a * L_ + l) = lag(c, l);
        }
        const Eigen::VectorXd h_all = full_.solver.solve(rhs);
        const Eigen::VectorXd h_target = blocks_[target].solver.solve(rhs.segment(target * L_, L_));

        const Index out_len = T_ + L_ - 1;
        Eigen::VectorXd all = Eigen::VectorXd::Zero(out_len);
        for (Index a = 0; a < N; ++a) all += filter(a, h_all.segment(a * L_, L_));
        Decomposition d;
        d.s_target = filter(target, h_target);
        d.e_interf = all - d.s_target;
        Eigen::VectorXd padded = Eigen::VectorXd::Zero(out_len);
        padded.head(T_) = estimate;
        d.e_artif = padded - all;
        d.regularized = full_.regularized || blocks_[target].regularized;
        return d;
    }

    Index num_refs() const { return static_cast<Index>(refs_.size()); }

  private:
    struct Factor {
        Eigen::LDLT<Eigen::MatrixXd> solver;
        bool regularized = false;
    };

    static Factor factor(const Eigen::MatrixXd& g) {
        Factor f;
        f.solver.compute(g);
        const auto& D = f.solver.vectorD();
        const double scale = std::max(D.cwiseAbs().maxCoeff(), 1e-300);
        if (f.solver.info() != Eigen::Success || D.minCoeff() <= 1e-12 * scale) {
            const double ridge = 1e-10 * std::max(g.trace() / static_cast<double>(g.rows()), 1e-300);
            f.solver.compute(g + ridge * Eigen::MatrixXd::Identity(g.rows(), g.cols()));
            f.regularized = true;
        }
        return f;
    }

    std::vector<cdouble> forward(const Eigen::VectorXd& x) {
        std::vector<double> buf(static_cast<std::size_t>(nfft_), 0.0);
        std::copy(x.data(), x.data() + x.size(), buf.begin());
        std::vector<cdouble> out;
        fft_.fwd(out, buf);
        return out;
    }

    std::vector<double> xcorr(const std::vector<cdouble>& a, const std::vector<cdouble>& b) {
        std::vector<cdouble> prod(a.size());
        for (std::size_t k = 0; k < a.size(); ++k) prod[k] = std::conj(a[k]) * b[k];
        std::vector<double> out;
        fft_.inv(out, prod, nfft_);
        return out;
    }

    double lag(const std::vector<double>& c, Index d) const {
        return c[static_cast<std::size_t>(d >= 0 ? d : nfft_ + d)];
    }

    /// sum_l h[l] r_a[t - l], t in [0, T + L - 1).
    Eigen::VectorXd filter(Index a, const Eigen::VectorXd& h) {
        const Index out_len = T_ + L_ - 1;
        Eigen::VectorXd y = Eigen::VectorXd::Zero(out_len);
        if (L_ <= 16) {
            const auto& r = refs_[static_cast<std::size_t>(a)];
            for (Index l = 0; l < L_; ++l) y.segment(l, T_) += h(l) * r;
            return y;
        }
        std::vector<double> hb(static_cast<std::size_t>(nfft_), 0.0);
        std::copy(h.data(), h.data() + L_, hb.begin());
        std::vector<cdouble> hs;
        fft_.fwd(hs, hb);
        const auto& rs = spectra_[static_cast<std::size_t>(a)];
        for (std::size_t k = 0; k < hs.size(); ++k) hs[k] *= rs[k];
        std::vector<double> out;
        fft_.inv(out, hs, nfft_);
        for (Index t = 0; t < out_len; ++t) y(t) = out[static_cast<std::size_t>(t)];
        return y;
    }

    std::vector<Eigen::VectorXd> refs_;
    Index L_ = 1, T_ = 0, nfft_ = 1;
    Eigen::FFT<double> fft_;
    std::vector<std::vector<cdouble>> spectra_;
    Eigen::MatrixXd gram_;
    Factor full_;
    std::vector<Factor> blocks_;
};

inline void permutations_of(std::vector<int>& perm, std::size_t k, std::vector<std::vector<int>>& out) {
    if (k == perm.size()) {
        out.push_back(perm);
        return;
    }
    for (std::size_t i = k; i < perm.size(); ++i) {
        std::swap(perm[k], perm[i]);
        permutations_of(perm, k + 1, out);
        std::swap(perm[k], perm[i]);
    }
}

} // namespace detail

inline Decomposition decompose(const Eigen::VectorXd& estimate,
                               const std::vector<Eigen::VectorXd>& references, Index target,
                               Index filter_len = 512) {
    detail::ProjectionBasis basis(references, filter_len);
    return basis.decompose(estimate, target);
}

struct Ratios {
    double sdr, sir, sar;
};

inline Ratios ratios(const Decomposition& d) {
    const double target = d.s_target.squaredNorm();
    return {capped_db(target, (d.e_interf + d.e_artif).squaredNorm()),
            capped_db(target, d.e_interf.squaredNorm()),
            capped_db((d.s_target + d.e_interf).squaredNorm(), d.e_artif.squaredNorm())};
}

/// Scores every estimate against every reference and keeps the assignment
/// (over all M! permutations, M <= 4) with the largest mean SIR.
inline EvalScores evaluate(const std::vector<Eigen::VectorXd>& estimates,
                           const std::vector<Eigen::VectorXd>& references, Index filter_len = 512) {
    const std::size_t M = references.size();
    if (estimates.size() != M)
        throw InvalidArgument("evaluate: " + std::to_string(estimates.size()) + " estimates vs " +
                              std::to_string(M) + " references");
    if (M == 0 || M > 4) throw InvalidArgument("evaluate: supports 1 to 4 sources");
    for (const auto& e : estimates)
        if (e.size() != references.front().size())
            throw InvalidArgument("evaluate: estimate and reference lengths differ");

    detail::ProjectionBasis basis(references, filter_len);
    std::vector<std::vector<Ratios>> table(M, std::vector<Ratios>(M));
    bool regularized = false;
    for (std::size_t e = 0; e < M; ++e)
        for (std::size_t n = 0; n < M; ++n) {
            const Decomposition d = basis.decompose(estimates[e], static_cast<Index>(n));
            regularized = regularized || d.regularized;
            table[e][n] = ratios(d);
        }

    std::vector<int> perm(M);
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<std::vector<int>> all;
    detail::permutations_of(perm, 0, all);
    std::sort(all.begin(), all.end());
    double best = -std::numeric_limits<double>::infinity();
    std::vector<int> chosen;
    for (const auto& p : all) {
        double mean = 0.0;
        for (std::size_t e = 0; e < M; ++e) mean += table[e][static_cast<std::size_t>(p[e])].sir;
        if (mean > best) {
            best = mean;
            chosen = p;
        }
    }
    EvalScores s;
    s.permutation = chosen;
    s.regularized = regularized;
    for (std::size_t e = 0; e < M; ++e) {
        const Ratios& r = table[e][static_cast<std::size_t>(chosen[e])];
        s.sdr.push_back(r.sdr);
        s.sir.push_back(r.sir);
        s.sar.push_back(r.sar);
    }
    return s;
}

/// Convenience overload taking one channel per signal.
inline EvalScores evaluate(const MultichannelSignal& estimates, const MultichannelSignal& references,
                           Index filter_len = 512) {
    std::vector<Eigen::VectorXd> e, r;
    for (Index c = 0; c < estimates.channels(); ++c) e.emplace_back(estimates.samples.row(c).transpose());
    for (Index c = 0; c < references.channels(); ++c) r.emplace_back(references.samples.row(c).transpose());
    return evaluate(e, r, filter_len);
}

} // namespace bnpbss
