#pragma once

// Synthetic mixtures: convolutive or instantaneous mixing, exponentially
// decaying noise RIRs, and toy sources whose power spectrogram has a known
// NMF rank.

#include "bnpbss/core.hpp"
#include "bnpbss/stft.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

namespace bnpbss {

struct MixSpec {
    std::vector<Eigen::VectorXd> sources;          ///< N mono sources, equal length
    std::vector<Eigen::MatrixXd> rirs;             ///< per source n: M x taps
    std::optional<Eigen::MatrixXd> mixing_matrix;  ///< M x N, instantaneous case
    std::uint64_t seed = 0;
};

namespace detail {

/// Full linear convolution of x with h, truncated to x.size().
inline Eigen::VectorXd convolve_truncated(const Eigen::VectorXd& x, const Eigen::VectorXd& h) {
    const Index n = x.size();
    Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
    if (h.size() <= 64) {
        for (Index k = 0; k < h.size() && k < n; ++k)
            if (h(k) != 0.0) y.tail(n - k) += h(k) * x.head(n - k);
        return y;
    }
    Index nfft = 1;
    while (nfft < n + h.size()) nfft <<= 1;
    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    std::vector<double> xb(static_cast<std::size_t>(nfft), 0.0), hb(static_cast<std::size_t>(nfft), 0.0);
    std::copy(x.data(), x.data() + n, xb.begin());
    std::copy(h.data(), h.data() + h.size(), hb.begin());
    std::vector<cdouble> xs, hs;
    fft.fwd(xs, xb);
    fft.fwd(hs, hb);
    for (std::size_t k = 0; k < xs.size(); ++k) xs[k] *= hs[k];
    std::vector<double> out;
    fft.inv(out, xs, nfft);
    for (Index t = 0; t < n; ++t) y(t) = out[static_cast<std::size_t>(t)];
    return y;
}

} // namespace detail

/// mixture_m = sum_n rir_{m,n} * source_n (truncated to the source length),
/// or mixture = A * sources in the instantaneous case.
inline MultichannelSignal convolve_mix(const MixSpec& spec, int sample_rate = 16000) {
    const std::size_t N = spec.sources.size();
    if (N == 0) throw InvalidArgument("convolve_mix: no sources");
    const Index T = spec.sources.front().size();
    for (const auto& s : spec.sources)
        if (s.size() != T) throw InvalidArgument("convolve_mix: sources differ in length");
    if (T < 1) throw InvalidArgument("convolve_mix: empty sources");

    MultichannelSignal out;
    out.sample_rate = sample_rate;
    if (spec.mixing_matrix) {
        const auto& A = *spec.mixing_matrix;
        if (A.cols() != static_cast<Index>(N))
            throw InvalidArgument("convolve_mix: mixing matrix has wrong column count");
        out.samples = RowMatrixXd::Zero(A.rows(), T);
        for (Index m = 0; m < A.rows(); ++m)
            for (std::size_t n = 0; n < N; ++n)
                out.samples.row(m) += A(m, static_cast<Index>(n)) * spec.sources[n].transpose();
        return out;
    }
    if (spec.rirs.size() != N) throw InvalidArgument("convolve_mix: need one RIR set per source");
    const Index M = spec.rirs.front().rows();
    for (const auto& r : spec.rirs) {
        if (r.rows() != M) throw InvalidArgument("convolve_mix: RIR sets disagree on microphone count");
        if (r.cols() >= T) throw InvalidArgument("convolve_mix: RIR must be shorter than the sources");
    }
    out.samples = RowMatrixXd::Zero(M, T);
    for (std::size_t n = 0; n < N; ++n)
        for (Index m = 0; m < M; ++m)
            out.samples.row(m) +=
                detail::convolve_truncated(spec.sources[n], spec.rirs[n].row(m).transpose()).transpose();
    return out;
}

/// Each source as observed on microphone `ref` alone (its spatial image),
/// the natural reference for scoring projected-back estimates.
inline MultichannelSignal reference_images(const MixSpec& spec, Index ref, int sample_rate = 16000) {
    const std::size_t N = spec.sources.size();
    if (N == 0) throw InvalidArgument("reference_images: no sources");
    const Index T = spec.sources.front().size();
    MultichannelSignal out;
    out.sample_rate = sample_rate;
    out.samples = RowMatrixXd::Zero(static_cast<Index>(N), T);
    for (std::size_t n = 0; n < N; ++n) {
        if (spec.mixing_matrix) {
            out.samples.row(static_cast<Index>(n)) =
                (*spec.mixing_matrix)(ref, static_cast<Index>(n)) * spec.sources[n].transpose();
        } else {
            if (spec.rirs.size() != N || ref < 0 || ref >= spec.rirs[n].rows())
                throw InvalidArgument("reference_images: RIR sets do not cover the reference channel");
            out.samples.row(static_cast<Index>(n)) =
                detail::convolve_truncated(spec.sources[n], spec.rirs[n].row(ref).transpose()).transpose();
        }
    }
    return out;
}

/// Unit direct-path tap followed by white noise under the envelope
/// exp(-6.9078 t / T60) (-60 dB at T60). The tail is scaled to carry the same
/// energy as the direct path (0 dB direct-to-reverberant ratio).
inline Eigen::VectorXd synth_exponential_rir(double t60, Index taps, std::uint64_t seed,
                                             int sample_rate = 16000) {
    if (!(t60 > 0.0)) throw InvalidArgument("synth_exponential_rir: T60 must be positive");
    if (taps < 1) throw InvalidArgument("synth_exponential_rir: need at least one tap");
    Eigen::VectorXd h = Eigen::VectorXd::Zero(taps);
    h(0) = 1.0;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    const double decay = std::log(1000.0) / (t60 * sample_rate); // per sample
    double energy = 0.0;
    for (Index n = 1; n < taps; ++n) {
        h(n) = noise(rng) * std::exp(-decay * static_cast<double>(n));
        energy += h(n) * h(n);
    }
    if (energy > 1e-300) h.tail(taps - 1) /= std::sqrt(energy);
    return h;
}

/// Envelope value of synth_exponential_rir at time t (seconds), relative to t = 0.
inline double rir_envelope(double t, double t60) { return std::exp(-std::log(1000.0) * t / t60); }

/// RIR sets for a determined M x N setup: every path is an independent
/// exponential RIR, with the direct path of source n delayed at microphone m
/// by m * delay_n samples and cross paths attenuated by cross_gain.
inline std::vector<Eigen::MatrixXd> room_rirs(Index mics, Index sources, double t60, Index taps,
                                              std::uint64_t seed, int sample_rate = 16000,
                                              double cross_gain = 0.7) {
    std::vector<Eigen::MatrixXd> out;
    const Index max_delay = 4 * mics;
    for (Index n = 0; n < sources; ++n) {
        Eigen::MatrixXd set = Eigen::MatrixXd::Zero(mics, taps);
        // Sources spread over opposite sides of the array.
        const Index delay_step = (n % 2 == 0 ? 1 : -1) * (2 + n / 2);
        for (Index m = 0; m < mics; ++m) {
            const Index d = max_delay / 2 + m * delay_step;
            const Eigen::VectorXd h = synth_exponential_rir(
                t60, taps - max_delay, seed * 131 + static_cast<std::uint64_t>(n * mics + m), sample_rate);
            const double g = (m == n % mics) ? 1.0 : cross_gain;
            set.row(m).segment(std::clamp<Index>(d, 0, max_delay), h.size()) = g * h.transpose();
        }
        out.push_back(std::move(set));
    }
    return out;
}

struct ToySourceSpec {
    int rank = 2;
    int window_len = 8192; ///< STFT window used for the spectral model; I = window_len/2 + 1
    int hop = 2048;
    double duration = 10.0; ///< seconds
    int sample_rate = 16000;
    std::uint64_t seed = 0;
    double rms = 0.1;
    double phase_step = 0.5; ///< std of the per-frame phase walk of each basis, radians
};

struct ToySource {
    MultichannelSignal signal; ///< mono
    Eigen::MatrixXd T;         ///< I x rank spectral patterns
    Eigen::MatrixXd V;         ///< rank x J activations
};

/// Source whose STFT power is proportional to T V.
///
/// Components sit on every third bin, each owned by a single basis, as
/// sinusoids at the bin centre frequency. A periodic Hamming window leaks a
/// bin-centred sinusoid into its two neighbours only, so every analysed bin
/// sees exactly one component and the power stays separable (no beating
/// between neighbours, no cross terms between bases).
///
/// Every basis is a harmonic comb (Gaussian peaks 1.5 bins wide at multiples
/// of its own fundamental, amplitude 1/h); a grid bin goes to the basis with
/// the largest comb value, and bins outside every comb are dealt round-robin
/// as a -40 dB floor. Fundamentals are drawn at least 4 bins apart.
/// Activations are piecewise-constant notes, switched on with probability
/// 1/2 for 2-8 frames at a time, with a -30 dB floor. Each basis carries a
/// Gaussian random-walk phase common to its bins. T is reported on the
/// analysis grid, including the neighbour leakage.
inline ToySource synth_nmf_source(const ToySourceSpec& spec) {
    if (spec.rank < 1) throw InvalidArgument("synth_nmf_source: rank must be >= 1");
    if (!(spec.phase_step >= 0.0)) throw InvalidArgument("synth_nmf_source: phase_step must be >= 0");
    const StftPlan plan = StftPlan::hamming(spec.window_len, spec.hop);
    const auto n = static_cast<Index>(std::llround(spec.duration * spec.sample_rate));
    const Index I = plan.bins();
    const Index J = plan.frames_for(n);
    const Index R = spec.rank;
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    const double bin_hz = static_cast<double>(spec.sample_rate) / spec.window_len;
    Eigen::MatrixXd comb = Eigen::MatrixXd::Zero(I, R);
    std::vector<double> f0s;
    for (Index k = 0; k < R; ++k) {
        double f0 = 0.0;
        for (int attempt = 0; attempt < 1000; ++attempt) {
            f0 = 80.0 + 520.0 * unif(rng);
            bool clash = false;
            for (double g : f0s) clash = clash || std::abs(g - f0) < 4.0 * bin_hz;
            if (!clash) break;
        }
        f0s.push_back(f0);
        for (int h = 1; h * f0 < 0.45 * spec.sample_rate; ++h) {
            const double centre = h * f0 / bin_hz;
            const auto lo = std::max<Index>(0, static_cast<Index>(centre) - 6);
            const auto hi = std::min<Index>(I - 1, static_cast<Index>(centre) + 7);
            for (Index i = lo; i <= hi; ++i) {
                const double d = (static_cast<double>(i) - centre) / 1.5;
                comb(i, k) += std::exp(-0.5 * d * d) / h;
            }
        }
    }

    // Source-side pattern on the grid s = 3, 6, ..., I - 2.
    Eigen::MatrixXd src = Eigen::MatrixXd::Zero(I, R);
    Index slot = 0;
    for (Index s = 3; s <= I - 2; s += 3) {
        Index owner = 0;
        comb.row(s).maxCoeff(&owner);
        if (comb(s, owner) < 1e-3) owner = slot++ % R;
        src(s, owner) = comb(s, owner) + 1e-4;
    }
    const double leak = std::pow(0.23 / 0.54, 2);
    ToySource out;
    out.T = src;
    out.T.topRows(I - 1) += leak * src.bottomRows(I - 1);
    out.T.bottomRows(I - 1) += leak * src.topRows(I - 1);

    out.V = Eigen::MatrixXd::Constant(R, J, 1e-3);
    std::uniform_int_distribution<int> len(2, 8);
    std::gamma_distribution<double> amp(2.0, 0.5);
    for (Index k = 0; k < R; ++k) {
        Index j = 0;
        while (j < J) {
            const int l = len(rng);
            const bool on = unif(rng) < 0.5;
            const double a = amp(rng);
            for (Index t = j; t < std::min<Index>(J, j + l); ++t)
                if (on) out.V(k, t) += a;
            j += l;
        }
    }

    // Per-basis phase walk shared by all of the basis's bins. It keeps each
    // analysed bin separable while decorrelating sources that share a bin.
    Eigen::MatrixXd walk = Eigen::MatrixXd::Zero(R, J);
    if (spec.phase_step > 0.0) {
        std::normal_distribution<double> step(0.0, spec.phase_step);
        for (Index k = 0; k < R; ++k)
            for (Index j = 1; j < J; ++j) walk(k, j) = walk(k, j - 1) + step(rng);
    }

    Spectrogram S(I, J, 1, spec.window_len, spec.hop, spec.sample_rate);
    for (Index s = 3; s <= I - 2; s += 3) {
        Index k = 0;
        src.row(s).maxCoeff(&k);
        const double phase0 = 2.0 * std::numbers::pi * unif(rng);
        const double advance = 2.0 * std::numbers::pi * static_cast<double>(s) * spec.hop / spec.window_len;
        for (Index j = 0; j < J; ++j)
            S(s, j, 0) = std::polar(std::sqrt(src(s, k) * out.V(k, j)), phase0 + advance * static_cast<double>(j) + walk(k, j));
    }
    RowMatrixXd signal = istft(S, plan, n).samples;
    const double rms = std::sqrt(signal.squaredNorm() / static_cast<double>(n));
    if (rms > 0.0) signal *= spec.rms / rms;
    out.signal = MultichannelSignal(std::move(signal), spec.sample_rate);
    return out;
}

} // namespace bnpbss
