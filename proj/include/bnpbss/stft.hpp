#pragma once

// Short-time Fourier analysis/synthesis.
//
// Analysis uses a periodic Hamming window and an unnormalized FFT of length L.
// Synthesis is weighted overlap-add with the dual window w / sum_j w^2, which
// reconstructs exactly wherever at least one frame covers a sample.

#include "bnpbss/core.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <numbers>
#include <vector>

namespace bnpbss {

struct StftPlan {
    std::vector<double> window;
    int hop = 0;

    int window_len() const { return static_cast<int>(window.size()); }
    int fft_len() const { return window_len(); }
    Index bins() const { return window_len() / 2 + 1; }

    /// Periodic (DFT-even) Hamming window of `window_len` samples.
    static StftPlan hamming(int window_len, int hop) {
        if (window_len < 2 || window_len % 2 != 0)
            throw InvalidArgument("window length must be even and >= 2");
        if (hop < 1 || hop > window_len) throw InvalidArgument("require 0 < hop <= window length");
        StftPlan plan;
        plan.hop = hop;
        plan.window.resize(static_cast<std::size_t>(window_len));
        for (int n = 0; n < window_len; ++n)
            plan.window[static_cast<std::size_t>(n)] =
                0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / window_len);
        return plan;
    }

    /// Rectangular window, used as a cross-check against a direct DFT.
    static StftPlan rectangular(int window_len, int hop) {
        StftPlan plan = hamming(window_len, hop);
        std::fill(plan.window.begin(), plan.window.end(), 1.0);
        return plan;
    }

    /// Window/hop given in milliseconds; the window is rounded to an even
    /// sample count.
    static StftPlan from_ms(double window_ms, double hop_ms, int sample_rate) {
        int len = static_cast<int>(std::lround(window_ms * sample_rate / 1000.0));
        len += len % 2;
        const int hop = static_cast<int>(std::lround(hop_ms * sample_rate / 1000.0));
        return hamming(len, hop);
    }

    /// Number of frames for a signal of n samples; the tail is zero-padded
    /// so that the final partial frame is kept.
    Index frames_for(Index n) const {
        const Index L = window_len();
        if (n < L) throw InvalidArgument("signal shorter than one analysis window");
        return 1 + (n - L + hop - 1) / hop;
    }
};

inline Spectrogram stft(const MultichannelSignal& signal, const StftPlan& plan) {
    signal.validate();
    const Index L = plan.window_len();
    const Index J = plan.frames_for(signal.num_samples());
    const Index I = plan.bins();
    const Index M = signal.channels();
    Spectrogram spec(I, J, M, static_cast<int>(L), plan.hop, signal.sample_rate);

    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    std::vector<double> frame(static_cast<std::size_t>(L));
    std::vector<cdouble> bins;
    for (Index m = 0; m < M; ++m) {
        for (Index j = 0; j < J; ++j) {
            const Index start = j * plan.hop;
            for (Index n = 0; n < L; ++n) {
                const Index t = start + n;
                const double x = t < signal.num_samples() ? signal.samples(m, t) : 0.0;
                frame[static_cast<std::size_t>(n)] = plan.window[static_cast<std::size_t>(n)] * x;
            }
            fft.fwd(bins, frame);
            for (Index i = 0; i < I; ++i) spec(i, j, m) = bins[static_cast<std::size_t>(i)];
        }
    }
    return spec;
}

/// Inverse of stft for a spectrogram produced with the same plan.
inline MultichannelSignal istft(const Spectrogram& spec, const StftPlan& plan, Index out_len) {
    const Index L = plan.window_len();
    if (spec.bins() != plan.bins() || spec.window_len() != L || spec.hop() != plan.hop)
        throw InvalidArgument("spectrogram dimensions inconsistent with the STFT plan");
    if (out_len < 1) throw InvalidArgument("output length must be positive");
    const Index J = spec.frames();
    const Index M = spec.streams();
    const Index I = spec.bins();

    MultichannelSignal out;
    out.sample_rate = spec.sample_rate();
    out.samples = RowMatrixXd::Zero(M, out_len);
    std::vector<double> norm(static_cast<std::size_t>(out_len), 0.0);
    for (Index j = 0; j < J; ++j) {
        for (Index n = 0; n < L; ++n) {
            const Index t = j * plan.hop + n;
            if (t >= out_len) break;
            const double w = plan.window[static_cast<std::size_t>(n)];
            norm[static_cast<std::size_t>(t)] += w * w;
        }
    }

    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    std::vector<cdouble> bins(static_cast<std::size_t>(I));
    std::vector<double> frame;
    for (Index m = 0; m < M; ++m) {
        for (Index j = 0; j < J; ++j) {
            for (Index i = 0; i < I; ++i) bins[static_cast<std::size_t>(i)] = spec(i, j, m);
            // Imaginary parts of DC and Nyquist are not representable in a real frame.
            bins.front().imag(0.0);
            bins.back().imag(0.0);
            fft.inv(frame, bins, L);
            for (Index n = 0; n < L; ++n) {
                const Index t = j * plan.hop + n;
                if (t >= out_len) break;
                out.samples(m, t) += plan.window[static_cast<std::size_t>(n)] *
                                     frame[static_cast<std::size_t>(n)];
            }
        }
    }
    for (Index t = 0; t < out_len; ++t) {
        const double d = norm[static_cast<std::size_t>(t)];
        if (d > 0.0) out.samples.col(t) /= d;
    }
    return out;
}

} // namespace bnpbss
