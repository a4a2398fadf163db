#pragma once

// Shared domain types. Every tensor in the library uses the axis order
// (bin i, frame j, stream m); models use (bin i, basis k) and (basis k, frame j).

#include "bnpbss/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace bnpbss {

using Index = Eigen::Index;
using cdouble = std::complex<double>;
using RowMatrixXd =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Time-domain samples, one row per channel.
struct MultichannelSignal {
    RowMatrixXd samples;
    int sample_rate = 16000;

    MultichannelSignal() = default;
    MultichannelSignal(RowMatrixXd s, int rate)
        : samples(std::move(s)), sample_rate(rate) {}

    Index channels() const { return samples.rows(); }
    Index num_samples() const { return samples.cols(); }

    /// Throws InvalidArgument unless the invariants hold.
    void validate() const {
        if (sample_rate <= 0)
            throw InvalidArgument("sample rate must be positive");
        if (channels() < 1 || num_samples() < 1)
            throw InvalidArgument("signal must have at least one channel and one sample");
        if (!samples.allFinite())
            throw InvalidArgument("signal contains non-finite samples");
    }
};

/// Complex STFT tensor stored as (bin, frame, stream) with stream fastest, so
/// the observation vector x_ij of one time-frequency point is contiguous.
class Spectrogram {
  public:
    Spectrogram() = default;
    Spectrogram(Index bins, Index frames, Index streams, int window_len,
                int hop, int sample_rate)
        : bins_(bins), frames_(frames), streams_(streams),
          window_len_(window_len), hop_(hop), sample_rate_(sample_rate),
          data_(static_cast<std::size_t>(bins * frames * streams)) {}

    Index bins() const { return bins_; }
    Index frames() const { return frames_; }
    Index streams() const { return streams_; }
    int window_len() const { return window_len_; }
    int hop() const { return hop_; }
    int sample_rate() const { return sample_rate_; }

    cdouble& operator()(Index i, Index j, Index m) {
        return data_[offset(i, j, m)];
    }
    const cdouble& operator()(Index i, Index j, Index m) const {
        return data_[offset(i, j, m)];
    }

    /// Observation vector (all streams) at bin i, frame j.
    Eigen::Map<Eigen::VectorXcd> vec(Index i, Index j) {
        return {data_.data() + offset(i, j, 0), streams_};
    }
    Eigen::Map<const Eigen::VectorXcd> vec(Index i, Index j) const {
        return {data_.data() + offset(i, j, 0), streams_};
    }

    std::vector<cdouble>& raw() { return data_; }
    const std::vector<cdouble>& raw() const { return data_; }

    bool same_shape(const Spectrogram& o) const {
        return bins_ == o.bins_ && frames_ == o.frames_ && streams_ == o.streams_;
    }

    bool all_finite() const {
        for (const auto& z : data_)
            if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
                return false;
        return true;
    }

  private:
    std::size_t offset(Index i, Index j, Index m) const {
        return static_cast<std::size_t>((i * frames_ + j) * streams_ + m);
    }

    Index bins_ = 0, frames_ = 0, streams_ = 0;
    int window_len_ = 0, hop_ = 0, sample_rate_ = 0;
    std::vector<cdouble> data_;
};

/// Per-frequency demixing matrices W_i; row m of W_i is w_{i,m}^H.
struct DemixingStack {
    std::vector<Eigen::MatrixXcd> matrices;

    static DemixingStack identity(Index bins, Index streams) {
        DemixingStack w;
        w.matrices.assign(static_cast<std::size_t>(bins),
                          Eigen::MatrixXcd::Identity(streams, streams));
        return w;
    }

    Index bins() const { return static_cast<Index>(matrices.size()); }
    Index streams() const { return matrices.empty() ? 0 : matrices.front().rows(); }
};

enum class Algorithm { auxiva, ilrma, vb_nonparametric };

inline std::string_view to_string(Algorithm a) {
    switch (a) {
    case Algorithm::auxiva: return "auxiva";
    case Algorithm::ilrma: return "ilrma";
    case Algorithm::vb_nonparametric: return "vb";
    }
    return "?";
}

inline Algorithm parse_algorithm(std::string_view s) {
    if (s == "auxiva") return Algorithm::auxiva;
    if (s == "ilrma") return Algorithm::ilrma;
    if (s == "vb" || s == "vb_nonparametric") return Algorithm::vb_nonparametric;
    throw InvalidArgument("unknown algorithm '" + std::string(s) + "'");
}

/// Which tightening of the Jensen auxiliary beta to use.
enum class BetaTightening {
    minimizer, ///< beta proportional to 1/(E[1/z]E[1/t]E[1/v])
    literal,   ///< beta proportional to E[1/z]E[1/t]E[1/v]
};

struct SeparationConfig {
    Algorithm algorithm = Algorithm::vb_nonparametric;
    int K = 30;
    double a0 = 0.1;
    double b0 = 0.1;
    double c0 = 1.0 / 30.0;
    int iterations = 100;
    std::uint64_t seed = 0;
    double window_ms = 512.0;
    double hop_ms = 128.0;
    int ref_channel = 0;
    double prune_threshold = 1e-3;
    int prune_burn_in = 10;
    BetaTightening tightening = BetaTightening::minimizer;

    /// Default configuration of the ILRMA baseline (5 bases per source).
    static SeparationConfig ilrma_defaults() {
        SeparationConfig c;
        c.algorithm = Algorithm::ilrma;
        c.K = 5;
        return c;
    }

    /// Sets K and keeps c0 = 1/K.
    void set_bases(int k) {
        K = k;
        c0 = 1.0 / k;
    }

    void validate(Index streams) const {
        if (K < 1) throw InvalidArgument("K must be >= 1");
        if (iterations < 1) throw InvalidArgument("iterations must be >= 1");
        if (!(a0 > 0) || !(b0 > 0) || !(c0 > 0))
            throw InvalidArgument("prior shapes a0, b0, c0 must be positive");
        if (!(prune_threshold >= 0 && prune_threshold < 1))
            throw InvalidArgument("prune_threshold must lie in [0, 1)");
        if (prune_burn_in < 0) throw InvalidArgument("prune_burn_in must be >= 0");
        if (!(window_ms > 0) || !(hop_ms > 0) || hop_ms > window_ms)
            throw InvalidArgument("require 0 < hop_ms <= window_ms");
        if (ref_channel < 0 || ref_channel >= streams)
            throw InvalidArgument("ref_channel out of range");
    }
};

struct Diagnostics {
    std::vector<double> cost_trace;
    /// active_bases[it][m]; for non-VB algorithms this is the fixed K.
    std::vector<std::vector<int>> active_bases;
    double wall_time = 0.0;
};

/// |data[i, j, stream]|^2 as an I x J matrix.
inline Eigen::MatrixXd power_spectrogram(const Spectrogram& spec, Index stream) {
    if (stream < 0 || stream >= spec.streams())
        throw IndexError("stream " + std::to_string(stream) + " out of range [0, " +
                         std::to_string(spec.streams()) + ")");
    Eigen::MatrixXd p(spec.bins(), spec.frames());
    for (Index i = 0; i < spec.bins(); ++i)
        for (Index j = 0; j < spec.frames(); ++j)
            p(i, j) = std::norm(spec(i, j, stream));
    return p;
}

} // namespace bnpbss
