#pragma once

// Full separation pipelines: AuxIVA, ILRMA with fixed K, and the variational
// non-parametric model. Each iteration updates the source models first, then
// the demixing matrices (bin by bin, source by source), then re-demixes.

#include "bnpbss/core.hpp"
#include "bnpbss/demixing.hpp"
#include "bnpbss/nmf.hpp"
#include "bnpbss/stft.hpp"
#include "bnpbss/vb_model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace bnpbss {

struct SeparationResult {
    MultichannelSignal sources; ///< one channel per separated source, projected back
    Spectrogram images;         ///< projected-back spectra (sum over m equals the reference channel)
    DemixingStack demixing;
    std::vector<VBSourceModel> vb_models;
    std::vector<NmfModel> nmf_models;
    Diagnostics diagnostics;
};

struct ExecutionOptions {
    /// Worker threads for the per-source and per-bin phases. Both phases write
    /// disjoint outputs, so any thread count gives bit-identical results.
    int threads = 1;
};

/// splitmix64 of (seed, stream) so every source model gets its own generator.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Frames whose mixture power falls below 1e-10 of the mean frame power.
inline std::vector<bool> active_frames(const Spectrogram& X) {
    std::vector<double> power(static_cast<std::size_t>(X.frames()), 0.0);
    for (Index i = 0; i < X.bins(); ++i)
        for (Index j = 0; j < X.frames(); ++j) power[static_cast<std::size_t>(j)] += X.vec(i, j).squaredNorm();
    double mean = 0.0;
    for (double p : power) mean += p;
    mean /= static_cast<double>(power.size());
    std::vector<bool> keep(power.size());
    for (std::size_t j = 0; j < power.size(); ++j) keep[j] = power[j] >= 1e-10 * mean && power[j] > 0.0;
    if (std::none_of(keep.begin(), keep.end(), [](bool b) { return b; }))
        throw InvalidArgument("mixture is silent");
    return keep;
}

namespace detail {

template <typename Fn>
void parallel_for(Index n, int threads, Fn&& fn) {
    const int workers = std::max(1, std::min<int>(threads, static_cast<int>(n)));
    if (workers == 1) {
        for (Index k = 0; k < n; ++k) fn(k);
        return;
    }
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    {
        std::vector<std::jthread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                try {
                    for (Index k = w; k < n; k += workers) fn(k);
                } catch (...) {
                    errors[static_cast<std::size_t>(w)] = std::current_exception();
                }
            });
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline Eigen::MatrixXd floored(Eigen::MatrixXd r) {
    const double mean = r.mean();
    const double floor = mean > 0.0 ? 1e-12 * mean : std::numeric_limits<double>::min();
    return r.cwiseMax(floor);
}

/// Time-varying spherical variance r_ij = (1/I) sum_i |y_ij|^2, broadcast over bins.
inline Eigen::MatrixXd spherical_variance(const Eigen::MatrixXd& power) {
    const Eigen::RowVectorXd frame = power.colwise().mean();
    return floored(frame.replicate(power.rows(), 1));
}

} // namespace detail

inline SeparationResult separate(const MultichannelSignal& mixture, const SeparationConfig& config,
                                 const ExecutionOptions& exec = {}) {
    const auto started = std::chrono::steady_clock::now();
    mixture.validate();
    const Index M = mixture.channels();
    if (M < 2) throw InvalidArgument("determined separation requires M ≥ 2");
    config.validate(M);

    const StftPlan plan = StftPlan::from_ms(config.window_ms, config.hop_ms, mixture.sample_rate);
    const Spectrogram X = stft(mixture, plan);
    const std::vector<bool> keep = active_frames(X);
    const Index I = X.bins(), J = X.frames();

    SeparationResult result;
    result.demixing = DemixingStack::identity(I, M);
    Spectrogram Y = X;
    std::vector<Eigen::MatrixXd> r(static_cast<std::size_t>(M));
    const bool vb = config.algorithm == Algorithm::vb_nonparametric;
    const bool ilrma = config.algorithm == Algorithm::ilrma;
    if (vb) result.vb_models.resize(static_cast<std::size_t>(M));
    if (ilrma) result.nmf_models.resize(static_cast<std::size_t>(M));

    auto& diag = result.diagnostics;
    for (int it = 0; it < config.iterations; ++it) {
        try {
            detail::parallel_for(M, exec.threads, [&](Index m) {
                const auto sm = static_cast<std::size_t>(m);
                const Eigen::MatrixXd P = power_spectrogram(Y, m);
                const std::uint64_t seed = derive_seed(config.seed, static_cast<std::uint64_t>(m));
                switch (config.algorithm) {
                case Algorithm::vb_nonparametric: {
                    auto& model = result.vb_models[sm];
                    if (it == 0)
                        model = init_vb_model(P, config.K, config.a0, config.b0, config.c0, seed, &keep);
                    else
                        model.cm = compute_cm(P, config.K, config.c0, &keep);
                    vb_sweep(model, P, config.tightening);
                    r[sm] = expected_variance(model);
                    break;
                }
                case Algorithm::ilrma: {
                    auto& nmf = result.nmf_models[sm];
                    if (it == 0) nmf = init_nmf(I, J, config.K, seed);
                    nmf_is_update(nmf, P);
                    r[sm] = detail::floored(nmf.variance());
                    break;
                }
                case Algorithm::auxiva:
                    r[sm] = detail::spherical_variance(P);
                    break;
                }
            });

            detail::parallel_for(I, exec.threads, [&](Index i) {
                ip_update_bin(result.demixing.matrices[static_cast<std::size_t>(i)], X, r, i, &keep);
            });
            Y = demix(result.demixing, X);
        } catch (const NumericError& e) {
            throw NumericError("iteration " + std::to_string(it) + ": " + e.what());
        }

        const double q = cost(result.demixing, Y, r);
        if (!std::isfinite(q))
            throw NumericError("iteration " + std::to_string(it) + ": cost is not finite");
        diag.cost_trace.push_back(q);

        std::vector<int> counts(static_cast<std::size_t>(M), config.algorithm == Algorithm::auxiva ? 1 : config.K);
        if (vb) {
            for (Index m = 0; m < M; ++m) {
                auto& model = result.vb_models[static_cast<std::size_t>(m)];
                if (it + 1 >= config.prune_burn_in) prune_bases(model, config.prune_threshold);
                counts[static_cast<std::size_t>(m)] = static_cast<int>(active_count(model));
            }
        }
        diag.active_bases.push_back(std::move(counts));
    }

    result.images = project_back(result.demixing, Y, config.ref_channel);
    result.sources = istft(result.images, plan, mixture.num_samples());
    diag.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

inline const std::vector<double>& cost_trace(const SeparationResult& result) {
    return result.diagnostics.cost_trace;
}

} // namespace bnpbss
