#include "cli.hpp"

#include "bnpbss/bnpbss.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

namespace bnpbss::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

/// Thrown for CLI-level argument problems; maps to exit code 2.
struct UsageError : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FileNotFound(path + ": cannot open");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw InvalidArgument(path + ": " + e.what());
    }
}

void require_keys(const json& doc, const std::vector<std::string>& allowed, const std::string& what) {
    if (!doc.is_object()) throw InvalidArgument(what + ": expected a JSON object");
    for (const auto& [key, _] : doc.items())
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw InvalidArgument(what + ": unknown key \"" + key + "\"");
}

void require_schema(const json& doc, const std::string& what) {
    if (!doc.contains("schema_version")) throw InvalidArgument(what + ": missing schema_version");
    if (doc.at("schema_version") != kSchemaVersion)
        throw InvalidArgument(what + ": unsupported schema_version " + doc.at("schema_version").dump());
}

template <typename T>
T get_as(const json& doc, const std::string& key, const std::string& what) {
    try {
        return doc.at(key).get<T>();
    } catch (const json::exception&) {
        throw InvalidArgument(what + ": bad value for \"" + key + "\"");
    }
}

void require_file(const std::string& path) {
    if (!fs::is_regular_file(path)) throw FileNotFound(path + ": no such file");
}

void prepare_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError(dir + ": cannot create directory");
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out << text;
    if (!out) throw IoError(path.string() + ": write failed");
}

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    std::ostringstream s;
    s << std::setprecision(6) << std::fixed << x;
    return s.str();
}

int parse_args(CLI::App& app, const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << app.get_name() << ": " << e.what() << "\n";
        return kInvalidArgs;
    }
    return -1;
}

int report(const std::string& cmd, std::ostream& err, const std::exception& e, int code) {
    err << "bnpbss " << cmd << ": " << e.what() << "\n";
    return code;
}

template <typename Fn>
int guarded(const std::string& cmd, std::ostream& err, Fn&& fn) {
    try {
        return fn();
    } catch (const NumericError& e) {
        return report(cmd, err, e, kNumericFailure);
    } catch (const IoError& e) {
        return report(cmd, err, e, kIoFailure);
    } catch (const Error& e) {
        return report(cmd, err, e, kInvalidArgs);
    } catch (const json::exception& e) {
        return report(cmd, err, e, kInvalidArgs);
    } catch (const std::exception& e) {
        return report(cmd, err, e, kUnexpected);
    }
}

// ---------------------------------------------------------------- separate

const std::vector<std::string> kSeparateKeys = {
    "schema_version", "algorithm", "K",         "a0",          "b0",
    "c0",             "iterations", "seed",     "window_ms",   "hop_ms",
    "ref_channel",    "prune_threshold",        "prune_burn_in", "tightening",
    "threads",        "input",      "out_dir"};

struct SeparateJob {
    SeparationConfig config;
    std::string input, out_dir;
    int threads = 1;
};

void apply_config_file(SeparateJob& job, const std::string& path, bool& bases_set) {
    const json doc = load_json(path);
    require_keys(doc, kSeparateKeys, path);
    require_schema(doc, path);
    auto& c = job.config;
    if (doc.contains("algorithm")) {
        c.algorithm = parse_algorithm(get_as<std::string>(doc, "algorithm", path));
        if (c.algorithm == Algorithm::ilrma) c = SeparationConfig::ilrma_defaults();
    }
    if (doc.contains("K")) {
        c.set_bases(get_as<int>(doc, "K", path));
        bases_set = true;
    }
    if (doc.contains("a0")) c.a0 = get_as<double>(doc, "a0", path);
    if (doc.contains("b0")) c.b0 = get_as<double>(doc, "b0", path);
    if (doc.contains("c0")) c.c0 = get_as<double>(doc, "c0", path);
    if (doc.contains("iterations")) c.iterations = get_as<int>(doc, "iterations", path);
    if (doc.contains("seed")) c.seed = get_as<std::uint64_t>(doc, "seed", path);
    if (doc.contains("window_ms")) c.window_ms = get_as<double>(doc, "window_ms", path);
    if (doc.contains("hop_ms")) c.hop_ms = get_as<double>(doc, "hop_ms", path);
    if (doc.contains("ref_channel")) c.ref_channel = get_as<int>(doc, "ref_channel", path);
    if (doc.contains("prune_threshold")) c.prune_threshold = get_as<double>(doc, "prune_threshold", path);
    if (doc.contains("prune_burn_in")) c.prune_burn_in = get_as<int>(doc, "prune_burn_in", path);
    if (doc.contains("tightening")) {
        const auto t = get_as<std::string>(doc, "tightening", path);
        if (t == "minimizer") c.tightening = BetaTightening::minimizer;
        else if (t == "literal") c.tightening = BetaTightening::literal;
        else throw InvalidArgument(path + ": tightening must be \"minimizer\" or \"literal\"");
    }
    if (doc.contains("threads")) job.threads = get_as<int>(doc, "threads", path);
    if (doc.contains("input")) job.input = get_as<std::string>(doc, "input", path);
    if (doc.contains("out_dir")) job.out_dir = get_as<std::string>(doc, "out_dir", path);
}

json diagnostics_json(const SeparationConfig& c, const SeparationResult& r, const MultichannelSignal& mix) {
    json d;
    d["schema_version"] = kSchemaVersion;
    d["algorithm"] = std::string(to_string(c.algorithm));
    d["K"] = c.K;
    d["seed"] = c.seed;
    d["iterations"] = c.iterations;
    d["sample_rate"] = mix.sample_rate;
    d["channels"] = mix.channels();
    d["cost_trace"] = r.diagnostics.cost_trace;
    d["active_bases"] = r.diagnostics.active_bases;
    d["wall_time"] = r.diagnostics.wall_time;
    return d;
}

// ---------------------------------------------------------------- mix

MultichannelSignal load_mono(const std::string& path) {
    MultichannelSignal s = read_wav(path);
    if (s.channels() != 1) throw InvalidArgument(path + ": expected a mono file");
    return s;
}

Eigen::MatrixXd parse_matrix(const json& doc, const std::string& what) {
    const json& rows = doc.is_object() ? doc.at("matrix") : doc;
    if (!rows.is_array() || rows.empty() || !rows.front().is_array())
        throw InvalidArgument(what + ": mixing matrix must be a non-empty 2D array");
    const auto M = static_cast<Index>(rows.size());
    const auto N = static_cast<Index>(rows.front().size());
    Eigen::MatrixXd A(M, N);
    for (Index m = 0; m < M; ++m) {
        const json& row = rows.at(static_cast<std::size_t>(m));
        if (!row.is_array() || static_cast<Index>(row.size()) != N)
            throw InvalidArgument(what + ": ragged mixing matrix");
        for (Index n = 0; n < N; ++n) {
            const json& v = row.at(static_cast<std::size_t>(n));
            if (!v.is_number()) throw InvalidArgument(what + ": non-numeric matrix entry");
            A(m, n) = v.get<double>();
        }
    }
    if (!A.allFinite()) throw InvalidArgument(what + ": non-finite matrix entry");
    return A;
}

json matrix_json(const Eigen::MatrixXd& A) {
    json rows = json::array();
    for (Index m = 0; m < A.rows(); ++m) {
        json row = json::array();
        for (Index n = 0; n < A.cols(); ++n) row.push_back(A(m, n));
        rows.push_back(row);
    }
    return rows;
}

// ---------------------------------------------------------------- eval

std::vector<Eigen::VectorXd> load_channels(const std::vector<std::string>& paths, int& rate) {
    std::vector<Eigen::VectorXd> out;
    for (const auto& p : paths) {
        const MultichannelSignal s = read_wav(p);
        if (rate == 0) rate = s.sample_rate;
        if (s.sample_rate != rate) throw InvalidArgument(p + ": sample rate differs from the other files");
        for (Index c = 0; c < s.channels(); ++c) out.emplace_back(s.samples.row(c).transpose());
    }
    return out;
}

bool file_is_empty(const std::string& path) {
    std::error_code ec;
    return !fs::exists(path, ec) || fs::file_size(path, ec) == 0;
}

// ---------------------------------------------------------------- bench

struct BenchMixture {
    std::string id;
    MultichannelSignal mixture;
    std::vector<Eigen::VectorXd> references;
};

struct BenchCell {
    Algorithm algorithm;
    int K;
    std::uint64_t seed;
    std::size_t mixture;
};

struct BenchRow {
    double sdr = std::nan(""), sir = std::nan(""), sar = std::nan("");
    std::vector<int> active;
    double seconds = 0.0;
    std::string status = "ok";
};

const std::vector<std::string> kBenchKeys = {
    "schema_version", "output_dir", "algorithms", "K_values",  "vb_K",     "seeds",
    "iterations",     "filter_len", "window_ms",  "hop_ms",    "mixtures", "synthetic",
    "workers",        "threads_per_cell"};
const std::vector<std::string> kSyntheticKeys = {"count", "duration", "t60_ms", "ranks", "seed", "rms"};
const std::vector<std::string> kMixtureKeys = {"id", "mixture", "references"};

std::string csv_safe(std::string s) {
    std::replace(s.begin(), s.end(), ',', ';');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (std::size_t k = 0; k < v.size(); ++k) s += (k ? ";" : "") + std::to_string(v[k]);
    return s;
}

/// Mixtures of toy NMF sources: instantaneous with A = [[1, .5], [.5, 1]]
/// when t60_ms is 0, otherwise convolutive with synthetic room responses.
std::vector<BenchMixture> synthetic_mixtures(const json& syn, const std::string& what) {
    require_keys(syn, kSyntheticKeys, what + ".synthetic");
    const int count = syn.contains("count") ? get_as<int>(syn, "count", what) : 1;
    const double duration = syn.contains("duration") ? get_as<double>(syn, "duration", what) : 10.0;
    const double t60_ms = syn.contains("t60_ms") ? get_as<double>(syn, "t60_ms", what) : 0.0;
    const auto ranks = syn.contains("ranks") ? get_as<std::vector<int>>(syn, "ranks", what)
                                             : std::vector<int>{2, 8};
    const auto base = syn.contains("seed") ? get_as<std::uint64_t>(syn, "seed", what) : 0;
    const double rms = syn.contains("rms") ? get_as<double>(syn, "rms", what) : 0.1;
    if (count < 1) throw InvalidArgument(what + ": synthetic.count must be >= 1");
    if (ranks.size() < 2) throw InvalidArgument(what + ": synthetic.ranks needs at least two sources");
    if (!(duration > 0.0) || t60_ms < 0.0) throw InvalidArgument(what + ": bad synthetic duration or t60_ms");

    std::vector<BenchMixture> out;
    constexpr int rate = 16000;
    for (int c = 0; c < count; ++c) {
        MixSpec spec;
        const std::uint64_t seed = base + static_cast<std::uint64_t>(c);
        spec.seed = seed;
        for (std::size_t n = 0; n < ranks.size(); ++n) {
            ToySourceSpec ts;
            ts.rank = ranks[n];
            ts.duration = duration;
            ts.sample_rate = rate;
            ts.rms = rms;
            ts.seed = derive_seed(seed, n);
            spec.sources.push_back(synth_nmf_source(ts).signal.samples.row(0).transpose());
        }
        const auto N = static_cast<Index>(ranks.size());
        if (t60_ms == 0.0) {
            Eigen::MatrixXd A = Eigen::MatrixXd::Constant(N, N, 0.5);
            A.diagonal().setOnes();
            spec.mixing_matrix = A;
        } else {
            const auto taps = static_cast<Index>(std::llround(t60_ms * 1e-3 * rate));
            spec.rirs = room_rirs(N, N, t60_ms * 1e-3, taps, seed, rate);
        }
        BenchMixture b;
        b.id = "synthetic_" + std::to_string(c);
        b.mixture = convolve_mix(spec, rate);
        const MultichannelSignal refs = reference_images(spec, 0, rate);
        for (Index n = 0; n < N; ++n) b.references.emplace_back(refs.samples.row(n).transpose());
        out.push_back(std::move(b));
    }
    return out;
}

} // namespace

int capped_threads(int requested) {
    int n = std::max(1, requested);
    if (const char* env = std::getenv("BNPBSS_THREADS")) {
        char* end = nullptr;
        const long cap = std::strtol(env, &end, 10);
        if (end != env && cap >= 1) n = std::min<long>(n, cap);
    }
    return n;
}

int cmd_separate(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app("Separate a multichannel mixture", "separate");
    std::string input, algo, out_dir, config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> iters, bases, threads;
    app.add_option("--input", input, "Mixture WAV (M >= 2 channels)");
    app.add_option("--algo", algo, "auxiva | ilrma | vb");
    app.add_option("--out-dir", out_dir, "Directory for source_<m>.wav and diagnostics.json");
    app.add_option("--config", config_path, "JSON run configuration");
    app.add_option("--seed", seed, "Random seed");
    app.add_option("--iters", iters, "Number of iterations");
    app.add_option("--bases", bases, "Bases per source (K)");
    app.add_option("--threads", threads, "Worker threads (capped by BNPBSS_THREADS)");
    if (const int rc = parse_args(app, args, out, err); rc >= 0) return rc;

    return guarded("separate", err, [&] {
        SeparateJob job;
        bool bases_set = false;
        if (!config_path.empty()) {
            require_file(config_path);
            apply_config_file(job, config_path, bases_set);
        }
        if (!algo.empty()) {
            const Algorithm a = parse_algorithm(algo);
            if (a != job.config.algorithm) {
                const SeparationConfig keep = job.config;
                job.config = a == Algorithm::ilrma ? SeparationConfig::ilrma_defaults() : SeparationConfig{};
                job.config.algorithm = a;
                job.config.iterations = keep.iterations;
                job.config.seed = keep.seed;
                job.config.window_ms = keep.window_ms;
                job.config.hop_ms = keep.hop_ms;
                job.config.ref_channel = keep.ref_channel;
                if (bases_set) job.config.set_bases(keep.K);
            }
        }
        if (!input.empty()) job.input = input;
        if (!out_dir.empty()) job.out_dir = out_dir;
        if (seed) job.config.seed = *seed;
        if (iters) job.config.iterations = *iters;
        if (bases) job.config.set_bases(*bases);
        if (threads) job.threads = *threads;
        if (job.input.empty()) throw UsageError("--input is required");
        if (job.out_dir.empty()) throw UsageError("--out-dir is required");
        if (algo.empty() && config_path.empty()) throw UsageError("--algo is required");
        if (job.threads < 1) throw UsageError("--threads must be >= 1");

        require_file(job.input);
        prepare_dir(job.out_dir);
        const MultichannelSignal mix = read_wav(job.input);
        if (mix.channels() < 2) throw InvalidArgument("determined separation requires M ≥ 2");
        job.config.validate(mix.channels());

        ExecutionOptions exec;
        exec.threads = capped_threads(job.threads);
        const SeparationResult result = separate(mix, job.config, exec);

        for (Index m = 0; m < result.sources.channels(); ++m) {
            MultichannelSignal s(result.sources.samples.row(m), mix.sample_rate);
            write_wav((fs::path(job.out_dir) / ("source_" + std::to_string(m) + ".wav")).string(), s);
        }
        write_text(fs::path(job.out_dir) / "diagnostics.json",
                   diagnostics_json(job.config, result, mix).dump(2) + "\n");
        out << "separated " << mix.channels() << " sources with " << to_string(job.config.algorithm)
            << " in " << format_double(result.diagnostics.wall_time) << " s; final cost "
            << std::setprecision(10) << result.diagnostics.cost_trace.back() << "\n";
        return int{kOk};
    });
}

int cmd_mix(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app("Mix mono sources into a multichannel mixture", "mix");
    std::vector<std::string> sources, rirs;
    std::string matrix_path, out_path;
    std::optional<double> t60_ms;
    std::uint64_t seed = 0;
    app.add_option("--sources", sources, "Mono source WAVs");
    app.add_option("--rir", rirs, "RIR WAVs: one M-channel file per source, or N*M mono files (source-major)");
    app.add_option("--matrix", matrix_path, "JSON mixing matrix (2D array or {\"matrix\": ...})");
    app.add_option("--t60", t60_ms, "Synthetic room responses with this T60 in ms");
    app.add_option("--out", out_path, "Output mixture WAV; manifest.json goes next to it");
    app.add_option("--seed", seed, "Seed for synthetic room responses");
    if (const int rc = parse_args(app, args, out, err); rc >= 0) return rc;

    return guarded("mix", err, [&] {
        if (sources.empty()) throw UsageError("--sources is required");
        if (out_path.empty()) throw UsageError("--out is required");
        const int modes = int(!rirs.empty()) + int(!matrix_path.empty()) + int(t60_ms.has_value());
        if (modes != 1) throw UsageError("give exactly one of --rir, --matrix, --t60");
        if (t60_ms && !(*t60_ms > 0.0)) throw UsageError("--t60 must be positive");
        for (const auto& p : sources) require_file(p);
        for (const auto& p : rirs) require_file(p);
        if (!matrix_path.empty()) require_file(matrix_path);
        const fs::path out_file(out_path);
        if (out_file.has_parent_path()) prepare_dir(out_file.parent_path().string());

        MixSpec spec;
        spec.seed = seed;
        int rate = 0;
        for (const auto& p : sources) {
            MultichannelSignal s = load_mono(p);
            if (rate == 0) rate = s.sample_rate;
            if (s.sample_rate != rate) s = resample(s, rate);
            spec.sources.emplace_back(s.samples.row(0).transpose());
        }
        Index T = 0;
        for (const auto& s : spec.sources) T = std::max(T, s.size());
        for (auto& s : spec.sources) s.conservativeResizeLike(Eigen::VectorXd::Zero(T));
        const auto N = static_cast<Index>(spec.sources.size());

        json manifest;
        manifest["schema_version"] = kSchemaVersion;
        manifest["sources"] = sources;
        manifest["sample_rate"] = rate;
        manifest["num_samples"] = T;
        manifest["seed"] = seed;
        if (!matrix_path.empty()) {
            spec.mixing_matrix = parse_matrix(load_json(matrix_path), matrix_path);
            if (spec.mixing_matrix->cols() != N)
                throw InvalidArgument("mixing matrix has " + std::to_string(spec.mixing_matrix->cols()) +
                                      " columns for " + std::to_string(N) + " sources");
            manifest["mode"] = "matrix";
            manifest["matrix"] = matrix_json(*spec.mixing_matrix);
        } else {
            if (t60_ms) {
                const auto taps = static_cast<Index>(std::llround(*t60_ms * 1e-3 * rate));
                spec.rirs = room_rirs(N, N, *t60_ms * 1e-3, taps, seed, rate);
                manifest["mode"] = "synthetic_rir";
                manifest["t60_ms"] = *t60_ms;
                manifest["taps"] = spec.rirs.front().cols();
            } else {
                std::vector<MultichannelSignal> loaded;
                for (const auto& p : rirs) {
                    MultichannelSignal h = read_wav(p);
                    if (h.sample_rate != rate) throw InvalidArgument(p + ": RIR sample rate differs from sources");
                    loaded.push_back(std::move(h));
                }
                Index taps = 0;
                for (const auto& h : loaded) taps = std::max(taps, h.num_samples());
                if (static_cast<Index>(loaded.size()) == N && loaded.front().channels() > 1) {
                    for (auto& h : loaded) {
                        if (h.channels() != loaded.front().channels())
                            throw InvalidArgument("RIR files disagree on channel count");
                        Eigen::MatrixXd set = Eigen::MatrixXd::Zero(h.channels(), taps);
                        set.leftCols(h.num_samples()) = h.samples;
                        spec.rirs.push_back(std::move(set));
                    }
                } else if (static_cast<Index>(loaded.size()) % N == 0) {
                    const Index M = static_cast<Index>(loaded.size()) / N;
                    for (Index n = 0; n < N; ++n) {
                        Eigen::MatrixXd set = Eigen::MatrixXd::Zero(M, taps);
                        for (Index m = 0; m < M; ++m) {
                            const auto& h = loaded[static_cast<std::size_t>(n * M + m)];
                            if (h.channels() != 1) throw InvalidArgument("expected mono RIR files");
                            set.row(m).head(h.num_samples()) = h.samples.row(0);
                        }
                        spec.rirs.push_back(std::move(set));
                    }
                } else {
                    throw InvalidArgument(std::to_string(loaded.size()) + " RIR files do not fit " +
                                          std::to_string(N) + " sources");
                }
                manifest["mode"] = "rir_files";
                manifest["rir_files"] = rirs;
            }
            json sets = json::array();
            for (const auto& set : spec.rirs) sets.push_back(matrix_json(set));
            manifest["rirs"] = std::move(sets);
        }

        const MultichannelSignal mix = convolve_mix(spec, rate);
        manifest["channels"] = mix.channels();
        manifest["output"] = out_path;
        write_wav(out_path, mix);
        const fs::path manifest_path =
            (out_file.has_parent_path() ? out_file.parent_path() : fs::path(".")) / "manifest.json";
        write_text(manifest_path, manifest.dump(2) + "\n");
        out << "wrote " << mix.channels() << "-channel mixture of " << N << " sources to " << out_path << "\n";
        return int{kOk};
    });
}

int cmd_eval(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app("Score separated sources against references", "eval");
    std::vector<std::string> estimates, references;
    std::string csv_path, run_id = "run";
    int filter_len = 512;
    app.add_option("--estimates", estimates, "Estimate WAVs (every channel is one estimate)");
    app.add_option("--references", references, "Reference WAVs (every channel is one reference)");
    app.add_option("--filter-len", filter_len, "Allowed distortion filter length in taps");
    app.add_option("--csv", csv_path, "CSV file to append rows to");
    app.add_option("--run-id", run_id, "Value of the run_id column");
    if (const int rc = parse_args(app, args, out, err); rc >= 0) return rc;

    return guarded("eval", err, [&] {
        if (estimates.empty() || references.empty()) throw UsageError("--estimates and --references are required");
        if (csv_path.empty()) throw UsageError("--csv is required");
        if (filter_len < 1) throw UsageError("--filter-len must be >= 1");
        for (const auto& p : estimates) require_file(p);
        for (const auto& p : references) require_file(p);
        const fs::path csv(csv_path);
        if (csv.has_parent_path()) prepare_dir(csv.parent_path().string());

        int rate = 0;
        const auto est = load_channels(estimates, rate);
        const auto ref = load_channels(references, rate);
        const EvalScores s = evaluate(est, ref, filter_len);

        const bool header = file_is_empty(csv_path);
        std::ofstream file(csv_path, std::ios::app);
        if (!file) throw IoError(csv_path + ": cannot open for appending");
        if (header) file << "run_id,source,sdr_db,sir_db,sar_db,permutation\n";
        double mean = 0.0;
        for (std::size_t e = 0; e < s.sdr.size(); ++e) {
            file << csv_safe(run_id) << ',' << e << ',' << format_double(s.sdr[e]) << ','
                 << format_double(s.sir[e]) << ',' << format_double(s.sar[e]) << ',' << s.permutation[e] << '\n';
            mean += s.sdr[e] / static_cast<double>(s.sdr.size());
        }
        if (!file) throw IoError(csv_path + ": write failed");
        out << "evaluated " << s.sdr.size() << " sources; mean SDR " << format_double(mean) << " dB"
            << (s.regularized ? " (regularized projection)" : "") << "\n";
        return int{kOk};
    });
}

int cmd_bench(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app("Run a separation benchmark sweep", "bench");
    std::string config_path;
    app.add_option("--config", config_path, "JSON sweep description");
    if (const int rc = parse_args(app, args, out, err); rc >= 0) return rc;

    return guarded("bench", err, [&] {
        if (config_path.empty()) throw UsageError("--config is required");
        require_file(config_path);
        const json doc = load_json(config_path);
        require_keys(doc, kBenchKeys, config_path);
        require_schema(doc, config_path);
        const std::string& what = config_path;

        if (!doc.contains("output_dir")) throw InvalidArgument(what + ": output_dir is required");
        const auto output_dir = get_as<std::string>(doc, "output_dir", what);
        std::vector<Algorithm> algorithms;
        for (const auto& a : doc.contains("algorithms") ? get_as<std::vector<std::string>>(doc, "algorithms", what)
                                                        : std::vector<std::string>{"ilrma", "vb"})
            algorithms.push_back(parse_algorithm(a));
        const auto K_values = doc.contains("K_values") ? get_as<std::vector<int>>(doc, "K_values", what)
                                                       : std::vector<int>{2, 5, 10, 20, 30};
        const int vb_K = doc.contains("vb_K") ? get_as<int>(doc, "vb_K", what) : 30;
        const auto seeds = doc.contains("seeds") ? get_as<std::vector<std::uint64_t>>(doc, "seeds", what)
                                                 : std::vector<std::uint64_t>{0};
        const int iterations = doc.contains("iterations") ? get_as<int>(doc, "iterations", what) : 100;
        const int filter_len = doc.contains("filter_len") ? get_as<int>(doc, "filter_len", what) : 512;
        const double window_ms = doc.contains("window_ms") ? get_as<double>(doc, "window_ms", what) : 512.0;
        const double hop_ms = doc.contains("hop_ms") ? get_as<double>(doc, "hop_ms", what) : 128.0;
        const int workers_req = doc.contains("workers")
                                    ? get_as<int>(doc, "workers", what)
                                    : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
        const int threads_per_cell = doc.contains("threads_per_cell") ? get_as<int>(doc, "threads_per_cell", what) : 1;
        if (algorithms.empty() || seeds.empty()) throw InvalidArgument(what + ": empty algorithms or seeds");
        if (K_values.empty() && std::count(algorithms.begin(), algorithms.end(), Algorithm::ilrma))
            throw InvalidArgument(what + ": K_values is empty");
        for (int k : K_values)
            if (k < 1) throw InvalidArgument(what + ": K values must be >= 1");
        if (vb_K < 1 || iterations < 1 || filter_len < 1 || workers_req < 1 || threads_per_cell < 1)
            throw InvalidArgument(what + ": vb_K, iterations, filter_len, workers, threads_per_cell must be >= 1");
        if (doc.contains("mixtures") == doc.contains("synthetic"))
            throw InvalidArgument(what + ": give exactly one of mixtures, synthetic");

        // Validate every path before any computation.
        struct FileMixture {
            std::string id, mixture;
            std::vector<std::string> references;
        };
        std::vector<FileMixture> files;
        if (doc.contains("mixtures")) {
            const json& list = doc.at("mixtures");
            if (!list.is_array() || list.empty()) throw InvalidArgument(what + ": mixtures must be a non-empty array");
            for (const auto& item : list) {
                require_keys(item, kMixtureKeys, what + ".mixtures");
                FileMixture f;
                f.mixture = get_as<std::string>(item, "mixture", what);
                f.references = get_as<std::vector<std::string>>(item, "references", what);
                f.id = item.contains("id") ? get_as<std::string>(item, "id", what) : fs::path(f.mixture).stem().string();
                require_file(f.mixture);
                for (const auto& r : f.references) require_file(r);
                files.push_back(std::move(f));
            }
        }
        prepare_dir(output_dir);

        std::vector<BenchMixture> mixtures;
        if (doc.contains("synthetic")) {
            mixtures = synthetic_mixtures(doc.at("synthetic"), what);
        } else {
            for (const auto& f : files) {
                BenchMixture b;
                b.id = csv_safe(f.id);
                b.mixture = read_wav(f.mixture);
                int rate = b.mixture.sample_rate;
                b.references = load_channels(f.references, rate);
                mixtures.push_back(std::move(b));
            }
        }

        std::vector<BenchCell> cells;
        for (Algorithm a : algorithms) {
            std::vector<int> ks = a == Algorithm::ilrma ? K_values
                                  : a == Algorithm::vb_nonparametric ? std::vector<int>{vb_K}
                                                                     : std::vector<int>{1};
            for (int k : ks)
                for (auto s : seeds)
                    for (std::size_t x = 0; x < mixtures.size(); ++x) cells.push_back({a, k, s, x});
        }

        std::vector<BenchRow> rows(cells.size());
        std::atomic<std::size_t> next{0};
        auto work = [&] {
            for (std::size_t c = next++; c < cells.size(); c = next++) {
                const BenchCell& cell = cells[c];
                BenchRow& row = rows[c];
                const auto t0 = std::chrono::steady_clock::now();
                try {
                    SeparationConfig cfg;
                    cfg.algorithm = cell.algorithm;
                    cfg.set_bases(cell.K);
                    cfg.seed = cell.seed;
                    cfg.iterations = iterations;
                    cfg.window_ms = window_ms;
                    cfg.hop_ms = hop_ms;
                    ExecutionOptions exec;
                    exec.threads = capped_threads(threads_per_cell);
                    const BenchMixture& mix = mixtures[cell.mixture];
                    const SeparationResult r = separate(mix.mixture, cfg, exec);
                    std::vector<Eigen::VectorXd> est;
                    for (Index m = 0; m < r.sources.channels(); ++m) est.emplace_back(r.sources.samples.row(m).transpose());
                    const EvalScores s = evaluate(est, mix.references, filter_len);
                    const auto mean = [](const std::vector<double>& v) {
                        double a = 0.0;
                        for (double x : v) a += x;
                        return a / static_cast<double>(v.size());
                    };
                    row.sdr = mean(s.sdr);
                    row.sir = mean(s.sir);
                    row.sar = mean(s.sar);
                    row.active = r.diagnostics.active_bases.back();
                } catch (const std::exception& e) {
                    row.status = "error: " + csv_safe(e.what());
                }
                row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            }
        };
        const int workers = std::min<int>(capped_threads(workers_req), static_cast<int>(cells.size()));
        {
            std::vector<std::jthread> pool;
            for (int w = 1; w < workers; ++w) pool.emplace_back(work);
            work();
        }

        std::ostringstream csv;
        csv << "algorithm,K,seed,mixture_id,sdr,sir,sar,active_bases_final,seconds,status,active_bases_per_source\n";
        std::size_t ok = 0;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const BenchCell& cell = cells[c];
            const BenchRow& row = rows[c];
            const int final_active = row.active.empty() ? 0 : *std::max_element(row.active.begin(), row.active.end());
            csv << to_string(cell.algorithm) << ',' << cell.K << ',' << cell.seed << ',' << mixtures[cell.mixture].id
                << ',' << format_double(row.sdr) << ',' << format_double(row.sir) << ',' << format_double(row.sar)
                << ',' << (row.active.empty() ? std::string("nan") : std::to_string(final_active)) << ','
                << format_double(row.seconds) << ',' << row.status << ',' << join_ints(row.active) << '\n';
            ok += row.status == "ok";
        }
        write_text(fs::path(output_dir) / "results.csv", csv.str());

        json summary;
        summary["schema_version"] = kSchemaVersion;
        summary["rows"] = cells.size();
        summary["succeeded"] = ok;
        json list = json::array();
        for (std::size_t c = 0; c < cells.size();) {
            std::size_t e = c;
            while (e < cells.size() && cells[e].algorithm == cells[c].algorithm && cells[e].K == cells[c].K) ++e;
            double sdr = 0, sir = 0, sar = 0, act = 0, sec = 0;
            std::size_t n = 0;
            for (std::size_t k = c; k < e; ++k) {
                if (rows[k].status != "ok") continue;
                sdr += rows[k].sdr;
                sir += rows[k].sir;
                sar += rows[k].sar;
                act += *std::max_element(rows[k].active.begin(), rows[k].active.end());
                sec += rows[k].seconds;
                ++n;
            }
            json cell;
            cell["algorithm"] = std::string(to_string(cells[c].algorithm));
            cell["K"] = cells[c].K;
            cell["runs"] = e - c;
            cell["succeeded"] = n;
            const auto avg = [n](double v) -> json { return n ? json(v / static_cast<double>(n)) : json(nullptr); };
            cell["mean_sdr"] = avg(sdr);
            cell["mean_sir"] = avg(sir);
            cell["mean_sar"] = avg(sar);
            cell["mean_active_bases_final"] = avg(act);
            cell["mean_seconds"] = avg(sec);
            list.push_back(std::move(cell));
            c = e;
        }
        summary["cells"] = std::move(list);
        write_text(fs::path(output_dir) / "summary.json", summary.dump(2) + "\n");

        out << "bench: " << ok << "/" << cells.size() << " runs succeeded; results in " << output_dir << "\n";
        if (ok == 0) {
            err << "bnpbss bench: every run failed; first error: " << rows.front().status << "\n";
            return int{kNumericFailure};
        }
        return int{kOk};
    });
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    const std::string usage = "usage: bnpbss <separate|mix|eval|bench> [options]  (--help for details)\n";
    if (args.empty()) {
        err << usage;
        return kInvalidArgs;
    }
    const std::string& cmd = args.front();
    const std::vector<std::string> rest(args.begin() + 1, args.end());
    if (cmd == "separate") return cmd_separate(rest, out, err);
    if (cmd == "mix") return cmd_mix(rest, out, err);
    if (cmd == "eval") return cmd_eval(rest, out, err);
    if (cmd == "bench") return cmd_bench(rest, out, err);
    if (cmd == "--help" || cmd == "-h") {
        out << usage;
        return kOk;
    }
    err << "bnpbss: unknown command \"" << cmd << "\"\n" << usage;
    return kInvalidArgs;
}

} // namespace bnpbss::cli
