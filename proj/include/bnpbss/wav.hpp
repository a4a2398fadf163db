#pragma once

// RIFF/WAVE reading and writing (pcm16 and IEEE float32, little-endian) and
// Kaiser-windowed sinc resampling.

#include "bnpbss/core.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

namespace bnpbss {

enum class WavEncoding { pcm16, float32 };

struct WavMetadata {
    int channels = 0;
    int sample_rate = 0;
    WavEncoding encoding = WavEncoding::pcm16;
    std::int64_t num_samples = 0;
};

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "WAV I/O assumes a little-endian host");

inline std::uint16_t load_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline std::uint32_t load_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>(v >> 8));
}
inline void put_u32(std::string& out, std::uint32_t v) {
    for (int s = 0; s < 32; s += 8)
        out.push_back(static_cast<char>((v >> s) & 0xff));
}

struct ParsedWav {
    WavMetadata meta;
    const unsigned char* data = nullptr;
    std::size_t data_bytes = 0;
};

inline ParsedWav parse_wav(const std::vector<unsigned char>& buf, const std::string& what) {
    constexpr std::uint16_t kFormatPcm = 1, kFormatFloat = 3, kFormatExtensible = 0xFFFE;
    if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
        std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
        throw MalformedHeader(what + ": not a RIFF/WAVE file");

    ParsedWav out;
    bool have_fmt = false;
    std::uint16_t format = 0, bits = 0, block_align = 0;
    std::size_t pos = 12;
    while (pos + 8 <= buf.size()) {
        const unsigned char* chunk = buf.data() + pos;
        const std::uint32_t size = load_u32(chunk + 4);
        const std::size_t body = pos + 8;
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (size < 16 || body + size > buf.size())
                throw MalformedHeader(what + ": truncated fmt chunk");
            const unsigned char* f = buf.data() + body;
            format = load_u16(f);
            out.meta.channels = load_u16(f + 2);
            out.meta.sample_rate = static_cast<int>(load_u32(f + 4));
            block_align = load_u16(f + 12);
            bits = load_u16(f + 14);
            if (format == kFormatExtensible) {
                if (size < 40)
                    throw MalformedHeader(what + ": truncated extensible fmt chunk");
                format = load_u16(f + 24); // first two bytes of the subformat GUID
            }
            have_fmt = true;
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            if (!have_fmt)
                throw MalformedHeader(what + ": data chunk before fmt chunk");
            if (body + size > buf.size())
                throw MalformedHeader(what + ": truncated data chunk");
            out.data = buf.data() + body;
            out.data_bytes = size;
            break;
        }
        pos = body + size + (size & 1u);
    }
    if (!have_fmt) throw MalformedHeader(what + ": missing fmt chunk");
    if (!out.data) throw MalformedHeader(what + ": missing data chunk");
    if (out.meta.channels < 1 || out.meta.channels > 8)
        throw UnsupportedEncoding(what + ": only 1-8 channels are supported");
    if (out.meta.sample_rate <= 0) throw MalformedHeader(what + ": invalid sample rate");

    if (format == kFormatPcm && bits == 16)
        out.meta.encoding = WavEncoding::pcm16;
    else if (format == kFormatFloat && bits == 32)
        out.meta.encoding = WavEncoding::float32;
    else
        throw UnsupportedEncoding(what + ": unsupported encoding (format " +
                                  std::to_string(format) + ", " + std::to_string(bits) +
                                  " bits)");
    const std::size_t frame_bytes =
        static_cast<std::size_t>(out.meta.channels) * (bits / 8);
    if (block_align != frame_bytes) throw MalformedHeader(what + ": inconsistent block align");
    out.meta.num_samples = static_cast<std::int64_t>(out.data_bytes / frame_bytes);
    return out;
}

inline std::vector<unsigned char> slurp(const std::string& path) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec))
        throw FileNotFound("no such file: " + path);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace detail

inline WavMetadata read_wav_metadata(const std::string& path) {
    const auto buf = detail::slurp(path);
    return detail::parse_wav(buf, path).meta;
}

/// Reads a pcm16 or float32 WAV file. pcm16 samples are divided by 2^15.
inline MultichannelSignal read_wav(const std::string& path) {
    const auto buf = detail::slurp(path);
    const auto parsed = detail::parse_wav(buf, path);
    const auto& meta = parsed.meta;
    if (meta.num_samples < 1) throw MalformedHeader(path + ": empty data chunk");

    MultichannelSignal sig;
    sig.sample_rate = meta.sample_rate;
    sig.samples.resize(meta.channels, meta.num_samples);
    const unsigned char* p = parsed.data;
    for (std::int64_t n = 0; n < meta.num_samples; ++n) {
        for (int c = 0; c < meta.channels; ++c) {
            if (meta.encoding == WavEncoding::pcm16) {
                const auto v = static_cast<std::int16_t>(detail::load_u16(p));
                sig.samples(c, n) = v / 32768.0;
                p += 2;
            } else {
                float f;
                std::memcpy(&f, p, 4);
                sig.samples(c, n) = f;
                p += 4;
            }
        }
    }
    if (!sig.samples.allFinite()) throw MalformedHeader(path + ": non-finite samples");
    return sig;
}

/// Writes the signal; pcm16 samples are rounded from x * 2^15 and clipped.
inline void write_wav(const std::string& path, const MultichannelSignal& signal,
                      WavEncoding encoding = WavEncoding::float32) {
    signal.validate();
    const int channels = static_cast<int>(signal.channels());
    if (channels > 8) throw UnsupportedEncoding("WAV output supports at most 8 channels");
    const int bytes = encoding == WavEncoding::pcm16 ? 2 : 4;
    const std::uint64_t data_bytes =
        static_cast<std::uint64_t>(signal.num_samples()) * channels * bytes;
    if (data_bytes > 0xFFFFFFFFull - 44) throw InvalidArgument("signal too long for RIFF");

    std::string out;
    out.reserve(44 + data_bytes);
    out += "RIFF";
    detail::put_u32(out, static_cast<std::uint32_t>(36 + data_bytes));
    out += "WAVEfmt ";
    detail::put_u32(out, 16);
    detail::put_u16(out, encoding == WavEncoding::pcm16 ? 1 : 3);
    detail::put_u16(out, static_cast<std::uint16_t>(channels));
    detail::put_u32(out, static_cast<std::uint32_t>(signal.sample_rate));
    detail::put_u32(out, static_cast<std::uint32_t>(signal.sample_rate * channels * bytes));
    detail::put_u16(out, static_cast<std::uint16_t>(channels * bytes));
    detail::put_u16(out, static_cast<std::uint16_t>(bytes * 8));
    out += "data";
    detail::put_u32(out, static_cast<std::uint32_t>(data_bytes));
    for (Index n = 0; n < signal.num_samples(); ++n) {
        for (int c = 0; c < channels; ++c) {
            const double x = signal.samples(c, n);
            if (encoding == WavEncoding::pcm16) {
                const double q = std::clamp(std::round(x * 32768.0), -32768.0, 32767.0);
                detail::put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
            } else {
                const float f = static_cast<float>(x);
                std::uint32_t u;
                std::memcpy(&u, &f, 4);
                detail::put_u32(out, u);
            }
        }
    }
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError("cannot open " + path + " for writing");
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw IoError("write failed: " + path);
}

/// Rational-ratio resampler: Kaiser-windowed sinc with 64 taps per phase at
/// the lower of the two rates and cutoff 0.45 * min(rate).
/// Output length is round(num_samples * target / source).
inline MultichannelSignal resample(const MultichannelSignal& signal, int target_rate) {
    if (target_rate <= 0) throw InvalidArgument("target rate must be positive");
    signal.validate();
    const int source_rate = signal.sample_rate;
    if (source_rate == target_rate) return signal;

    const std::int64_t g = std::gcd(source_rate, target_rate);
    const std::int64_t up = target_rate / g;
    const std::int64_t down = source_rate / g;
    const Index n_in = signal.num_samples();
    const auto n_out = static_cast<Index>(
        std::llround(static_cast<double>(n_in) * target_rate / source_rate));

    // Filter expressed in input-sample units.
    constexpr int kTapsPerPhase = 64;
    constexpr double kBeta = 8.6;
    const double scale = std::min(1.0, static_cast<double>(target_rate) / source_rate);
    const double cutoff = 0.45 * std::min(source_rate, target_rate) / source_rate; // cycles/sample
    const double half_width = 0.5 * kTapsPerPhase / scale;
    const double i0_beta = std::cyl_bessel_i(0.0, kBeta);

    auto kernel = [&](double t) {
        const double u = t / half_width;
        if (std::abs(u) >= 1.0) return 0.0;
        const double w = std::cyl_bessel_i(0.0, kBeta * std::sqrt(1.0 - u * u)) / i0_beta;
        const double arg = 2.0 * cutoff * t;
        const double sinc = std::abs(arg) < 1e-12 ? 1.0
                                                  : std::sin(std::numbers::pi * arg) /
                                                        (std::numbers::pi * arg);
        return 2.0 * cutoff * sinc * w;
    };

    // One tap table per output phase; positions are n * down / up in input samples.
    const auto taps = static_cast<Index>(std::ceil(2.0 * half_width)) + 1;
    std::vector<std::vector<double>> table(static_cast<std::size_t>(up));
    std::vector<Index> first(static_cast<std::size_t>(up));
    for (std::int64_t phase = 0; phase < up; ++phase) {
        const double frac = static_cast<double>(phase * down % up) / up;
        auto& row = table[static_cast<std::size_t>(phase)];
        row.resize(static_cast<std::size_t>(taps));
        const Index lo = static_cast<Index>(std::floor(frac - half_width)) + 1;
        first[static_cast<std::size_t>(phase)] = lo;
        for (Index t = 0; t < taps; ++t) row[static_cast<std::size_t>(t)] = kernel(frac - (lo + t));
    }

    MultichannelSignal out;
    out.sample_rate = target_rate;
    out.samples = RowMatrixXd::Zero(signal.channels(), n_out);
    for (Index n = 0; n < n_out; ++n) {
        const std::int64_t phase = n % up;
        const Index base = static_cast<Index>((static_cast<std::int64_t>(n) * down) / up);
        const auto& row = table[static_cast<std::size_t>(phase)];
        const Index lo = base + first[static_cast<std::size_t>(phase)];
        for (Index c = 0; c < signal.channels(); ++c) {
            double acc = 0.0;
            for (Index t = 0; t < taps; ++t) {
                const Index k = lo + t;
                if (k >= 0 && k < n_in) acc += row[static_cast<std::size_t>(t)] * signal.samples(c, k);
            }
            out.samples(c, n) = acc;
        }
    }
    return out;
}

} // namespace bnpbss
