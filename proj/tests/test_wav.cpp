#include "bnpbss/wav.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

using namespace bnpbss;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "bnpbss_wav_tests";
    fs::create_directories(dir);
    return dir / name;
}

MultichannelSignal noise(Index channels, Index n, int rate, std::uint64_t seed, double scale = 0.5) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    RowMatrixXd s(channels, n);
    for (Index c = 0; c < channels; ++c)
        for (Index t = 0; t < n; ++t) s(c, t) = u(rng);
    return {s, rate};
}

} // namespace

TEST(Wav, Pcm16MetadataPassthrough) {
    const auto path = scratch("meta.wav").string();
    write_wav(path, noise(2, 160000, 16000, 1), WavEncoding::pcm16);
    const auto meta = read_wav_metadata(path);
    EXPECT_EQ(meta.channels, 2);
    EXPECT_EQ(meta.sample_rate, 16000);
    EXPECT_EQ(meta.num_samples, 160000);
    EXPECT_EQ(meta.encoding, WavEncoding::pcm16);
    const auto sig = read_wav(path);
    EXPECT_EQ(sig.channels(), 2);
    EXPECT_EQ(sig.num_samples(), 160000);
}

TEST(Wav, Pcm16FullScaleNegative) {
    const auto path = scratch("neg.wav").string();
    MultichannelSignal s(RowMatrixXd::Constant(1, 4, -1.0), 8000);
    s.samples(0, 1) = 1.0; // clipped to 32767
    write_wav(path, s, WavEncoding::pcm16);
    const auto back = read_wav(path);
    EXPECT_DOUBLE_EQ(back.samples(0, 0), -1.0);
    EXPECT_DOUBLE_EQ(back.samples(0, 1), 32767.0 / 32768.0);
}

TEST(Wav, Float32RoundTripBitExact) {
    const auto path = scratch("f32.wav").string();
    auto s = noise(3, 1000, 44100, 2);
    s.samples = s.samples.cast<float>().cast<double>();
    write_wav(path, s, WavEncoding::float32);
    const auto back = read_wav(path);
    EXPECT_EQ(back.sample_rate, 44100);
    EXPECT_TRUE(back.samples == s.samples);
}

TEST(Wav, Pcm16RoundTripWithinQuantization) {
    const auto path = scratch("q.wav").string();
    const auto s = noise(2, 5000, 16000, 3, 0.99);
    write_wav(path, s, WavEncoding::pcm16);
    const auto back = read_wav(path);
    EXPECT_LE((back.samples - s.samples).cwiseAbs().maxCoeff(), std::ldexp(1.0, -15));
}

TEST(Wav, Errors) {
    EXPECT_THROW(read_wav(scratch("does_not_exist.wav").string()), FileNotFound);

    const auto good = scratch("good.wav").string();
    write_wav(good, noise(1, 100, 16000, 4), WavEncoding::pcm16);
    std::ifstream in(good, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    const auto truncated = scratch("trunc.wav").string();
    std::ofstream(truncated, std::ios::binary) << bytes.substr(0, 30);
    EXPECT_THROW(read_wav(truncated), MalformedHeader);

    // 24-bit PCM: valid RIFF, unsupported encoding.
    std::string pcm24 = bytes;
    pcm24[34] = 24;
    const auto unsup = scratch("pcm24.wav").string();
    std::ofstream(unsup, std::ios::binary) << pcm24;
    EXPECT_THROW(read_wav(unsup), UnsupportedEncoding);

    EXPECT_THROW(write_wav(good, MultichannelSignal(RowMatrixXd(1, 0), 16000)), InvalidArgument);
    EXPECT_THROW(write_wav("/nonexistent_dir/x.wav", noise(1, 10, 16000, 5)), IoError);
}

TEST(Resample, SameRateIsIdentity) {
    const auto s = noise(2, 3000, 16000, 6);
    const auto r = resample(s, 16000);
    EXPECT_TRUE(r.samples == s.samples);
}

TEST(Resample, DownsampledSineMatchesAnalytic) {
    const int n = 32000;
    RowMatrixXd x(1, n);
    for (int t = 0; t < n; ++t) x(0, t) = std::sin(2 * std::numbers::pi * 1000.0 * t / 32000.0);
    const auto y = resample({x, 32000}, 16000);
    ASSERT_EQ(y.num_samples(), 16000);
    EXPECT_EQ(y.sample_rate, 16000);
    Eigen::VectorXd ref(16000);
    for (int t = 0; t < 16000; ++t) ref(t) = std::sin(2 * std::numbers::pi * 1000.0 * t / 16000.0);
    const Eigen::VectorXd got = y.samples.row(0).transpose();
    const double corr = got.dot(ref) / (got.norm() * ref.norm());
    EXPECT_GE(corr, 0.999);
}

TEST(Resample, UpDownRoundTrip) {
    // Band-limited content: sum of sines well below 0.45 * 16 kHz.
    const int n = 16000;
    RowMatrixXd x = RowMatrixXd::Zero(1, n);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> f(50.0, 6000.0), ph(0.0, 6.28);
    for (int k = 0; k < 20; ++k) {
        const double fk = f(rng), pk = ph(rng);
        for (int t = 0; t < n; ++t) x(0, t) += 0.05 * std::sin(2 * std::numbers::pi * fk * t / 16000.0 + pk);
    }
    const auto up = resample({x, 16000}, 48000);
    EXPECT_EQ(up.num_samples(), 48000);
    const auto back = resample(up, 16000);
    ASSERT_EQ(back.num_samples(), n);
    // Edges lack filter support on one side.
    const Index e = 200;
    const double err = (back.samples.middleCols(e, n - 2 * e) - x.middleCols(e, n - 2 * e)).norm();
    EXPECT_LE(err / x.middleCols(e, n - 2 * e).norm(), 1e-3);
}

TEST(Resample, RejectsBadRate) {
    EXPECT_THROW(resample(noise(1, 10, 16000, 8), 0), InvalidArgument);
}
