#include "bnpbss/stft.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <random>

using namespace bnpbss;

namespace {

MultichannelSignal noise(Index channels, Index n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    RowMatrixXd s(channels, n);
    for (Index c = 0; c < channels; ++c)
        for (Index t = 0; t < n; ++t) s(c, t) = g(rng);
    return {s, 16000};
}

double interior_error(const MultichannelSignal& a, const MultichannelSignal& b, Index L) {
    const Index n = a.num_samples();
    const auto ia = a.samples.middleCols(L, n - 2 * L);
    const auto ib = b.samples.middleCols(L, n - 2 * L);
    return (ia - ib).norm() / ia.norm();
}

} // namespace

TEST(StftPlan, WindowShapeAndRange) {
    const auto plan = StftPlan::hamming(8192, 2048);
    EXPECT_EQ(plan.bins(), 4097);
    EXPECT_DOUBLE_EQ(plan.window[0], 0.08);
    EXPECT_NEAR(plan.window[4096], 1.0, 1e-15);
    for (double w : plan.window) {
        EXPECT_GT(w, 0.0);
        EXPECT_LE(w, 1.08);
    }
    // Periodic: w[n] = w[L - n].
    EXPECT_NEAR(plan.window[1], plan.window[8191], 1e-15);
    EXPECT_THROW(StftPlan::hamming(8191, 2048), InvalidArgument);
    EXPECT_THROW(StftPlan::hamming(8192, 0), InvalidArgument);
    EXPECT_THROW(StftPlan::hamming(8192, 8193), InvalidArgument);
}

TEST(StftPlan, MillisecondsAt16k) {
    const auto plan = StftPlan::from_ms(512.0, 128.0, 16000);
    EXPECT_EQ(plan.window_len(), 8192);
    EXPECT_EQ(plan.hop, 2048);
}

TEST(StftPlan, FrameCountKeepsTail) {
    const auto plan = StftPlan::hamming(8192, 2048);
    // 30 s at 16 kHz: (480000 - 8192) / 2048 = 230.4, so 231 full hops plus the padded tail frame.
    EXPECT_EQ(plan.frames_for(480000), 232);
    EXPECT_EQ(plan.frames_for(8192), 1);
    EXPECT_EQ(plan.frames_for(8192 + 2048), 2);
    EXPECT_EQ(plan.frames_for(8192 + 2049), 3);
    EXPECT_THROW(plan.frames_for(8191), InvalidArgument);
}

TEST(Stft, ConstantSignalIsDc) {
    MultichannelSignal one(RowMatrixXd::Ones(1, 32), 16000);
    // Interior frames only: the padded tail frame is not constant.
    const auto rect = stft(one, StftPlan::rectangular(8, 2));
    EXPECT_EQ(rect.bins(), 5);
    for (Index j = 0; j + 4 <= rect.frames() - 1; ++j) {
        const double dc = std::norm(rect(0, j, 0));
        for (Index i = 1; i < rect.bins(); ++i) EXPECT_LE(std::norm(rect(i, j, 0)), 1e-12 * dc);
    }
    // The periodic Hamming window itself occupies bins 0 and 1 only.
    const auto ham = stft(one, StftPlan::hamming(8, 2));
    for (Index j = 0; j + 4 <= ham.frames() - 1; ++j) {
        EXPECT_NEAR(ham(0, j, 0).real(), 0.54 * 8, 1e-12);
        EXPECT_NEAR(ham(1, j, 0).real(), -0.23 * 8, 1e-12);
        for (Index i = 2; i < ham.bins(); ++i) EXPECT_LE(std::norm(ham(i, j, 0)), 1e-24);
    }
}

TEST(Stft, RectangularMatchesDirectDft) {
    const int L = 16;
    const auto plan = StftPlan::rectangular(L, L);
    RowMatrixXd x(1, L);
    for (int t = 0; t < L; ++t) x(0, t) = std::cos(2 * std::numbers::pi * 3 * t / L + 0.3);
    const auto S = stft({x, 16000}, plan);
    Index best = 0;
    for (Index i = 0; i < S.bins(); ++i) {
        cdouble d = 0;
        for (int t = 0; t < L; ++t) d += x(0, t) * std::polar(1.0, -2 * std::numbers::pi * i * t / L);
        EXPECT_LT(std::abs(S(i, 0, 0) - d), 1e-12);
        if (std::abs(S(i, 0, 0)) > std::abs(S(best, 0, 0))) best = i;
    }
    EXPECT_EQ(best, 3);
}

TEST(Stft, PerfectReconstruction) {
    const auto plan = StftPlan::hamming(8192, 2048);
    const auto x = noise(2, 3 * 16000, 9);
    const auto y = istft(stft(x, plan), plan, x.num_samples());
    EXPECT_LE(interior_error(x, y, 8192), 1e-10);
}

TEST(Stft, ReconstructionPropertyOverShapes) {
    std::mt19937_64 rng(10);
    std::uniform_int_distribution<int> half(2, 256), div(1, 4), extra(0, 3000);
    for (int trial = 0; trial < 20; ++trial) {
        const int L = 2 * half(rng);
        const int hop = std::max(1, L / (1 << div(rng)));
        const Index n = 3 * L + extra(rng);
        const auto plan = StftPlan::hamming(L, hop);
        const auto x = noise(1, n, 100 + trial);
        const auto y = istft(stft(x, plan), plan, n);
        // The tail padding makes reconstruction exact up to the last sample.
        EXPECT_LE((y.samples - x.samples).norm() / x.samples.norm(), 1e-10) << L << " " << hop;
    }
}

TEST(Stft, ZeroSpectrogramGivesZeroSignal) {
    const auto plan = StftPlan::hamming(64, 16);
    Spectrogram S(plan.bins(), 10, 2, 64, 16, 16000);
    EXPECT_TRUE(istft(S, plan, 200).samples.isZero(0.0));
}

TEST(Stft, Linearity) {
    const auto plan = StftPlan::hamming(256, 64);
    const auto a = noise(2, 2000, 11), b = noise(2, 2000, 12);
    const MultichannelSignal c(0.7 * a.samples - 1.3 * b.samples, 16000);
    const auto Sa = stft(a, plan), Sb = stft(b, plan), Sc = stft(c, plan);
    double err = 0, ref = 0;
    for (std::size_t k = 0; k < Sc.raw().size(); ++k) {
        err += std::norm(Sc.raw()[k] - (0.7 * Sa.raw()[k] - 1.3 * Sb.raw()[k]));
        ref += std::norm(Sc.raw()[k]);
    }
    EXPECT_LE(std::sqrt(err / ref), 1e-12);

    Spectrogram Smix = Sa;
    for (std::size_t k = 0; k < Smix.raw().size(); ++k) Smix.raw()[k] = 2.0 * Sa.raw()[k] + 0.5 * Sb.raw()[k];
    const auto ya = istft(Sa, plan, 2000), yb = istft(Sb, plan, 2000), ym = istft(Smix, plan, 2000);
    EXPECT_LE((ym.samples - (2.0 * ya.samples + 0.5 * yb.samples)).norm() / ym.samples.norm(), 1e-12);
}

TEST(Stft, ParsevalPerFrame) {
    const auto plan = StftPlan::hamming(512, 128);
    const auto x = noise(1, 4000, 13);
    const auto S = stft(x, plan);
    const Index L = 512;
    for (Index j = 0; j < S.frames(); ++j) {
        double time = 0.0;
        for (Index n = 0; n < L; ++n) {
            const Index t = j * 128 + n;
            const double v = t < x.num_samples() ? plan.window[static_cast<std::size_t>(n)] * x.samples(0, t) : 0.0;
            time += v * v;
        }
        // One-sided spectrum: interior bins count twice.
        double freq = std::norm(S(0, j, 0)) + std::norm(S(L / 2, j, 0));
        for (Index i = 1; i < L / 2; ++i) freq += 2.0 * std::norm(S(i, j, 0));
        EXPECT_LT(std::abs(freq / L - time) / time, 1e-10);
    }
}

TEST(Stft, ShapeErrors) {
    const auto plan = StftPlan::hamming(64, 16);
    EXPECT_THROW(stft(noise(1, 63, 1), plan), InvalidArgument);
    Spectrogram wrong(10, 3, 1, 64, 16, 16000);
    EXPECT_THROW(istft(wrong, plan, 100), InvalidArgument);
}
