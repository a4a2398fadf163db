#include "bnpbss/demixing.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace bnpbss;

namespace {

using cd = std::complex<double>;

Spectrogram random_spec(Index I, Index J, Index M, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Spectrogram X(I, J, M, 2 * (I - 1), I - 1, 16000);
    for (Index i = 0; i < I; ++i)
        for (Index j = 0; j < J; ++j)
            for (Index m = 0; m < M; ++m) X(i, j, m) = cd(n(rng), n(rng));
    return X;
}

Eigen::MatrixXcd random_matrix(Index M, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    return Eigen::MatrixXcd::NullaryExpr(M, M, [&] { return cd(n(rng), n(rng)); });
}

std::vector<Eigen::MatrixXd> random_variances(Index I, Index J, Index M, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.05, 3.0);
    std::vector<Eigen::MatrixXd> r;
    for (Index m = 0; m < M; ++m) r.push_back(Eigen::MatrixXd::NullaryExpr(I, J, [&] { return u(rng); }));
    return r;
}

} // namespace

TEST(WeightedCovariance, SingleFrameExample) {
    Spectrogram X(1, 1, 2, 8, 4, 16000);
    X(0, 0, 0) = 1.0;
    const Eigen::MatrixXcd V = weighted_covariance(X, Eigen::MatrixXd::Constant(1, 1, 2.0), 0);
    Eigen::MatrixXcd expected = Eigen::MatrixXcd::Zero(2, 2);
    expected(0, 0) = 0.5;
    EXPECT_TRUE(V.isApprox(expected, 1e-15));
}

TEST(WeightedCovariance, UnitWeightsGiveSampleCovariance) {
    std::mt19937_64 rng(1);
    const auto X = random_spec(3, 40, 3, rng);
    const Eigen::MatrixXcd V = weighted_covariance(X, Eigen::MatrixXd::Ones(3, 40), 1);
    Eigen::MatrixXcd S = Eigen::MatrixXcd::Zero(3, 3);
    for (Index j = 0; j < 40; ++j) S += X.vec(1, j) * X.vec(1, j).adjoint();
    EXPECT_TRUE(V.isApprox(S / 40.0, 1e-13));
    EXPECT_TRUE(V.isApprox(V.adjoint(), 1e-15));
}

TEST(WeightedCovariance, RejectsNonPositiveVariance) {
    std::mt19937_64 rng(2);
    const auto X = random_spec(2, 3, 2, rng);
    Eigen::MatrixXd r = Eigen::MatrixXd::Ones(2, 3);
    r(0, 1) = 0.0;
    EXPECT_THROW(weighted_covariance(X, r, 0), InvalidArgument);
    EXPECT_THROW(weighted_covariance(X, Eigen::MatrixXd::Ones(3, 3), 0), InvalidArgument);
}

TEST(IpUpdate, Examples) {
    const Eigen::MatrixXcd I2 = Eigen::MatrixXcd::Identity(2, 2);
    EXPECT_TRUE(ip_update(I2, I2, 1).isApprox(Eigen::VectorXcd::Unit(2, 1), 1e-15));

    Eigen::MatrixXcd V = Eigen::MatrixXcd::Zero(2, 2);
    V(0, 0) = 4.0;
    V(1, 1) = 1.0;
    const Eigen::VectorXcd w = ip_update(I2, V, 0);
    EXPECT_NEAR(std::abs(w(0) - cd(0.5, 0.0)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(w(1)), 0.0, 1e-15);
    EXPECT_THROW(ip_update(I2, V, 2), IndexError);
}

TEST(IpUpdate, NormalizationHolds) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const Index M = 2 + trial % 3;
        const Eigen::MatrixXcd W = random_matrix(M, rng);
        const Eigen::MatrixXcd B = random_matrix(M, rng);
        const Eigen::MatrixXcd V = B * B.adjoint() / static_cast<double>(M);
        for (Index m = 0; m < M; ++m) {
            const Eigen::VectorXcd w = ip_update(W, V, m);
            EXPECT_NEAR((w.adjoint() * V * w)(0, 0).real(), 1.0, 1e-10);
        }
    }
}

TEST(IpUpdate, SingularCovarianceIsRegularized) {
    Eigen::MatrixXcd V = Eigen::MatrixXcd::Zero(2, 2);
    V(0, 0) = 1.0;
    const Eigen::VectorXcd w = ip_update(Eigen::MatrixXcd::Identity(2, 2), V, 1);
    EXPECT_TRUE(w.allFinite());

    Eigen::MatrixXcd W = Eigen::MatrixXcd::Zero(2, 2);
    EXPECT_THROW(ip_update(W, V, 0), SingularMatrix);
}

TEST(Cost, PlugInExample) {
    std::mt19937_64 rng(4);
    const auto Y = random_spec(4, 6, 2, rng);
    std::vector<Eigen::MatrixXd> r(2, Eigen::MatrixXd(4, 6));
    double expected = 0.0;
    for (Index m = 0; m < 2; ++m)
        for (Index i = 0; i < 4; ++i)
            for (Index j = 0; j < 6; ++j) {
                r[m](i, j) = std::norm(Y(i, j, m));
                expected += std::log(r[m](i, j)) + 1.0;
            }
    EXPECT_NEAR(cost(DemixingStack::identity(4, 2), Y, r), expected, 1e-12 * std::abs(expected));
}

TEST(Cost, RowScalingMatchesReEvaluation) {
    std::mt19937_64 rng(5);
    const Index I = 3, J = 8;
    const auto X = random_spec(I, J, 2, rng);
    const auto r = random_variances(I, J, 2, rng);
    DemixingStack W;
    for (Index i = 0; i < I; ++i) W.matrices.push_back(random_matrix(2, rng));
    const double before = cost(W, demix(W, X), r);

    DemixingStack S = W;
    S.matrices[1].row(0) *= 2.0;
    const auto Y0 = demix(W, X);
    double data_change = 0.0;
    for (Index j = 0; j < J; ++j) data_change += 3.0 * std::norm(Y0(1, j, 0)) / r[0](1, j);
    const double after = cost(S, demix(S, X), r);
    EXPECT_NEAR(after - before, -2.0 * J * std::log(2.0) + data_change, 1e-10 * std::abs(before));
}

TEST(Cost, SingularIsInfinite) {
    std::mt19937_64 rng(6);
    const auto X = random_spec(2, 4, 2, rng);
    auto W = DemixingStack::identity(2, 2);
    W.matrices[0].setZero();
    EXPECT_TRUE(std::isinf(cost(W, demix(W, X), random_variances(2, 4, 2, rng))));
}

TEST(IpSweep, NeverIncreasesCost) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        std::mt19937_64 rng(100 + seed);
        const Index I = 4, J = 30;
        const auto X = random_spec(I, J, 2, rng);
        const auto r = random_variances(I, J, 2, rng);
        DemixingStack W;
        for (Index i = 0; i < I; ++i) W.matrices.push_back(random_matrix(2, rng));
        double prev = cost(W, demix(W, X), r);
        for (int it = 0; it < 50; ++it) {
            ip_sweep(W, X, r);
            const double q = cost(W, demix(W, X), r);
            EXPECT_LE(q, prev + 1e-9 * std::abs(prev)) << seed << " " << it;
            prev = q;
        }
    }
}

TEST(IpSweep, ThreeSourcesNeverIncreaseCost) {
    std::mt19937_64 rng(7);
    const auto X = random_spec(3, 25, 3, rng);
    const auto r = random_variances(3, 25, 3, rng);
    auto W = DemixingStack::identity(3, 3);
    double prev = cost(W, demix(W, X), r);
    for (int it = 0; it < 20; ++it) {
        ip_sweep(W, X, r);
        const double q = cost(W, demix(W, X), r);
        EXPECT_LE(q, prev + 1e-9 * std::abs(prev));
        prev = q;
    }
}

TEST(ProjectBack, ImagesSumToReferenceChannel) {
    std::mt19937_64 rng(8);
    const auto X = random_spec(5, 7, 3, rng);
    DemixingStack W;
    for (Index i = 0; i < 5; ++i) W.matrices.push_back(random_matrix(3, rng));
    const auto Y = demix(W, X);
    for (Index ref = 0; ref < 3; ++ref) {
        const auto img = project_back(W, Y, ref);
        for (Index i = 0; i < 5; ++i)
            for (Index j = 0; j < 7; ++j) {
                cd s = 0.0;
                for (Index m = 0; m < 3; ++m) s += img(i, j, m);
                EXPECT_NEAR(std::abs(s - X(i, j, ref)), 0.0, 1e-10 * (1 + std::abs(X(i, j, ref))));
            }
    }
}

TEST(ProjectBack, IdentityDemixing) {
    std::mt19937_64 rng(9);
    const auto Y = random_spec(3, 4, 2, rng);
    const auto img = project_back(DemixingStack::identity(3, 2), Y, 0);
    for (Index i = 0; i < 3; ++i)
        for (Index j = 0; j < 4; ++j) {
            EXPECT_EQ(img(i, j, 0), Y(i, j, 0));
            EXPECT_EQ(img(i, j, 1), cd(0.0));
        }
}

TEST(ProjectBack, RowScalingInvariance) {
    std::mt19937_64 rng(10);
    const auto X = random_spec(3, 5, 2, rng);
    DemixingStack W;
    for (Index i = 0; i < 3; ++i) W.matrices.push_back(random_matrix(2, rng));
    const auto a = project_back(W, demix(W, X), 1);
    DemixingStack S = W;
    S.matrices[2].row(1) *= cd(-0.3, 2.1);
    const auto b = project_back(S, demix(S, X), 1);
    for (Index i = 0; i < 3; ++i)
        for (Index j = 0; j < 5; ++j)
            for (Index m = 0; m < 2; ++m) EXPECT_NEAR(std::abs(a(i, j, m) - b(i, j, m)), 0.0, 1e-12);
}

TEST(ProjectBack, Errors) {
    std::mt19937_64 rng(11);
    const auto Y = random_spec(2, 3, 2, rng);
    auto W = DemixingStack::identity(2, 2);
    EXPECT_THROW(project_back(W, Y, 2), IndexError);
    W.matrices[1].setZero();
    EXPECT_THROW(project_back(W, Y, 0), SingularMatrix);
}
