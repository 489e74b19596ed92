#include "support.hpp"

#include "ndlab/error.hpp"
#include "ndlab/metric_algebra.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace ndlab;
using ndlab::testing::random_spd;
using ndlab::testing::vec;

namespace {

double max_abs_diff(const SymTensor& a, const SymTensor& b) {
    return (a.matrix() - b.matrix()).cwiseAbs().maxCoeff();
}

std::array<TangentialForm, 3> forms_for(const SymTensor& g, const GammaTriple& gammas) {
    const auto bases = canonical_plane_bases(gammas);
    return {tangential_form(g, bases[0]), tangential_form(g, bases[1]), tangential_form(g, bases[2])};
}

/// Canonical triple with a random orthogonal rotation attached.
GammaTriple rotated_triple(double g1, double g2, double g3, int n, std::mt19937_64& rng) {
    auto t = GammaTriple::from_values(g1, g2, g3, n);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = normal(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    t.rotation = qr.householderQ();
    return t;
}

} // namespace

TEST(SymTensor, StorageAndAccess) {
    Eigen::Matrix3d m;
    m << 2, 0.3, 0.1, 0.3, 1.5, 0.2, 0.1, 0.2, 1.0;
    const SymTensor s(m);
    EXPECT_EQ(s.packed().size(), 6u);
    EXPECT_DOUBLE_EQ(s(2, 0), 0.1);
    EXPECT_DOUBLE_EQ(s(0, 2), 0.1);
    EXPECT_TRUE(s.is_spd());
    EXPECT_EQ(SymTensor::from_upper(3, s.packed()), s);
    Eigen::Matrix3d bad = m;
    bad(0, 1) = 1.0;
    EXPECT_THROW(SymTensor{bad}, Error);
}

TEST(MetricConversion, Identity) {
    EXPECT_EQ(max_abs_diff(g_from_sigma(SymTensor::identity(3)), SymTensor::identity(3)), 0.0);
    EXPECT_LT(max_abs_diff(sigma_from_g(SymTensor::identity(3)), SymTensor::identity(3)), 1e-15);
}

TEST(MetricConversion, DiagonalExample) {
    // det sigma = 36, sigma^{-1} = diag(1, 1/4, 1/9).
    const auto g = g_from_sigma(SymTensor::diagonal(vec({1, 4, 9})));
    EXPECT_LT(max_abs_diff(g, SymTensor::diagonal(vec({36, 9, 4}))), 1e-12);
    // det g = 1296, sqrt = 36.
    const auto s = sigma_from_g(SymTensor::diagonal(vec({36, 9, 4})));
    EXPECT_LT(max_abs_diff(s, SymTensor::diagonal(vec({1, 4, 9}))), 1e-13);
}

TEST(MetricConversion, Errors) {
    try {
        g_from_sigma(SymTensor::identity(2));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DimensionTooSmall);
    }
    try {
        g_from_sigma(SymTensor::diagonal(vec({1, -1, 1})));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NotSPD);
    }
}

TEST(MetricConversion, RandomRoundTrips) {
    std::mt19937_64 rng(11);
    for (int n : {3, 4, 5}) {
        for (int trial = 0; trial < 1000; ++trial) {
            const auto sigma = random_spd(rng, n);
            const auto g = g_from_sigma(sigma);
            EXPECT_TRUE(g.is_spd());
            const double scale_s = sigma.matrix().cwiseAbs().maxCoeff();
            const double scale_g = g.matrix().cwiseAbs().maxCoeff();
            ASSERT_LT(max_abs_diff(sigma_from_g(g), sigma) / scale_s, 1e-12);
            ASSERT_LT(max_abs_diff(g_from_sigma(sigma_from_g(g)), g) / scale_g, 1e-12);
        }
    }
}

TEST(TangentialForm, Examples) {
    const auto g = SymTensor::diagonal(vec({2, 3, 5}));
    Eigen::MatrixXd b(3, 2);
    b << 1, 0, 0, 1, 0, 0;
    EXPECT_LT((tangential_form(g, b).values - Eigen::Matrix2d(Eigen::Vector2d(2, 3).asDiagonal())).norm(), 1e-15);
    b << 1, 0, 0, 1 / std::sqrt(2.0), 0, 1 / std::sqrt(2.0);
    const auto f = tangential_form(g, b);
    EXPECT_NEAR(f.values(1, 1), 4.0, 1e-14);
    EXPECT_NEAR(f.values(0, 0), 2.0, 1e-14);
    EXPECT_NEAR(f.evaluate(vec({0, 1, 1}), vec({0, 1, 1})), 8.0, 1e-13);

    b << 1, 0.1, 0, 1, 0, 0;
    EXPECT_THROW(tangential_form(g, b), Error);

    std::mt19937_64 rng(5);
    const auto s = random_spd(rng, 3);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(Eigen::MatrixXd::Random(3, 3));
    const Eigen::MatrixXd q = qr.householderQ();
    const auto fi = tangential_form(SymTensor::identity(3), q.leftCols(2));
    EXPECT_LT((fi.values - Eigen::Matrix2d::Identity()).norm(), 1e-14);
    EXPECT_GT(tangential_form(s, q.leftCols(2)).values.llt().info() == Eigen::Success, 0);
}

TEST(Assembly, IdentityForAnyAdmissibleGammas) {
    std::mt19937_64 rng(9);
    for (auto [g1, g2, g3] : {std::tuple{0.7, 0.2, 0.4}, std::tuple{0.3, -0.5, 0.0}, std::tuple{-1.2, 0.4, 2.0}}) {
        const auto gammas = rotated_triple(g1, g2, g3, 3, rng);
        const auto g = assemble_g(forms_for(SymTensor::identity(3), gammas), gammas);
        EXPECT_LT(max_abs_diff(g, SymTensor::identity(3)), 1e-12);
    }
}

TEST(Assembly, ReferenceTensorRoundTrip) {
    Eigen::Matrix3d m;
    m << 2, 0.3, 0.1, 0.3, 1.5, 0.2, 0.1, 0.2, 1.0;
    const SymTensor g(m);
    const auto gammas = GammaTriple::from_values(0.7, 0.2, 0.4);
    const auto result = assemble_g_detailed(forms_for(g, gammas), gammas);
    EXPECT_LT(max_abs_diff(result.g, g), 1e-10);
    // G = (g_{n-1,n}, g_{n,n}) read directly from the truth.
    EXPECT_NEAR(result.system.G[0], 0.2, 1e-12);
    EXPECT_NEAR(result.system.G[1], 1.0, 1e-12);
    EXPECT_TRUE(result.system.least_squares);
}

TEST(Assembly, InadmissibleGammasRaise) {
    EXPECT_THROW(GammaTriple::from_values(0.5, 0.5, 0.0), Error);
    // Bypass the constructor check: assemble_g must still refuse.
    GammaTriple t = GammaTriple::from_values(0.5, 0.2, 0.0);
    t.gamma2 = 0.5;
    try {
        assemble_g(forms_for(SymTensor::identity(3), GammaTriple::from_values(0.5, 0.2, 0.0)), t);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InadmissibleGammas);
    }
}

TEST(Assembly, CorruptedFormsAreInconsistent) {
    const auto g = SymTensor::diagonal(vec({2, 3, 5}));
    const auto gammas = GammaTriple::from_values(0.7, 0.2, 0.4);
    auto forms = forms_for(g, gammas);
    forms[2].values(1, 1) += 0.5;
    try {
        assemble_g(forms, gammas);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InconsistentForms);
    }
}

TEST(Assembly, BlockDeterminantsMatchClosedForms) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    int checked = 0;
    while (checked < 1000) {
        const double g1 = u(rng), g2 = u(rng), g3 = u(rng);
        if (!gammas_admissible(g1, g2, g3)) continue;
        const auto d = block_determinants(GammaTriple::from_values(g1, g2, g3));
        ASSERT_NEAR(d[0], 2 * g3 * g3, 1e-14);
        ASSERT_NEAR(d[1], 2 * g2 * (g2 - g1), 1e-14);
        ++checked;
    }
}

TEST(Assembly, RandomRoundTripsAcrossDimensions) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int n : {3, 4, 5}) {
        int done = 0;
        while (done < 400) {
            const double g1 = u(rng), g2 = u(rng), g3 = (done % 4 == 0) ? 0.0 : u(rng);
            const double strength = std::min(std::abs(g1), std::max(std::abs(g3), std::abs(g2) * std::abs(g1 - g2)));
            if (strength < 0.05 || !gammas_admissible(g1, g2, g3)) continue;
            const auto gammas = rotated_triple(g1, g2, g3, n, rng);
            const auto g = random_spd(rng, n);
            const auto back = assemble_g(forms_for(g, gammas), gammas);
            ASSERT_LT(max_abs_diff(back, g), 1e-10) << "n=" << n << " gammas " << g1 << " " << g2 << " " << g3;
            ++done;
        }
    }
}

TEST(Assembly, PerturbationBoundedByConditionNumber) {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> noise(-1.0, 1.0);
    const double delta = 1e-8;
    for (auto [g1, g2, g3] : {std::tuple{0.7, 0.2, 0.4}, std::tuple{0.3, 0.9, 0.0}, std::tuple{1.5, -0.4, 0.1}}) {
        const auto gammas = GammaTriple::from_values(g1, g2, g3);
        const auto g = random_spd(rng, 3, 0.5, 2.0);
        auto forms = forms_for(g, gammas);
        for (auto& f : forms) {
            Eigen::Matrix2d e;
            e << noise(rng), noise(rng), 0, noise(rng);
            e(1, 0) = e(0, 1);
            f.values += delta * e;
        }
        const auto result = assemble_g_detailed(forms, gammas);
        const double err = max_abs_diff(result.g, g);
        // c(n) = 10 covers the gamma-scaled row combinations feeding G.
        const double scale = 1.0 + 1.0 / std::min(std::abs(g1), 1.0);
        EXPECT_LE(err, 10.0 * scale * result.system.condition * delta) << g1 << " " << g2 << " " << g3;
    }
}

TEST(Assembly, PolarizationAgreesWithDirectEntries) {
    std::mt19937_64 rng(2);
    const auto g = random_spd(rng, 3);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(Eigen::MatrixXd::Random(3, 3));
    const Eigen::MatrixXd q = qr.householderQ();
    const Eigen::VectorXd u1 = q.col(0), u2 = q.col(1);
    const double d1 = g.quadratic(u1, u1), d2 = g.quadratic(u2, u2);
    const Eigen::VectorXd s = (u1 + u2) / std::sqrt(2.0);
    const double off = g.quadratic(s, s) - 0.5 * (d1 + d2);
    EXPECT_NEAR(off, tangential_form(g, q.leftCols(2)).values(0, 1), 1e-12);
}
