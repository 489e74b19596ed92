#include "support.hpp"

#include "ndlab/error.hpp"
#include "ndlab/nd_map.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace ndlab;
using ndlab::testing::unit_cube;
using ndlab::testing::vec;

namespace {

CoefficientField two_layer(double s2_scale = 1.0, double q1 = 0.3, double q2 = 1.0) {
    const SymTensor s2(SymTensor::diagonal(vec({2, 1.5, 0.8})).matrix() * s2_scale);
    return CoefficientField({{SymTensor::identity(3), q1}, {s2, q2}}, 10.0);
}

struct Fixture {
    Mesh mesh = generate_mesh(unit_cube({0.5}, 0.4), {.h = 0.1});
    FluxBasis basis = flux_basis(mesh);
};

} // namespace

TEST(FluxBasis, CountMatchesDiscInteriorNodes) {
    const auto mesh = generate_mesh(unit_cube({0.5}, 0.4), {.h = 0.1});
    const auto basis = flux_basis(mesh);
    // Oracle: node (i, j) is interior to the Sigma triangulation when the six
    // neighbours sharing a Kuhn bottom triangle with it all lie in the disc.
    auto in_disc = [](int i, int j) { return std::hypot(i * 0.1 - 0.5, j * 0.1 - 0.5) <= 0.4 + 1e-10; };
    int expected = 0;
    for (int i = 0; i <= 10; ++i)
        for (int j = 0; j <= 10; ++j) {
            bool all = in_disc(i, j);
            for (auto [di, dj] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {-1, -1}})
                all = all && in_disc(i + di, j + dj);
            expected += all ? 1 : 0;
        }
    EXPECT_EQ(basis.size(), expected);
    EXPECT_GT(expected, 20);
}

TEST(FluxBasis, UnitIntegralAndEmptySigma) {
    Fixture f;
    const Eigen::SparseMatrix<double> mb = boundary_mass(f.mesh);
    const Eigen::SparseMatrix<double> d = f.basis.densities(f.mesh.node_count());
    const Eigen::VectorXd integrals = (mb * d).transpose() * Eigen::VectorXd::Ones(f.mesh.node_count());
    EXPECT_LT((integrals.array() - 1.0).abs().maxCoeff(), 1e-12);

    const auto tiny = generate_mesh(unit_cube({0.5}, 0.01), {.h = 0.125});
    try {
        flux_basis(tiny);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptySigma);
    }
}

TEST(NDMatrix, SymmetricPositiveDefiniteWithEnergyDiagonal) {
    Fixture f;
    const auto coeffs = two_layer();
    const auto sys = assemble(f.mesh, coeffs);
    const auto lam = assemble_nd(sys, f.basis);
    EXPECT_LT(lam.symmetry_error(), 1e-10);
    EXPECT_TRUE(lam.positive_definite());
    for (int i = 0; i < lam.size(); i += 5) {
        Eigen::VectorXd c = Eigen::VectorXd::Zero(lam.size());
        c[i] = 1.0;
        const Eigen::VectorXd u = solve_neumann(sys, f.basis.combination(c, f.mesh.node_count()));
        EXPECT_NEAR(lam.values()(i, i), sys.energy(u), 1e-10 * sys.energy(u));
        EXPECT_GT(lam.values()(i, i), 0.0);
    }
}

TEST(NDMatrix, DoublingQDecreasesEveryDiagonalPairing) {
    Fixture f;
    const auto a = assemble_nd(assemble(f.mesh, two_layer(1.0, 0.3, 1.0)), f.basis);
    const auto b = assemble_nd(assemble(f.mesh, two_layer(1.0, 0.6, 2.0)), f.basis);
    for (int i = 0; i < a.size(); ++i) EXPECT_LT(b.values()(i, i), a.values()(i, i));
}

TEST(NDMatrix, PartialColumnsAgreeWithFullMatrix) {
    Fixture f;
    const auto sys = assemble(f.mesh, two_layer());
    const auto full = assemble_nd(sys, f.basis);
    const auto part = assemble_nd(sys, f.basis, std::vector<int>{0, 3, 7});
    EXPECT_FALSE(part.complete());
    EXPECT_NEAR(part.entry(3, 10), full.values()(3, 10), 1e-14);
    EXPECT_NEAR(part.entry(10, 7), full.values()(10, 7), 1e-14);
    EXPECT_THROW((void)part.entry(10, 11), Error);
}

TEST(NDMatrix, CsvRoundTripIsBitExact) {
    Fixture f;
    const auto lam = assemble_nd(assemble(f.mesh, two_layer()), f.basis, std::vector<int>{1, 2, 5});
    std::stringstream s;
    write_nd_csv(lam, s);
    const auto back = read_nd_csv(s);
    EXPECT_TRUE(back == lam);
    std::stringstream again;
    write_nd_csv(back, again);
    EXPECT_EQ(again.str(), s.str());
}

TEST(Alessandrini, EqualCoefficientsGiveZero) {
    Fixture f;
    const auto k = two_layer();
    const auto sys = assemble(f.mesh, k);
    const auto lam = assemble_nd(sys, f.basis);
    Eigen::VectorXd c1 = Eigen::VectorXd::LinSpaced(lam.size(), 0.1, 1.0);
    Eigen::VectorXd c2 = Eigen::VectorXd::LinSpaced(lam.size(), 1.0, -0.5);
    const auto u1 = solve_neumann(sys, f.basis.combination(c1, f.mesh.node_count()));
    const auto u2 = solve_neumann(sys, f.basis.combination(c2, f.mesh.node_count()));
    const auto gap = alessandrini_gap(lam, lam, c1, c2, u1, u2, f.mesh, k, k);
    EXPECT_EQ(gap.lhs, 0.0);
    EXPECT_EQ(gap.rhs, 0.0);
}

TEST(Alessandrini, IdentityHoldsAndIsAntisymmetric) {
    Fixture f;
    const auto k1 = two_layer(1.0);
    const auto k2 = two_layer(1.1);
    const auto s1 = assemble(f.mesh, k1);
    const auto s2 = assemble(f.mesh, k2);
    const auto l1 = assemble_nd(s1, f.basis);
    const auto l2 = assemble_nd(s2, f.basis);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> normal;
    Eigen::VectorXd c1(l1.size()), c2(l1.size());
    for (int i = 0; i < l1.size(); ++i) {
        c1[i] = normal(rng);
        c2[i] = normal(rng);
    }
    const auto u1 = solve_neumann(s1, f.basis.combination(c1, f.mesh.node_count()));
    const auto u2 = solve_neumann(s2, f.basis.combination(c2, f.mesh.node_count()));
    const auto gap = alessandrini_gap(l1, l2, c1, c2, u1, u2, f.mesh, k1, k2);
    EXPECT_GT(std::abs(gap.rhs), 1e-8);
    EXPECT_LT(std::abs(gap.lhs - gap.rhs) / std::abs(gap.rhs), 1e-8);

    // Swapping the roles of the two fields: fluxes stay attached to their solutions.
    const auto v1 = solve_neumann(s2, f.basis.combination(c1, f.mesh.node_count()));
    const auto v2 = solve_neumann(s1, f.basis.combination(c2, f.mesh.node_count()));
    const auto swapped = alessandrini_gap(l2, l1, c1, c2, v1, v2, f.mesh, k2, k1);
    EXPECT_LT(std::abs(swapped.lhs - swapped.rhs) / std::abs(swapped.rhs), 1e-8);
    // With symmetric Lambda, <c1,(L1-L2)c2> = -<c1,(L2-L1)c2>.
    EXPECT_NEAR(swapped.lhs, -gap.lhs, 1e-12 * std::abs(gap.lhs) + 1e-15);
}

TEST(Alessandrini, MeshMismatch) {
    Fixture f;
    const auto k = two_layer();
    const auto lam = assemble_nd(assemble(f.mesh, k), f.basis);
    const Eigen::VectorXd c = Eigen::VectorXd::Ones(lam.size());
    const Eigen::VectorXd u = Eigen::VectorXd::Zero(f.mesh.node_count() + 1);
    EXPECT_THROW(alessandrini_gap(lam, lam, c, c, u, u, f.mesh, k, k), Error);
}

TEST(KKernel, TelescopingSymmetryAndDistinctness) {
    Fixture f;
    const auto lam = assemble_nd(assemble(f.mesh, two_layer()), f.basis);
    EXPECT_EQ(k_kernel(lam, 3, 5, 5, 9, false), 0.0);
    EXPECT_EQ(k_kernel(lam, 4, 5, 8, 4, false), 0.0);
    EXPECT_NEAR(k_kernel(lam, 1, 6, 11, 14), k_kernel(lam, 6, 1, 14, 11), 1e-14);
    try {
        k_kernel(lam, 1, 1, 2, 3);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::CoincidingPoints);
    }
    // Adding the same flux offset to the y and w arguments leaves K unchanged.
    const int m = lam.size();
    Eigen::VectorXd ex = Eigen::VectorXd::Unit(m, 2) - Eigen::VectorXd::Unit(m, 12);
    Eigen::VectorXd offset = Eigen::VectorXd::LinSpaced(m, -1.0, 2.0);
    Eigen::VectorXd ey = Eigen::VectorXd::Unit(m, 7) + offset;
    Eigen::VectorXd ew = Eigen::VectorXd::Unit(m, 15) + offset;
    EXPECT_NEAR(ex.dot(lam.values() * (ey - ew)), k_kernel(lam, 2, 7, 15, 12), 1e-12);
}

TEST(Uniqueness, DistinctFieldsGiveDistinctMaps) {
    Fixture f;
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.6, 1.6);
    const auto base = two_layer();
    const auto l0 = assemble_nd(assemble(f.mesh, base), f.basis);
    EXPECT_LT((l0.values() - assemble_nd(assemble(f.mesh, two_layer()), f.basis).values()).norm(), 1e-10);
    for (int trial = 0; trial < 5; ++trial) {
        const CoefficientField other({base.layer(0), {SymTensor::diagonal(vec({u(rng), u(rng), u(rng)})), u(rng)}},
                                     10.0);
        const auto l1 = assemble_nd(assemble(f.mesh, other), f.basis);
        EXPECT_GT((l0.values() - l1.values()).norm(), 1e-6);
    }
}

TEST(Transfer, IdentityTransferReproducesOwnBasis) {
    Fixture f;
    const auto sys = assemble(f.mesh, two_layer());
    const auto direct = assemble_nd(sys, f.basis);
    const auto moved = assemble_nd_transferred(sys, f.basis, f.mesh);
    EXPECT_LT((direct.values() - moved.values()).cwiseAbs().maxCoeff() / direct.values().cwiseAbs().maxCoeff(),
              1e-12);
}

TEST(Transfer, FinerMeshDataIsCloseButNotIdentical) {
    Fixture f;
    const auto fine = generate_mesh(unit_cube({0.5}, 0.4), {.h = 0.05});
    const auto k = two_layer();
    const auto coarse = assemble_nd(assemble(f.mesh, k), f.basis);
    const auto data = assemble_nd_transferred(assemble(fine, k), f.basis, f.mesh);
    const double rel = (coarse.values() - data.values()).norm() / data.values().norm();
    EXPECT_GT(rel, 1e-6);
    EXPECT_LT(rel, 0.1);
    EXPECT_LT(data.symmetry_error(), 1e-10);
    // Transferred densities keep unit integrals on the fine boundary.
    const Eigen::SparseMatrix<double> d = transfer_densities(f.basis, f.mesh, fine);
    const Eigen::VectorXd integrals =
        (boundary_mass(fine) * d).transpose() * Eigen::VectorXd::Ones(fine.node_count());
    EXPECT_LT((integrals.array() - 1.0).abs().maxCoeff(), 1e-12);
}
