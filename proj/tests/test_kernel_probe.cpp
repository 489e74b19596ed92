#include "support.hpp"

#include "ndlab/error.hpp"
#include "ndlab/kernel_probe.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>

using namespace ndlab;
using ndlab::testing::vec;

namespace {

constexpr double kPi = std::numbers::pi;

template <class F>
std::optional<ErrorCode> code_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return std::nullopt;
}

std::vector<double> window() { return probe_radii(0.05, 4.0); }

// Flat half-space surrogate: wide, deep box with the mesh graded around the origin.
struct HalfSpace {
    LayeredDomain domain;
    Mesh mesh;
    FluxBasis basis;

    explicit HalfSpace(double sigma_radius = 2.2, double half_width = 2.5) : domain(make(sigma_radius, half_width)) {
        MeshGrading g;
        g.focus = {Eigen::Vector2d::Zero()};
        g.focus_halfwidth = 0.85;
        g.fine_depth = 0.3;
        g.growth = 1.25;
        g.h_max = 0.5;
        mesh = generate_mesh(domain, {.h = 0.05, .grading = g});
        basis = flux_basis(mesh);
    }

    static LayeredDomain make(double sigma_radius, double half_width) {
        DomainDescription d;
        d.lower = vec({-half_width, -half_width});
        d.upper = vec({half_width, half_width});
        d.top = 2.5;
        d.boundary = InterfaceGraph::plane(0.0, 2.0 * half_width);
        d.sigma = {vec({0.0, 0.0}), sigma_radius};
        return build_layered_domain(d);
    }

    [[nodiscard]] int pole() const { return basis.nearest(Eigen::Vector2d::Zero()); }
};

ProbeOptions relaxed_separation() {
    ProbeOptions o;
    o.separation = 2.0;
    return o;
}

struct HalfSpaceProbe {
    DirectionalEstimate estimate;
    ProbeSeries series;
};

HalfSpaceProbe probe_half_space(const HalfSpace& hs, double q, const Eigen::Vector3d& d) {
    const CoefficientField field({{SymTensor::identity(3), q}}, 10.0);
    const auto options = relaxed_separation();
    const auto radii = window();
    const int y = hs.pole();
    const auto [w, z] = choose_reference_points(hs.basis, y, radii.back(), options.separation);
    const auto lam = assemble_nd(assemble(hs.mesh, field), hs.basis, probe_columns({{y, w, z}}));
    HalfSpaceProbe out;
    out.series = probe_direction(lam, hs.mesh, hs.basis, y, d, radii, w, z, options);
    out.estimate = fit_leading(out.series, 3);
    return out;
}

const HalfSpace& shared_half_space() {
    static const HalfSpace hs;
    return hs;
}

} // namespace

TEST(DimensionalConstant, MatchesUnitBallVolumes) {
    // omega_3 = 4 pi / 3, omega_4 = pi^2 / 2, omega_5 = 8 pi^2 / 15.
    EXPECT_NEAR(dimensional_constant(3), 1.0 / (3.0 * 1.0 * 4.0 * kPi / 3.0), 1e-15);
    EXPECT_NEAR(dimensional_constant(3), 1.0 / (4.0 * kPi), 1e-15);
    EXPECT_NEAR(dimensional_constant(4), 1.0 / (4.0 * kPi * kPi), 1e-15);
    EXPECT_NEAR(dimensional_constant(5), 1.0 / (15.0 * 8.0 * kPi * kPi / 15.0), 1e-15);
    EXPECT_EQ(code_of([] { dimensional_constant(2); }), ErrorCode::DimensionTooSmall);
}

TEST(ProbeRadii, LogSpacedWindowCappedBySigma) {
    const auto r = probe_radii(0.05, 4.0);
    ASSERT_EQ(r.size(), 6u);
    EXPECT_NEAR(r.front(), 0.2, 1e-15);
    EXPECT_NEAR(r.back(), 0.8, 1e-15);
    for (std::size_t i = 1; i + 1 < r.size(); ++i) EXPECT_NEAR(r[i] * r[i], r[i - 1] * r[i + 1], 1e-14);
    EXPECT_NEAR(probe_radii(0.05, 2.0).back(), 0.5, 1e-15);
}

TEST(FitLeading, InvertsExactModelData) {
    const auto radii = window();
    for (int n : {3, 4}) {
        const double g = 2.5;
        std::vector<double> k;
        for (double r : radii)
            k.push_back(2.0 * dimensional_constant(n) * std::pow(g, (2.0 - n) / 2.0) * std::pow(r, 2.0 - n));
        const auto est = fit_leading(radii, k, n);
        EXPECT_NEAR(est.g_hat, 2.5, 1e-12) << n;
        EXPECT_NEAR(est.exponent, 2.0 - n, 1e-12) << n;
        EXPECT_LT(est.residual, 1e-12);
    }
}

TEST(FitLeading, ExactWithOffsetDriftAndMeshTerm) {
    ProbeSeries s;
    s.direction = Eigen::Vector3d::UnitX();
    const double g = 0.7, c = -0.12, b = 0.03, e = 2e-4;
    const double a = 2.0 * dimensional_constant(3) / std::sqrt(g);
    for (int side : {1, -1})
        for (double r : window()) {
            ProbeSample p;
            p.side = side;
            p.target = r;
            p.radius = r * (side > 0 ? 1.0 : 1.01);
            p.kappa = a / p.radius + c + b * side * p.radius + e / std::pow(p.radius, 3);
            s.samples.push_back(p);
        }
    FitOptions unscreened;
    unscreened.screening_max = 0.0;
    const auto est = fit_leading(s, 3, unscreened);
    EXPECT_NEAR(est.g_hat, g, 1e-10);
    EXPECT_NEAR(est.exponent, -1.0, 1e-9);
    EXPECT_NEAR(est.offset, c, 1e-10);
    EXPECT_NEAR(est.drift, b, 1e-10);
    EXPECT_NEAR(est.mesh_correction, e, 1e-12);
}

TEST(FitLeading, SmallHolderRemainderKeepsEstimateWithinTwoPercent) {
    const auto radii = window();
    const double g = 1.7;
    const double a = 2.0 * dimensional_constant(3) / std::sqrt(g);
    std::vector<double> k;
    for (double r : radii) k.push_back(a / r + 0.02 * a * std::pow(r, -0.5));
    const auto est = fit_leading(radii, k, 3);
    EXPECT_NEAR(est.g_hat / g, 1.0, 0.02);
    EXPECT_NEAR(est.exponent, -1.0, 0.3);
}

TEST(FitLeading, RejectsNonSingularAndShortSeries) {
    const auto radii = window();
    EXPECT_EQ(code_of([&] { fit_leading(radii, std::vector<double>(radii.size(), 0.3), 3); }), ErrorCode::BadFit);
    EXPECT_EQ(code_of([] { fit_leading({0.2, 0.3, 0.4}, {5.0, 3.3, 2.5}, 3); }), ErrorCode::BadFit);
    EXPECT_EQ(code_of([] { fit_leading({0.2, 0.3, 0.4, 0.5}, {5.0, 3.3, 2.5, 2.0}, 3); }), ErrorCode::BadFit);
    // Wrong decay: r^{-2} data is outside the exponent window around -1.
    std::vector<double> k;
    for (double r : radii) k.push_back(1.0 / (r * r));
    FitOptions pure_power;
    pure_power.mesh_term = false;
    pure_power.screening_max = 0.0;
    EXPECT_EQ(code_of([&] { fit_leading(radii, k, 3, pure_power); }), ErrorCode::BadFit);
    EXPECT_EQ(code_of([&] { fit_leading(radii, k, 2); }), ErrorCode::DimensionTooSmall);
}

TEST(Polarization, ExactFormsAreReproduced) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> coef(-0.5, 0.5);
    for (int trial = 0; trial < 100; ++trial) {
        const SymTensor g = ndlab::testing::random_spd(rng, 3, 0.3, 3.0);
        const auto graph = InterfaceGraph(GraphKind::polynomial,
                                          {0.0, coef(rng), coef(rng), coef(rng), coef(rng), coef(rng)}, 2.0);
        const Eigen::VectorXd xp = vec({coef(rng), coef(rng)});
        const TangentFrame frame = tangent_frame_at(graph, xp);
        const auto dirs = probe_plane_directions();
        std::vector<DirectionalEstimate> est(dirs.size());
        for (std::size_t k = 0; k < dirs.size(); ++k) {
            est[k].direction = lifted_direction(graph, xp, dirs[k]);
            EXPECT_LT(std::abs(est[k].direction.dot(frame.normal)), 1e-12);
            est[k].g_hat = g.quadratic(est[k].direction, est[k].direction);
        }
        const auto form = form_from_estimates(frame, est);
        const auto exact = tangential_form(g, frame.tangents);
        EXPECT_LT((form.values - exact.values).cwiseAbs().maxCoeff(), 1e-12 * g.matrix().cwiseAbs().maxCoeff());
    }
}

TEST(ProbeColumns, PolesAndFirstReferencesOnly) {
    EXPECT_EQ(probe_columns({{4, 9, 2}, {1, 9, 7}}), (std::vector<int>{1, 4, 9}));
}

TEST(ProbeDirection, SchedulePreconditions) {
    // Uniform flat slab, Sigma radius 1.8: Lambda columns are computed lazily per case.
    DomainDescription d;
    d.lower = vec({-2.0, -2.0});
    d.upper = vec({2.0, 2.0});
    d.top = 0.6;
    d.boundary = InterfaceGraph::plane(0.0, 3.0);
    d.sigma = {vec({0.0, 0.0}), 1.8};
    const auto mesh = generate_mesh(build_layered_domain(d), {.h = 0.1});
    const auto basis = flux_basis(mesh);
    const auto sys = assemble(mesh, CoefficientField({{SymTensor::identity(3), 0.5}}, 10.0));
    const int y = basis.nearest(Eigen::Vector2d::Zero());
    const Eigen::Vector3d dir = Eigen::Vector3d::UnitX();

    // Radii below c_probe h: allowed, but flagged.
    const std::vector<double> small{0.1, 0.2, 0.3};
    const auto [w, z] = choose_reference_points(basis, y, 0.3);
    for (int i : {y, w, z}) EXPECT_TRUE(basis.coords[static_cast<std::size_t>(i)].norm() <= 1.8);
    EXPECT_GE((basis.coords[static_cast<std::size_t>(w)] - basis.coords[static_cast<std::size_t>(z)]).norm(), 1.2);
    const auto lam = assemble_nd(sys, basis, probe_columns({{y, w, z}}));
    const auto series = probe_direction(lam, mesh, basis, y, dir, small, w, z);
    ASSERT_EQ(series.warnings.size(), 1u);
    EXPECT_NE(series.warnings[0].find("CalibrationWarning"), std::string::npos);
    EXPECT_EQ(series.samples.size(), 6u);
    for (const auto& s : series.samples) {
        EXPECT_NEAR(s.radius, s.target, 1e-12);
        EXPECT_DOUBLE_EQ(s.kappa, k_kernel(lam, s.node, y, w, z));
    }

    // w at 2 r_max.
    const int near_w = basis.nearest(Eigen::Vector2d(0.0, 0.6));
    EXPECT_EQ(code_of([&] { probe_direction(lam, mesh, basis, y, dir, small, near_w, z); }),
              ErrorCode::PointsTooClose);
    // A radius beyond the patch.
    EXPECT_EQ(code_of([&] { probe_direction(lam, mesh, basis, y, dir, {0.1, 0.2, 1.9}, w, z, relaxed_separation()); }),
              ErrorCode::PointsTooClose);
    ProbeOptions loose;
    loose.separation = 0.5;
    EXPECT_EQ(code_of([&] { probe_direction(lam, mesh, basis, y, dir, {0.1, 0.2, 1.9}, w, z, loose); }),
              ErrorCode::ProbeLeavesSigma);
    EXPECT_EQ(code_of([&] { choose_reference_points(basis, y, 1.0); }), ErrorCode::PointsTooClose);
}

TEST(RecoverBoundaryG, FlatPatchIsRejectedBeforeProbing) {
    DomainDescription d;
    d.lower = vec({-1.0, -1.0});
    d.upper = vec({1.0, 1.0});
    d.top = 0.5;
    d.boundary = InterfaceGraph::plane(0.0, 2.0);
    d.sigma = {vec({0.0, 0.0}), 0.9};
    const auto domain = build_layered_domain(d);
    const auto mesh = generate_mesh(domain, {.h = 0.1});
    const auto basis = flux_basis(mesh);
    // No column is known: the gate must fire on geometry alone.
    const NDMatrix empty(basis.nodes, basis.coords, Eigen::MatrixXd::Zero(basis.size(), basis.size()),
                         std::vector<bool>(static_cast<std::size_t>(basis.size()), false));
    const std::array<int, 3> poles{basis.nearest({0.0, 0.0}), basis.nearest({0.5, 0.0}), basis.nearest({0.0, 0.5})};
    EXPECT_EQ(code_of([&] { recover_boundary_g(empty, mesh, basis, domain.boundary(), poles, {0.1, 0.2, 0.4}); }),
              ErrorCode::InadmissibleGammas);
}

TEST(HalfSpaceProbe, LeadingTermMatchesImageMethod) {
    const auto& hs = shared_half_space();
    for (const Eigen::Vector3d d : {Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(0, 1, 0)}) {
        const auto p = probe_half_space(hs, 0.01, d);
        // Half-space Neumann kernel for sigma = I on the boundary: 2 C_3 / r = 1 / (2 pi r).
        EXPECT_NEAR(p.estimate.amplitude * 2.0 * kPi, 1.0, 0.05);
        EXPECT_NEAR(p.estimate.exponent, -1.0, 0.15);
        EXPECT_NEAR(p.estimate.g_hat, 1.0, 0.1);
        for (const auto& s : p.series.samples) {
            const double singular = s.kappa - p.estimate.offset - p.estimate.drift * s.side * s.radius;
            EXPECT_NEAR(singular * 2.0 * kPi * s.radius, 1.0, 0.1) << s.radius;
        }
    }
}

TEST(HalfSpaceProbe, LeadingTermIgnoresQ) {
    const auto& hs = shared_half_space();
    const Eigen::Vector3d d(1, 0, 0);
    const double low = probe_half_space(hs, 0.01, d).estimate.g_hat;
    const double high = probe_half_space(hs, 1.0, d).estimate.g_hat;
    EXPECT_LT(std::abs(high - low) / low, 0.05);
}

TEST(ProbeCsv, OneRowPerSample) {
    ProbeSeries s;
    s.pole = 3;
    s.direction = Eigen::Vector3d::UnitY();
    s.samples.resize(4);
    DirectionalEstimate e;
    e.g_hat = 1.25;
    std::ostringstream out;
    write_probe_csv({{s, e}}, out);
    const std::string text = out.str();
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
    EXPECT_EQ(text.rfind("series,pole,", 0), 0u);
    EXPECT_NE(text.find(",1.25,"), std::string::npos);
}
