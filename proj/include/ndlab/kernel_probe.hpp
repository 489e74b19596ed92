#pragma once

#include "ndlab/geometry.hpp"
#include "ndlab/metric_algebra.hpp"
#include "ndlab/nd_map.hpp"

#include <Eigen/Dense>

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ndlab {

/// C_n = 1 / (n (n - 2) omega_n), omega_n the volume of the unit ball. DimensionTooSmall for n < 3.
double dimensional_constant(int n);

struct ProbeSample {
    int node = -1;          // basis index of x_m
    int side = 1;           // +1 for y + r d, -1 for y - r d
    double target = 0.0;    // requested radius
    double radius = 0.0;    // |x_m - y|
    Eigen::Vector3d chord = Eigen::Vector3d::Zero(); // x_m - y
    double kappa = 0.0;     // K(x_m, y, w, z)
};

struct ProbeSeries {
    int pole = -1; // basis index of y
    int w = -1;
    int z = -1;
    Eigen::Vector3d direction = Eigen::Vector3d::Zero();
    std::vector<ProbeSample> samples;
    std::vector<std::string> warnings; // CalibrationWarning entries
    double log_ratio = 0.0; // beta in the singular profile r^{2-n} + beta ln r (curved patches, n = 3)
};

struct DirectionalEstimate {
    Eigen::Vector3d direction = Eigen::Vector3d::Zero();
    double g_hat = 0.0;     // estimate of g(y) d . d (fit with the exponent fixed at 2 - n)
    double amplitude = 0.0; // 2 C_n g_hat^{(2-n)/2}
    double offset = 0.0;    // fitted constant absorbing the smooth part of K
    double drift = 0.0;     // fitted odd term b in b (+-r) (two-sided series only)
    double mesh_correction = 0.0; // fitted e in e r^{-n}
    double screening = 0.0;       // fitted mu in exp(-mu r) (zeroth-order term)
    double exponent = 0.0;  // free-fit exponent p_hat
    double residual = 0.0;  // RMS relative residual of the free fit
};

struct FitOptions {
    double tau_fit = 0.05;
    double exponent_window = 0.3;
    bool mesh_term = true;      // fit the (h/r)^2 mesh correction e r^{-n} alongside the singular term
    double screening_max = 4.0; // bound on mu r_max for the screening factor exp(-mu r); 0 disables it
};

struct ProbeOptions {
    double c_probe = 4.0;      // r_min = c_probe h
    double c_max = 16.0;       // r_max = min(c_max h, R_Sigma / 4)
    int radii = 6;
    bool antipodal = true;     // also sample y - r d
    double separation = 4.0;   // |y-w|, |y-z|, |w-z| >= separation r_max
    FitOptions fit;
    double lambda = 10.0;      // ellipticity bound checked on sigma_hat
    double consistency_tol = 0.5;
    int chord_passes = 3;      // refits with metric-corrected radii (curved patches)
    bool curvature_term = true; // include the boundary-curvature log term in those refits
};

/// Window [c_probe h, min(c_max h, R_Sigma/4)] with `radii` log-spaced values.
std::vector<double> probe_radii(double h, double sigma_radius, const ProbeOptions& options = {});

/// Basis indices (w, z) far from y: |y-w|, |y-z|, |w-z| >= separation * r_max,
/// preferring the pair that maximizes the smallest of the three distances. PointsTooClose.
std::pair<int, int> choose_reference_points(const FluxBasis& basis, int pole, double r_max, double separation = 4.0);

/// Samples K(x_m, y, w, z) at the Sigma nodes nearest to y +- r_m d (x' projection).
/// ProbeLeavesSigma, PointsTooClose; radii below c_probe h add a CalibrationWarning.
ProbeSeries probe_direction(const NDMatrix& lambda, const Mesh& mesh, const FluxBasis& basis, int pole,
                            const Eigen::Vector3d& direction, const std::vector<double>& radii, int w, int z,
                            const ProbeOptions& options = {});

/// Fits kappa = a r^p exp(-mu r) + c (+ e r^{-n} with mesh_term), relative least
/// squares, mu in [0, screening_max / r_max]. The exponent comes from the free
/// fit; g_hat from the fit with p fixed at 2 - n. BadFit (residual above tau_fit,
/// exponent outside (2 - n) +- window, no positive singular part, fewer than 4
/// radii or a span below 4). The series overload adds an odd term b s r when
/// both sides of the pole were sampled.
DirectionalEstimate fit_leading(const std::vector<double>& radii, const std::vector<double>& kappa, int n,
                                const FitOptions& options = {});
DirectionalEstimate fit_leading(const ProbeSeries& series, int n, const FitOptions& options = {});

/// Copy whose sample radii are the g-lengths of the chords measured in units of
/// the probe direction, sqrt(g(x_m - y) . (x_m - y) / g d . d): on a curved patch
/// the chord leaves the tangent plane. For n = 3 it also sets log_ratio from the
/// mean curvature of the patch in coordinates where sigma is the identity: the
/// kernel there is 1/(2 pi rho) - (H / (4 pi)) ln rho + O(1).
ProbeSeries with_metric_radii(const ProbeSeries& series, const SymTensor& g, double mean_curvature = 0.0);

/// Mean curvature (average of the principal curvatures, positive where the domain
/// is locally convex) of the graph mapped by sigma^{-1/2}, at the image of the graph point over x'.
double transformed_mean_curvature(const InterfaceGraph& graph, const Eigen::VectorXd& xp, const SymTensor& sigma);

/// Columns of Lambda needed to probe with the given (pole, w, z) triples: K only
/// reads the pole and w columns.
std::vector<int> probe_columns(const std::vector<std::array<int, 3>>& triples);

struct WitnessProbe {
    int pole = -1;
    TangentFrame frame;
    std::vector<DirectionalEstimate> estimates; // one per probe_plane_directions() entry
    std::vector<ProbeSeries> series;
    TangentialForm form; // in the frame's tangent basis
};

struct BoundaryRecovery {
    SymTensor g;
    SymTensor sigma;
    GammaTriple gammas;
    AssemblySystem system;
    std::array<WitnessProbe, 3> witnesses;
};

/// x'-directions probed at every witness: the two grid axes and both diagonals.
/// The Kuhn split is not symmetric between the two diagonals, so both are probed
/// and the form is a least-squares fit.
std::vector<Eigen::Vector2d> probe_plane_directions();

/// Lifts an x'-direction to the unit tangent of the graph at x'.
Eigen::Vector3d lifted_direction(const InterfaceGraph& graph, const Eigen::VectorXd& xp, const Eigen::Vector2d& a);

/// Tangential form of g at y from at least three directional estimates (generalized
/// polarization: least-squares solve for the 2 x 2 form in the frame basis from g(d_k, d_k)).
TangentialForm form_from_estimates(const TangentFrame& frame, const std::vector<DirectionalEstimate>& estimates);

/// Probes the probe_plane_directions() at each witness pole (basis indices), builds
/// the tangential forms, and assembles g with the three-plane algebra. The fits
/// are then repeated chord_passes times with radii and the curvature term from
/// with_metric_radii(g_hat) and transformed_mean_curvature(sigma_hat).
/// Propagates BadFit / InadmissibleGammas; AnisotropyOutOfRange if sigma_hat
/// violates lambda. `references` gives (w, z) per witness, or is chosen automatically.
BoundaryRecovery recover_boundary_g(const NDMatrix& lambda, const Mesh& mesh, const FluxBasis& basis,
                                    const InterfaceGraph& interface, const std::array<int, 3>& poles,
                                    const std::vector<double>& radii,
                                    const std::optional<std::array<std::pair<int, int>, 3>>& references = std::nullopt,
                                    const ProbeOptions& options = {});

/// CSV rows (one per sample) with the fit summary repeated on each row.
void write_probe_csv(const std::vector<std::pair<ProbeSeries, DirectionalEstimate>>& probes, std::ostream& out);

} // namespace ndlab
