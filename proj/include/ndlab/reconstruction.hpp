#pragma once

#include "ndlab/fem.hpp"
#include "ndlab/kernel_probe.hpp"
#include "ndlab/nd_map.hpp"

#include <Eigen/Dense>

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ndlab {

/// Measured map plus everything needed to evaluate Lambda for candidate coefficients
/// on the inversion mesh.
struct FitProblem {
    const Mesh* mesh = nullptr;
    const FluxBasis* basis = nullptr;
    NDMatrix measured; // complete, on `basis`
    double lambda = 10.0;
    /// Entries whose flux centres are closer than this are left out of the misfit.
    /// The self-interaction of a hat flux carries an O(h) discretization error
    /// that a coarse inversion mesh otherwise absorbs into the coefficients.
    double near_field = 0.0;

    /// Lambda(coeffs) on the inversion basis.
    [[nodiscard]] NDMatrix forward(const CoefficientField& coeffs) const;
    /// ||Lambda(coeffs) - Lambda*||_F^2 / ||Lambda*||_F^2 over the retained entries.
    [[nodiscard]] double misfit(const CoefficientField& coeffs) const;
    /// Residual vector (Lambda(coeffs) - Lambda*) / ||Lambda*||_F over the retained
    /// entries, column-major.
    [[nodiscard]] Eigen::VectorXd residual(const CoefficientField& coeffs) const;
};

/// Packing of one layer: the n(n+1)/2 upper-triangle entries of sigma, then q.
Eigen::VectorXd pack_layer(const LayerCoefficients& layer);
LayerCoefficients unpack_layer(const Eigen::Ref<const Eigen::VectorXd>& theta, int n);

/// Projects a packed layer onto the feasibility box: sigma eigenvalues clipped to
/// [1/lambda, lambda], q clipped to [0, q_max].
Eigen::VectorXd project_layer(const Eigen::VectorXd& theta, int n, double lambda, double q_max);

enum class FirstLayerSigma { probe, fit };

struct RecoveryOptions {
    FirstLayerSigma first_layer = FirstLayerSigma::probe;
    std::optional<std::array<int, 3>> poles; // witness poles (basis indices); automatic when empty
    std::vector<double> radii;               // probe radii; probe_radii(h) when empty
    ProbeOptions probe;

    double q_max = 10.0;
    double golden_tol = 1e-4; // relative bracket width of the q search
    double fd_step = 1e-4;    // relative finite-difference step
    int max_iterations = 40;
    int stall_limit = 5;      // consecutive non-decreasing iterations before FitDiverged
    double misfit_target = 1e-14;
    double step_tol = 1e-9;   // relative parameter change that ends an iteration
    bool joint_refinement = true;
    double fit_tolerance = 0.05; // adjacent layers within 3x this are flagged jump-degenerate
};

struct StageReport {
    int layer = 0;
    std::vector<double> misfits; // J after each accepted iterate (first entry: start)
    int evaluations = 0;
    double seconds = 0.0;
};

struct RecoveryReport {
    std::vector<LayerCoefficients> layers;
    std::vector<StageReport> stages;
    std::optional<StageReport> joint;
    std::optional<BoundaryRecovery> probe; // first-layer probe when it ran
    std::vector<bool> jump_degenerate;     // per interface k >= 1: layers k-1 and k agree
    double final_misfit = 0.0;
    double seconds = 0.0;
};

struct FirstLayer {
    LayerCoefficients layer;
    std::optional<BoundaryRecovery> probe;
    StageReport stage;
};

/// sigma_1 from the boundary probe (or, with FirstLayerSigma::fit, the identity as
/// the starting value), then q_1 by golden section over [0, q_max] with every layer
/// set to (sigma_1, q) and a parabolic refinement step. Raises FlatInterface for a
/// flat patch before any fitting; propagates probe errors.
FirstLayer recover_first_layer(const FitProblem& problem, const LayeredDomain& domain,
                               const RecoveryOptions& options = {});

/// Layer stripping: stage 1 as above (followed by a (sigma_1, q_1) Gauss-Newton
/// fit when the probe is skipped), stages k >= 2 fit (sigma_k, q_k) with shallower
/// layers frozen and deeper ones set to the stage iterate, then a joint refinement
/// over every parameter. FitDiverged, InfeasibleIterate.
RecoveryReport strip_all(const FitProblem& problem, const LayeredDomain& domain,
                         const RecoveryOptions& options = {});

/// Damped Gauss-Newton on the misfit over the parameters selected by `active`
/// of the active layers (Levenberg-Marquardt damping, forward-difference Jacobian,
/// projection onto the feasibility box). Tied layers copy the deepest active layer.
/// Stops when the misfit stalls at the discretization floor; FitDiverged when it
/// fails to decrease stall_limit times while the linear model still predicts progress.
struct LayerFit {
    std::vector<LayerCoefficients> layers;
    StageReport stage;
};
LayerFit gauss_newton(const FitProblem& problem, std::vector<LayerCoefficients> start,
                      const std::vector<int>& active_layers, const std::vector<int>& tied_layers,
                      const RecoveryOptions& options);

struct PropagationGaps {
    double outer = 0.0; // ||Lambda^Sigma(1) - Lambda^Sigma(2)||_F
    double inner = 0.0; // same on the truncated domain of layers >= K with Sigma_{K+1}
};

/// Outer and inner N-D gaps for coefficient sets that agree on the first K layers.
/// `inner_patch` defaults to the outer patch re-centred on interface K.
/// CoefficientPrefixMismatch.
PropagationGaps verify_claim_propagation(const CoefficientField& c1, const CoefficientField& c2,
                                         const LayeredDomain& domain, const MeshOptions& mesh, int k,
                                         const std::optional<SigmaPatch>& inner_patch = std::nullopt);

/// ||Lambda(coarse) - Lambda(refined)||_F on the refined domain's mesh. The coarse
/// field is evaluated on that mesh with each refined layer mapped to the coarse
/// layer containing it; refined coefficients default to the coarse ones copied
/// into both halves of the split layer. MeshMismatch.
double verify_partition_merge(const CoefficientField& coarse, const LayeredDomain& coarse_domain,
                              const LayeredDomain& refined_domain, const MeshOptions& mesh,
                              const std::optional<CoefficientField>& refined = std::nullopt);

/// Refined layer j -> coarse layer containing it (by the refined layer's midpoint
/// over the Sigma centre). MeshMismatch if the footprints or boundaries differ or a
/// coarse interface is missing from the refined domain.
std::vector<int> merge_map(const LayeredDomain& coarse_domain, const LayeredDomain& refined_domain);

/// Mesh with labels mapped through `map` (label j -> map[j]).
Mesh relabeled(const Mesh& mesh, const std::vector<int>& map);

/// Alessandrini volume integrals int_{B_r(P) cap D_1} (sigma1 - sigma2) grad u1 . grad u2
/// + (q1 - q2) u1 u2, elements counted by centroid, for each radius.
std::vector<double> local_alessandrini_integrals(const Mesh& mesh, const CoefficientField& c1,
                                                 const CoefficientField& c2, const Eigen::VectorXd& u1,
                                                 const Eigen::VectorXd& u2, const Eigen::Vector3d& center,
                                                 const std::vector<double>& radii);

/// Least-squares slope of log|values| against log radii.
double log_log_slope(const std::vector<double>& radii, const std::vector<double>& values);

/// Text summary; with `truth`, a recovered-versus-true table and relative errors.
void write_report(const RecoveryReport& report, std::ostream& out,
                  const std::optional<CoefficientField>& truth = std::nullopt);
/// One row per layer and parameter: layer, name, recovered[, truth, rel_error].
void write_report_csv(const RecoveryReport& report, std::ostream& out,
                      const std::optional<CoefficientField>& truth = std::nullopt);

/// Max over layers of max_ij |s_ij - t_ij| / |t_ij| and of |q - q_t| / q_t. Entries
/// with |t_ij| < floor * max|t| (zeros of the true tensor) are measured against max|t|.
struct LayerErrors {
    double sigma = 0.0;
    double q = 0.0;
};
LayerErrors relative_errors(const std::vector<LayerCoefficients>& recovered, const CoefficientField& truth,
                            double floor = 1e-9);

} // namespace ndlab
