#pragma once

#include "ndlab/fem.hpp"
#include "ndlab/geometry.hpp"
#include "ndlab/kernel_probe.hpp"
#include "ndlab/mesh.hpp"
#include "ndlab/reconstruction.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace ndlab {

struct ProbeSettings {
    ProbeOptions options;
    std::vector<double> radii;                      // empty: probe_radii(h, R_Sigma)
    std::optional<std::vector<Eigen::Vector2d>> poles; // three x' points; automatic when empty
};

struct ForwardSettings {
    Eigen::Vector2d center = Eigen::Vector2d::Zero(); // Gaussian flux bump on Sigma
    double width = 0.2;
};

struct VerifySettings {
    int random_tensors = 1000;
    int alessandrini_pairs = 50;
    double alessandrini_h = 0.1;
    int identifiability_samples = 100;
    int propagation_layer = 1;
    std::vector<double> convergence_h{0.25, 0.125, 0.0625};
};

/// Every numeric tolerance used by the acceptance checks, defaults as specified.
struct Tolerances {
    double algebra = 1e-10;
    double determinant = 1e-14;
    double alessandrini = 1e-8;
    double symmetry = 1e-10;
    double identical_maps = 1e-10;
    double perturbation_gap = 1e-6;
    double exponent = 0.15;
    double amplitude = 0.15;
    double boundary_entry = 0.15;
    double sigma_relative = 0.05;
    double q_relative = 0.08;
    double final_misfit = 1e-6;
    double convergence_low = 3.2;
    double convergence_high = 4.8;
};

struct ExperimentConfig {
    DomainDescription domain;
    std::vector<LayerCoefficients> layers;
    double lambda = 10.0;
    MeshOptions mesh;
    int data_refinement = 2;
    ProbeSettings probe;
    RecoveryOptions recovery;
    double near_field = 0.0; // FitProblem::near_field for recover
    ForwardSettings forward;
    VerifySettings verify;
    Tolerances tolerances;
    std::string output = "out";
    std::uint64_t seed = 1;
    int workers = 1;
    std::string text; // the parsed source, hashed into the manifest

    [[nodiscard]] CoefficientField truth() const { return CoefficientField(layers, lambda); }
};

/// Parses YAML text. Unknown keys, wrong types and failed validation raise
/// ConfigInvalid with the field path (e.g. "coefficients.layers[1].sigma").
ExperimentConfig parse_config(const std::string& text);
/// IoError when the file cannot be read.
ExperimentConfig load_config(const std::filesystem::path& path);

/// SHA-256 of a byte string, lowercase hex.
std::string sha256_hex(const std::string& data);

struct RunOptions {
    std::filesystem::path out;
    bool verbose = false;
};

/// forward | ndmap | probe | recover | verify | report. Writes its artifacts under
/// out and a manifest listing each with its SHA-256. Returns the exit status.
int run_command(const std::string& command, const ExperimentConfig& config, const RunOptions& run,
                std::ostream& log);

/// Result of one verification suite or acceptance check.
struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

// Property suites. Each is deterministic for a given rng seed.
CheckResult check_algebra(std::uint64_t seed, int count, double tol);
CheckResult check_degeneracy(std::uint64_t seed, int count, double tol);
CheckResult check_alessandrini(std::uint64_t seed, int pairs, double h, double tol);
CheckResult check_nd_structure(const ExperimentConfig& config);
CheckResult check_uniqueness(const ExperimentConfig& config);
CheckResult check_convergence(const ExperimentConfig& config);

// Synthetic-truth acceptance checks driven by a configuration.
CheckResult check_kernel_asymptotics(const ExperimentConfig& config);
CheckResult check_boundary_recovery(const ExperimentConfig& config);
CheckResult check_layer_stripping(const ExperimentConfig& config);

/// Boundary probe on the configured (graded) mesh with Lambda computed from the
/// truth on only the columns the probe reads.
BoundaryRecovery run_probe(const ExperimentConfig& config, const Mesh& mesh, const FluxBasis& basis);

/// Data on the mesh refined by data_refinement, transferred to the inversion basis.
NDMatrix synthetic_data(const ExperimentConfig& config, const Mesh& inversion_mesh, const FluxBasis& basis);

} // namespace ndlab
