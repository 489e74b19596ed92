#pragma once

#include "ndlab/mesh.hpp"
#include "ndlab/metric_algebra.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <functional>
#include <memory>
#include <mutex>
#include <vector>

namespace ndlab {

struct LayerCoefficients {
    SymTensor sigma;
    double q = 0.0;
};

/// Piecewise-constant (sigma_j, q_j) on the layers of a partition.
class CoefficientField {
public:
    /// Validates ellipticity (spectrum in [1/lambda, lambda]) and q_j >= 0.
    /// NotCoercive when every q_j is zero.
    CoefficientField(std::vector<LayerCoefficients> layers, double lambda);

    [[nodiscard]] int layer_count() const { return static_cast<int>(layers_.size()); }
    [[nodiscard]] const LayerCoefficients& layer(int j) const { return layers_.at(static_cast<std::size_t>(j)); }
    [[nodiscard]] const std::vector<LayerCoefficients>& layers() const { return layers_; }
    [[nodiscard]] double lambda() const { return lambda_; }
    /// First layer with q > 0.
    [[nodiscard]] int coercive_layer() const;

private:
    std::vector<LayerCoefficients> layers_;
    double lambda_;
};

/// Nodal boundary flux density sigma grad u . nu (zero away from the boundary).
struct BoundaryFlux {
    Eigen::VectorXd density;
};

/// Boundary mass matrix over all boundary faces (P1, exact).
Eigen::SparseMatrix<double> boundary_mass(const Mesh& mesh);

/// Stiffness-plus-reaction matrix a(u, v) = int sigma grad u . grad v + q u v, its
/// boundary mass matrix and a cached sparse Cholesky factorization.
class DiscreteSystem {
public:
    DiscreteSystem(const Mesh& mesh, Eigen::SparseMatrix<double> matrix, Eigen::SparseMatrix<double> mass);
    ~DiscreteSystem();
    DiscreteSystem(DiscreteSystem&&) noexcept;
    DiscreteSystem& operator=(DiscreteSystem&&) noexcept;

    [[nodiscard]] const Mesh& mesh() const { return *mesh_; }
    [[nodiscard]] const Eigen::SparseMatrix<double>& matrix() const { return matrix_; }
    [[nodiscard]] const Eigen::SparseMatrix<double>& mass() const { return mass_; }

    /// K X = B through the cached factorization; one refinement step if the
    /// relative residual exceeds 1e-10. FactorizationFailure.
    [[nodiscard]] Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;
    [[nodiscard]] double energy(const Eigen::VectorXd& u) const { return u.dot(matrix_ * u); }

private:
    struct Factor;
    const Mesh* mesh_;
    Eigen::SparseMatrix<double> matrix_;
    Eigen::SparseMatrix<double> mass_;
    std::unique_ptr<Factor> factor_;
    std::unique_ptr<std::mutex> lock_;
};

/// LabelMismatch, NotCoercive (via CoefficientField), FactorizationFailure.
DiscreteSystem assemble(const Mesh& mesh, const CoefficientField& coeffs);

/// Element matrix of one tetrahedron for (sigma, q): stiffness plus consistent mass.
Eigen::Matrix4d element_matrix(const std::array<Eigen::Vector3d, 4>& vertices, const SymTensor& sigma, double q);

/// Load vector b_i = int_{dOmega} psi phi_i.
Eigen::VectorXd boundary_load(const DiscreteSystem& system, const BoundaryFlux& flux);

/// Load vector for a flux given per boundary point and outward normal, integrated
/// face by face with the edge-midpoint rule (exact for quadratics).
Eigen::VectorXd face_load(const Mesh& mesh,
                          const std::function<double(const Eigen::Vector3d&, const Eigen::Vector3d&)>& flux);

/// Solves the Neumann problem sigma grad u . nu = psi for a boundary density psi.
Eigen::VectorXd solve_neumann(const DiscreteSystem& system, const BoundaryFlux& flux);

/// Nodal values restricted to the Sigma nodes (in mesh.sigma_nodes order).
Eigen::VectorXd boundary_trace(const Eigen::VectorXd& u, const Mesh& mesh);

/// Interpolates a function at the boundary nodes (zero elsewhere).
BoundaryFlux boundary_density(const Mesh& mesh, const std::function<double(const Eigen::Vector3d&)>& psi);

/// Outward unit normal of a boundary face.
Eigen::Vector3d face_normal(const Mesh& mesh, int face);

/// L2 norm of u_h - u_exact with a degree-3-exact quadrature per element.
double l2_error(const Mesh& mesh, const Eigen::VectorXd& u, const std::function<double(const Eigen::Vector3d&)>& exact);

} // namespace ndlab
