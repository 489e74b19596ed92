#pragma once

#include "ndlab/fem.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <iosfwd>
#include <optional>
#include <vector>

namespace ndlab {

/// Unit-integral boundary hat fluxes, one per Sigma node.
struct FluxBasis {
    std::vector<int> nodes;              // mesh node ids (sorted)
    std::vector<Eigen::Vector3d> coords; // node positions
    Eigen::VectorXd weights;             // int_{dOmega} hat_i, the normalizer of flux i

    [[nodiscard]] int size() const { return static_cast<int>(nodes.size()); }
    /// Densities of all basis fluxes as columns (node_count x size).
    [[nodiscard]] Eigen::SparseMatrix<double> densities(int node_count) const;
    /// Density of sum_i c_i psi_i.
    [[nodiscard]] BoundaryFlux combination(const Eigen::VectorXd& c, int node_count) const;
    /// Basis index of the flux centred nearest to x' (Euclidean in x').
    [[nodiscard]] int nearest(const Eigen::Vector2d& xp) const;
};

/// EmptySigma when the mesh has no Sigma node.
FluxBasis flux_basis(const Mesh& mesh);

/// Discrete local N-D map Lambda_ij = <psi_i, N psi_j> on a flux basis. Columns may
/// be computed selectively; entry() falls back on symmetry for missing columns.
class NDMatrix {
public:
    NDMatrix() = default;
    NDMatrix(std::vector<int> nodes, std::vector<Eigen::Vector3d> coords, Eigen::MatrixXd values,
             std::vector<bool> known);

    [[nodiscard]] int size() const { return static_cast<int>(nodes_.size()); }
    [[nodiscard]] const std::vector<int>& nodes() const { return nodes_; }
    [[nodiscard]] const std::vector<Eigen::Vector3d>& coords() const { return coords_; }
    [[nodiscard]] const Eigen::MatrixXd& values() const { return values_; }
    [[nodiscard]] bool column_known(int j) const { return known_[static_cast<std::size_t>(j)]; }
    [[nodiscard]] bool complete() const;
    /// Lambda_ij from column j, or column i by symmetry. InvalidArgument if neither is known.
    [[nodiscard]] double entry(int i, int j) const;

    /// max |L - L^T| / max |L| over fully known matrices.
    [[nodiscard]] double symmetry_error() const;
    [[nodiscard]] bool positive_definite() const;
    [[nodiscard]] bool same_basis(const NDMatrix& other) const;

    friend bool operator==(const NDMatrix& a, const NDMatrix& b);

private:
    std::vector<int> nodes_;
    std::vector<Eigen::Vector3d> coords_;
    Eigen::MatrixXd values_;
    std::vector<bool> known_;
};

/// Pairs densities against the solutions they generate: entry (i, j) is
/// rho_i^T M_b u_j with u_j = K^{-1} M_b rho_j. Only the listed columns are solved.
Eigen::MatrixXd pair_densities(const DiscreteSystem& system, const Eigen::SparseMatrix<double>& densities,
                               const std::vector<int>& columns);

/// Lambda on the basis of the system's own mesh (all columns unless a subset is given).
NDMatrix assemble_nd(const DiscreteSystem& system, const FluxBasis& basis,
                     const std::optional<std::vector<int>>& columns = std::nullopt);

/// Densities on a fine mesh that reproduce the coarse basis fluxes: coarse hats
/// interpolated at the fine accessible-boundary nodes (exact for nested grids).
Eigen::SparseMatrix<double> transfer_densities(const FluxBasis& coarse, const Mesh& coarse_mesh,
                                               const Mesh& fine_mesh);

/// Lambda for the coarse basis, computed with a fine-mesh solver (data without
/// the inverse crime). MeshMismatch when the meshes describe different footprints.
NDMatrix assemble_nd_transferred(const DiscreteSystem& fine_system, const FluxBasis& coarse,
                                 const Mesh& coarse_mesh,
                                 const std::optional<std::vector<int>>& columns = std::nullopt);

struct AlessandriniPair {
    double lhs = 0.0; // <psi_1, (Lambda_2 - Lambda_1) psi_2>
    double rhs = 0.0; // int (sigma1 - sigma2) grad u1 . grad u2 + (q1 - q2) u1 u2
};

/// Both sides of the Alessandrini identity for fluxes c1, c2 (basis coefficients),
/// u1 solved under k1 for psi_1 and u2 under k2 for psi_2. MeshMismatch.
AlessandriniPair alessandrini_gap(const NDMatrix& l1, const NDMatrix& l2, const Eigen::VectorXd& c1,
                                  const Eigen::VectorXd& c2, const Eigen::VectorXd& u1, const Eigen::VectorXd& u2,
                                  const Mesh& mesh, const CoefficientField& k1, const CoefficientField& k2);

/// K(x, y, w, z) = <e_x - e_z, Lambda (e_y - e_w)> on basis indices.
/// CoincidingPoints when check_distinct and two indices coincide.
double k_kernel(const NDMatrix& lambda, int x, int y, int w, int z, bool check_distinct = true);

/// CSV with one row per basis flux: node id, coordinates, then the row of Lambda
/// (unknown entries written as nan). Values use 17 significant digits.
void write_nd_csv(const NDMatrix& m, std::ostream& out);
NDMatrix read_nd_csv(std::istream& in);

} // namespace ndlab
