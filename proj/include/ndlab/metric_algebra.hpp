#pragma once

#include "ndlab/geometry.hpp"

#include <Eigen/Dense>

#include <array>
#include <span>
#include <vector>

namespace ndlab {

/// Symmetric n x n tensor stored as its row-major upper triangle.
class SymTensor {
public:
    SymTensor() = default;
    /// Symmetrizes `full`; raises InvalidArgument if it is not symmetric to `tol`.
    explicit SymTensor(const Eigen::MatrixXd& full, double tol = 1e-12);

    static SymTensor from_upper(int n, std::span<const double> packed);
    static SymTensor identity(int n);
    static SymTensor diagonal(const Eigen::VectorXd& d);

    [[nodiscard]] int dim() const { return n_; }
    [[nodiscard]] double operator()(int i, int j) const;
    [[nodiscard]] Eigen::MatrixXd matrix() const;
    [[nodiscard]] std::span<const double> packed() const { return upper_; }
    [[nodiscard]] static std::size_t packed_size(int n) { return static_cast<std::size_t>(n * (n + 1) / 2); }

    [[nodiscard]] Eigen::VectorXd eigenvalues() const;
    [[nodiscard]] bool is_spd() const;
    /// All eigenvalues in [1/lambda, lambda] (with a relative slack of 1e-12).
    [[nodiscard]] bool within_ellipticity(double lambda) const;
    [[nodiscard]] double quadratic(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const;

    /// Q^T S Q for an orthogonal change of basis Q.
    [[nodiscard]] SymTensor congruence(const Eigen::MatrixXd& q) const;

    friend bool operator==(const SymTensor&, const SymTensor&) = default;

private:
    int n_ = 0;
    std::vector<double> upper_;
};

/// g = (det sigma)^{1/(n-2)} sigma^{-1}. NotSPD, DimensionTooSmall.
SymTensor g_from_sigma(const SymTensor& sigma);
/// sigma = (det g)^{1/2} g^{-1}. NotSPD, DimensionTooSmall.
SymTensor sigma_from_g(const SymTensor& g);

/// Quadratic form of g restricted to a tangent plane.
struct TangentialForm {
    Eigen::MatrixXd basis;  // n x (n-1), orthonormal columns
    Eigen::MatrixXd values; // (n-1) x (n-1), entries g basis_i . basis_j

    /// g(a, b) for vectors a, b in the plane. Raises InconsistentForms when either
    /// vector leaves the plane by more than plane_tol (relative).
    [[nodiscard]] double evaluate(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                                  double plane_tol = 1e-8) const;
};

/// NonOrthonormalBasis when the basis columns are not orthonormal to 1e-10.
TangentialForm tangential_form(const SymTensor& g, const Eigen::MatrixXd& basis);

/// Orthonormal bases of the three tangent planes in world coordinates:
///   Pi_1 = <e_1, ..., e_{n-1}>
///   Pi_2 = <e_1, ..., e_{n-2}, e_{n-1} + gamma1 e_n>
///   Pi_3 = <e_1, ..., e_{n-3}, e_{n-2} + gamma3 e_n, e_{n-1} + gamma2 e_n>
/// with e_i the canonical vectors of the triple (columns of its rotation).
std::array<Eigen::MatrixXd, 3> canonical_plane_bases(const GammaTriple& gammas);

struct AssembleOptions {
    double eps_det = 1e-6;
    /// Relative disagreement allowed between the over-determined rows of A.
    double consistency_tol = 1e-4;
    double eps_flat = kFlatEpsilon;
};

/// The 3 x 2 system A G = rhs for G = (g_{n-1,n}, g_{n,n}) in canonical coordinates.
struct AssemblySystem {
    Eigen::Matrix<double, 3, 2> A;
    Eigen::Vector3d rhs;
    Eigen::Vector2d G;
    GammaBranch branch = GammaBranch::A1; // block actually inverted
    double det = 0.0;                     // determinant of that block
    double condition = 0.0;               // 2-norm condition number of that block
    double inconsistency = 0.0;           // relative residual of the unused row
    bool least_squares = false;
};

struct AssemblyResult {
    SymTensor g;
    AssemblySystem system;
};

/// det A1 and det A2 evaluated from the assembled matrices.
std::array<double, 2> block_determinants(const GammaTriple& gammas);

/// Reconstructs g from its tangential forms on Pi_1, Pi_2, Pi_3.
/// InadmissibleGammas, IllConditionedAssembly, InconsistentForms.
AssemblyResult assemble_g_detailed(const std::array<TangentialForm, 3>& forms, const GammaTriple& gammas,
                                   const AssembleOptions& options = {});
SymTensor assemble_g(const std::array<TangentialForm, 3>& forms, const GammaTriple& gammas,
                     const AssembleOptions& options = {});

} // namespace ndlab
