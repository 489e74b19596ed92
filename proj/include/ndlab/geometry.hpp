#pragma once

#include <Eigen/Dense>

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ndlab {

/// Threshold used for every "nonzero" admissibility test on normals and gammas.
inline constexpr double kFlatEpsilon = 1e-3;

enum class GraphKind { plane, paraboloid, polynomial, sphere_cap };

std::string to_string(GraphKind kind);
GraphKind graph_kind_from_string(const std::string& name);

/// Height function x_n = phi(x') over the disc |x'| <= radius in R^{n-1}.
///
/// Coefficient layouts:
///   plane       [c0, a_1, ..., a_{n-1}]   phi = c0 + a.x'  (slopes optional)
///   paraboloid  [c0, c1]                  phi = c0 + c1 |x'|^2
///   polynomial  graded-lex monomials in x' (1, x1, x2, x1^2, x1 x2, x2^2, ...)
///   sphere_cap  [c0, rho]                 phi = c0 + rho - sqrt(rho^2 - |x'|^2), rho > radius
class InterfaceGraph {
public:
    InterfaceGraph(GraphKind kind, std::vector<double> coefficients, double radius, int dimension = 3,
                   double alpha = 1.0);

    static InterfaceGraph plane(double height, double radius, int dimension = 3);
    static InterfaceGraph paraboloid(double base, double curvature, double radius, int dimension = 3);

    [[nodiscard]] GraphKind kind() const { return kind_; }
    [[nodiscard]] const std::vector<double>& coefficients() const { return coefficients_; }
    [[nodiscard]] double radius() const { return radius_; }
    [[nodiscard]] int dimension() const { return dimension_; }
    [[nodiscard]] double alpha() const { return alpha_; }

    [[nodiscard]] double height(const Eigen::VectorXd& xp) const;
    [[nodiscard]] Eigen::VectorXd gradient(const Eigen::VectorXd& xp) const;
    [[nodiscard]] Eigen::MatrixXd hessian(const Eigen::VectorXd& xp) const;
    [[nodiscard]] Eigen::VectorXd surface_point(const Eigen::VectorXd& xp) const;
    /// Unit normal pointing towards decreasing x_n (out of the region above the graph).
    [[nodiscard]] Eigen::VectorXd downward_normal(const Eigen::VectorXd& xp) const;
    [[nodiscard]] bool contains(const Eigen::VectorXd& xp, double tol = 1e-12) const;
    /// phi(0) = 0 and grad phi(0) = 0.
    [[nodiscard]] bool is_canonical(double tol = 1e-14) const;

private:
    GraphKind kind_;
    std::vector<double> coefficients_;
    double radius_;
    int dimension_;
    double alpha_;
    std::vector<std::vector<int>> exponents_; // polynomial only
};

struct SigmaPatch {
    Eigen::VectorXd center; // x' coordinates
    double radius = 0.0;

    [[nodiscard]] bool contains(const Eigen::VectorXd& xp, double tol = 1e-10) const {
        return (xp - center).norm() <= radius + tol;
    }
};

struct DomainDescription {
    int dimension = 3;
    Eigen::VectorXd lower; // footprint lower corner, size n-1
    Eigen::VectorXd upper; // footprint upper corner, size n-1
    double top = 1.0;
    InterfaceGraph boundary = InterfaceGraph::plane(0.0, 1.0);
    std::vector<InterfaceGraph> interfaces;
    SigmaPatch sigma;
    int sampling = 33;
};

/// Box-footprint domain bounded below by the accessible graph phi_0 and above by
/// the plane x_n = top. Layer j (0-based) lies between graph(j) and graph(j+1),
/// the last one between graph(N-1) and the top.
class LayeredDomain {
public:
    [[nodiscard]] int dimension() const { return desc_.dimension; }
    [[nodiscard]] int layer_count() const { return static_cast<int>(desc_.interfaces.size()) + 1; }
    /// k = 0 is the accessible boundary, k >= 1 the internal interfaces.
    [[nodiscard]] const InterfaceGraph& graph(int k) const;
    [[nodiscard]] const InterfaceGraph& boundary() const { return desc_.boundary; }
    [[nodiscard]] double top() const { return desc_.top; }
    [[nodiscard]] const Eigen::VectorXd& lower() const { return desc_.lower; }
    [[nodiscard]] const Eigen::VectorXd& upper() const { return desc_.upper; }
    [[nodiscard]] const SigmaPatch& sigma() const { return desc_.sigma; }
    [[nodiscard]] const DomainDescription& description() const { return desc_; }

    /// Height of the lower bounding surface of layer j at x'.
    [[nodiscard]] double layer_bottom(int j, const Eigen::VectorXd& xp) const;
    [[nodiscard]] double layer_top(int j, const Eigen::VectorXd& xp) const;
    /// Layer containing the point, or -1 when outside.
    [[nodiscard]] int locate(const Eigen::VectorXd& x) const;

    /// Inner domain made of layers K, K+1, ... with interface K as accessible boundary
    /// and the given patch on it.
    [[nodiscard]] LayeredDomain truncated(int first_layer, const SigmaPatch& patch) const;
    /// Same domain with an extra interface inserted (splits one layer in two).
    [[nodiscard]] LayeredDomain with_interface(const InterfaceGraph& extra) const;

private:
    friend LayeredDomain build_layered_domain(const DomainDescription& desc);
    explicit LayeredDomain(DomainDescription desc) : desc_(std::move(desc)) {}
    DomainDescription desc_;
};

/// Validates the description: OrderingViolation, EmptyLayer, SigmaOutsideGraph,
/// OutsideGraphDomain (footprint not covered by the graph discs).
LayeredDomain build_layered_domain(const DomainDescription& desc);

struct TangentFrame {
    Eigen::VectorXd point;
    Eigen::MatrixXd tangents; // n x (n-1), orthonormal columns
    Eigen::VectorXd normal;   // outward unit normal

    [[nodiscard]] int dimension() const { return static_cast<int>(point.size()); }
    /// max |G - I| for the Gram matrix of (tangents, normal).
    [[nodiscard]] double orthonormality_residual() const;
    [[nodiscard]] TangentFrame rotated(const Eigen::MatrixXd& rotation) const;
};

/// Frame at the graph point over x'. Tangents are Gram-Schmidt of the lifted
/// coordinate directions, the normal points downward.
TangentFrame tangent_frame_at(const InterfaceGraph& graph, const Eigen::VectorXd& xp);

struct WitnessTriple {
    std::array<Eigen::VectorXd, 3> points; // x' coordinates
    double min_deficit = 0.0;               // min over pairs of 1 - nu_i . nu_j
};

struct WitnessOptions {
    int resolution = 33;
    std::optional<Eigen::VectorXd> center; // defaults to the origin
    std::optional<double> search_radius;   // defaults to the graph radius
    double eps_flat = kFlatEpsilon;
};

/// Triple of grid points maximizing the minimal pairwise normal deficit.
/// Raises FlatInterface when the best deficit is below eps_flat.
WitnessTriple nonflat_witnesses(const InterfaceGraph& graph, const WitnessOptions& options = {});

enum class GammaBranch { A1, A2 };

struct GammaTriple {
    double gamma1 = 0.0;
    double gamma2 = 0.0;
    double gamma3 = 0.0;
    GammaBranch branch = GammaBranch::A1;
    /// Columns are the canonical basis vectors e_1..e_n expressed in world
    /// coordinates; nu(y1) = -rotation.col(n-1).
    Eigen::MatrixXd rotation;
    std::vector<TangentFrame> frames;

    [[nodiscard]] int dimension() const { return static_cast<int>(rotation.rows()); }

    /// Canonical-coordinate triple (rotation = identity). Raises InadmissibleGammas.
    static GammaTriple from_values(double g1, double g2, double g3, int dimension = 3,
                                   double eps_flat = kFlatEpsilon);
};

bool gammas_admissible(double g1, double g2, double g3, double eps_flat = kFlatEpsilon);

/// Rotates so that nu(y1) = -e_n with nu(y2) in span{e_{n-1}, e_n} and reads the
/// gammas off nu(y2), nu(y3). Raises InadmissibleGammas.
GammaTriple gammas_from_frames(const TangentFrame& f1, const TangentFrame& f2, const TangentFrame& f3,
                               double eps_flat = kFlatEpsilon);

/// ASCII legacy-VTK polydata of the domain's graphs sampled on the footprint.
void write_surface_vtk(const LayeredDomain& domain, std::ostream& out, int resolution = 33);

} // namespace ndlab
