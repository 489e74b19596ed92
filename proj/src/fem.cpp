#include "ndlab/fem.hpp"

#include "ndlab/error.hpp"
#include "ndlab/parallel.hpp"

#include <Eigen/CholmodSupport>

#include <cmath>

namespace ndlab {

CoefficientField::CoefficientField(std::vector<LayerCoefficients> layers, double lambda)
    : layers_(std::move(layers)), lambda_(lambda) {
    if (layers_.empty()) raise(ErrorCode::InvalidArgument, "coefficient field has no layers");
    if (!(lambda_ >= 1.0)) raise(ErrorCode::InvalidArgument, "ellipticity bound lambda must be >= 1");
    bool any_positive = false;
    for (std::size_t j = 0; j < layers_.size(); ++j) {
        const auto& l = layers_[j];
        if (!l.sigma.is_spd()) raise(ErrorCode::NotSPD, "sigma of layer " + std::to_string(j) + " is not SPD");
        if (!l.sigma.within_ellipticity(lambda_))
            raise(ErrorCode::InvalidArgument,
                  "sigma of layer " + std::to_string(j) + " violates the ellipticity bound lambda");
        if (!(l.q >= 0.0)) raise(ErrorCode::InvalidArgument, "q of layer " + std::to_string(j) + " is negative");
        any_positive = any_positive || l.q > 0.0;
    }
    if (!any_positive) raise(ErrorCode::NotCoercive, "q vanishes on every layer");
}

int CoefficientField::coercive_layer() const {
    for (std::size_t j = 0; j < layers_.size(); ++j)
        if (layers_[j].q > 0.0) return static_cast<int>(j);
    return -1;
}

struct DiscreteSystem::Factor {
    // Simplicial: the supernodal path depends on the BLAS kernel picked at load time.
    Eigen::CholmodSimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower> llt;
};

DiscreteSystem::DiscreteSystem(const Mesh& mesh, Eigen::SparseMatrix<double> matrix, Eigen::SparseMatrix<double> mass)
    : mesh_(&mesh), matrix_(std::move(matrix)), mass_(std::move(mass)), factor_(std::make_unique<Factor>()),
      lock_(std::make_unique<std::mutex>()) {
    factor_->llt.compute(matrix_);
    if (factor_->llt.info() != Eigen::Success)
        raise(ErrorCode::FactorizationFailure, "sparse Cholesky factorization failed (matrix not SPD)");
}

DiscreteSystem::~DiscreteSystem() = default;
DiscreteSystem::DiscreteSystem(DiscreteSystem&&) noexcept = default;
DiscreteSystem& DiscreteSystem::operator=(DiscreteSystem&&) noexcept = default;

Eigen::MatrixXd DiscreteSystem::solve(const Eigen::MatrixXd& rhs) const {
    if (rhs.rows() != matrix_.rows()) raise(ErrorCode::MeshMismatch, "right-hand side size mismatch");
    std::lock_guard<std::mutex> guard(*lock_);
    Eigen::MatrixXd x = factor_->llt.solve(rhs);
    if (factor_->llt.info() != Eigen::Success) raise(ErrorCode::FactorizationFailure, "triangular solve failed");
    for (Eigen::Index c = 0; c < rhs.cols(); ++c) {
        const double bnorm = rhs.col(c).norm();
        if (bnorm == 0.0) continue;
        Eigen::VectorXd r = rhs.col(c) - matrix_ * x.col(c);
        if (r.norm() > 1e-10 * bnorm) {
            x.col(c) += factor_->llt.solve(r);
            r = rhs.col(c) - matrix_ * x.col(c);
            if (r.norm() > 1e-10 * bnorm)
                raise(ErrorCode::FactorizationFailure,
                      "relative residual " + std::to_string(r.norm() / bnorm) + " above 1e-10");
        }
    }
    return x;
}

Eigen::Matrix4d element_matrix(const std::array<Eigen::Vector3d, 4>& p, const SymTensor& sigma, double q) {
    Eigen::Matrix3d d;
    d.col(0) = p[1] - p[0];
    d.col(1) = p[2] - p[0];
    d.col(2) = p[3] - p[0];
    const double vol = std::abs(d.determinant()) / 6.0;
    const Eigen::Matrix3d inv = d.inverse();
    Eigen::Matrix<double, 4, 3> grad;
    grad.row(1) = inv.row(0);
    grad.row(2) = inv.row(1);
    grad.row(3) = inv.row(2);
    grad.row(0) = -(inv.row(0) + inv.row(1) + inv.row(2));
    Eigen::Matrix3d s = sigma.matrix();
    Eigen::Matrix4d k = vol * grad * s * grad.transpose();
    const Eigen::Matrix4d mass = (vol / 20.0) * (Eigen::Matrix4d::Ones() + Eigen::Matrix4d::Identity());
    return k + q * mass;
}

Eigen::SparseMatrix<double> boundary_mass(const Mesh& mesh) {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(mesh.boundary_faces.size() * 9);
    for (std::size_t f = 0; f < mesh.boundary_faces.size(); ++f) {
        const double area = mesh.face_area(static_cast<int>(f));
        const auto& t = mesh.boundary_faces[f];
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) trips.emplace_back(t[a], t[b], area / 12.0 * (a == b ? 2.0 : 1.0));
    }
    Eigen::SparseMatrix<double> m(mesh.node_count(), mesh.node_count());
    m.setFromTriplets(trips.begin(), trips.end());
    return m;
}

DiscreteSystem assemble(const Mesh& mesh, const CoefficientField& coeffs) {
    if (coeffs.layer_count() != mesh.layer_count)
        raise(ErrorCode::LabelMismatch, "mesh has " + std::to_string(mesh.layer_count) + " layers, coefficients " +
                                            std::to_string(coeffs.layer_count()));
    for (int l : mesh.labels)
        if (l < 0 || l >= coeffs.layer_count()) raise(ErrorCode::LabelMismatch, "element label out of range");

    const std::size_t elements = mesh.tets.size();
    const auto chunks = static_cast<std::size_t>(std::max(1, worker_count().load()));
    std::vector<std::vector<Eigen::Triplet<double>>> parts(chunks);
    parallel_for(chunks, [&](std::size_t c) {
        const std::size_t lo = elements * c / chunks, hi = elements * (c + 1) / chunks;
        auto& trips = parts[c];
        trips.reserve((hi - lo) * 10);
        for (std::size_t e = lo; e < hi; ++e) {
            const auto& t = mesh.tets[e];
            const auto& layer = coeffs.layer(mesh.labels[e]);
            const Eigen::Matrix4d ke = element_matrix(
                {mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]], mesh.vertices[t[3]]}, layer.sigma,
                layer.q);
            // Lower triangle only; the factorization reads the lower part and
            // the full matrix is restored below.
            for (int a = 0; a < 4; ++a)
                for (int b = 0; b < 4; ++b)
                    if (t[a] >= t[b]) trips.emplace_back(t[a], t[b], ke(a, b));
        }
    });
    std::vector<Eigen::Triplet<double>> all;
    for (auto& p : parts) all.insert(all.end(), p.begin(), p.end());
    Eigen::SparseMatrix<double> lower(mesh.node_count(), mesh.node_count());
    lower.setFromTriplets(all.begin(), all.end());
    Eigen::SparseMatrix<double> full = lower.selfadjointView<Eigen::Lower>();
    return {mesh, std::move(full), boundary_mass(mesh)};
}

Eigen::VectorXd boundary_load(const DiscreteSystem& system, const BoundaryFlux& flux) {
    if (flux.density.size() != system.mesh().node_count())
        raise(ErrorCode::MeshMismatch, "flux density does not match the mesh");
    return system.mass() * flux.density;
}

Eigen::VectorXd face_load(const Mesh& mesh,
                          const std::function<double(const Eigen::Vector3d&, const Eigen::Vector3d&)>& flux) {
    Eigen::VectorXd b = Eigen::VectorXd::Zero(mesh.node_count());
    for (std::size_t f = 0; f < mesh.boundary_faces.size(); ++f) {
        const auto& t = mesh.boundary_faces[f];
        const Eigen::Vector3d nu = face_normal(mesh, static_cast<int>(f));
        const double area = mesh.face_area(static_cast<int>(f));
        for (int e = 0; e < 3; ++e) {
            const int a = t[e], c = t[(e + 1) % 3];
            const double value = flux(0.5 * (mesh.vertices[a] + mesh.vertices[c]), nu);
            b[a] += area / 3.0 * 0.5 * value;
            b[c] += area / 3.0 * 0.5 * value;
        }
    }
    return b;
}

Eigen::VectorXd solve_neumann(const DiscreteSystem& system, const BoundaryFlux& flux) {
    return system.solve(boundary_load(system, flux));
}

Eigen::VectorXd boundary_trace(const Eigen::VectorXd& u, const Mesh& mesh) {
    if (u.size() != mesh.node_count()) raise(ErrorCode::MeshMismatch, "nodal vector does not match the mesh");
    Eigen::VectorXd tr(static_cast<Eigen::Index>(mesh.sigma_nodes.size()));
    for (std::size_t i = 0; i < mesh.sigma_nodes.size(); ++i) tr[static_cast<Eigen::Index>(i)] = u[mesh.sigma_nodes[i]];
    return tr;
}

BoundaryFlux boundary_density(const Mesh& mesh, const std::function<double(const Eigen::Vector3d&)>& psi) {
    BoundaryFlux flux{Eigen::VectorXd::Zero(mesh.node_count())};
    for (const auto& f : mesh.boundary_faces)
        for (int v : f) flux.density[v] = psi(mesh.vertices[v]);
    return flux;
}

Eigen::Vector3d face_normal(const Mesh& mesh, int face) {
    const auto& t = mesh.boundary_faces[static_cast<std::size_t>(face)];
    const Eigen::Vector3d& a = mesh.vertices[t[0]];
    Eigen::Vector3d n = (mesh.vertices[t[1]] - a).cross(mesh.vertices[t[2]] - a).normalized();
    const int top_first = mesh.node_index(0, 0, mesh.nz());
    Eigen::Vector3d hint = Eigen::Vector3d::Zero();
    if (mesh.face_on_bottom[static_cast<std::size_t>(face)]) {
        hint.z() = -1.0;
    } else if (t[0] >= top_first && t[1] >= top_first && t[2] >= top_first) {
        hint.z() = 1.0;
    } else {
        const Eigen::Vector3d c = (a + mesh.vertices[t[1]] + mesh.vertices[t[2]]) / 3.0;
        const double tol = 1e-12 * (1.0 + std::abs(mesh.xs.back()) + std::abs(mesh.ys.back()));
        if (std::abs(c.x() - mesh.xs.front()) < tol) hint.x() = -1.0;
        else if (std::abs(c.x() - mesh.xs.back()) < tol) hint.x() = 1.0;
        else if (std::abs(c.y() - mesh.ys.front()) < tol) hint.y() = -1.0;
        else hint.y() = 1.0;
    }
    return n.dot(hint) < 0.0 ? Eigen::Vector3d(-n) : n;
}

double l2_error(const Mesh& mesh, const Eigen::VectorXd& u,
                const std::function<double(const Eigen::Vector3d&)>& exact) {
    // Keast 11-point rule (degree 4); only degree 3 is needed for smooth exact solutions.
    static const double w[] = {-0.01315555555555556, 0.007622222222222222, 0.02488888888888889};
    static const double a0 = 0.0714285714285714285, b0 = 0.785714285714285714;
    static const double a1 = 0.399403576166799219, b1 = 0.100596423833200785;
    std::vector<std::pair<Eigen::Vector4d, double>> rule;
    rule.emplace_back(Eigen::Vector4d::Constant(0.25), w[0]);
    for (int k = 0; k < 4; ++k) {
        Eigen::Vector4d l = Eigen::Vector4d::Constant(a0);
        l[k] = b0;
        rule.emplace_back(l, w[1]);
    }
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) {
            Eigen::Vector4d l = Eigen::Vector4d::Constant(b1);
            l[i] = l[j] = a1;
            rule.emplace_back(l, w[2]);
        }
    double sum = 0.0;
    for (int e = 0; e < mesh.element_count(); ++e) {
        const auto& t = mesh.tets[static_cast<std::size_t>(e)];
        const double vol6 = 6.0 * mesh.volume(e);
        for (const auto& [l, wt] : rule) {
            Eigen::Vector3d x = Eigen::Vector3d::Zero();
            double uh = 0.0;
            for (int k = 0; k < 4; ++k) {
                x += l[k] * mesh.vertices[t[k]];
                uh += l[k] * u[t[k]];
            }
            const double diff = uh - exact(x);
            sum += wt * vol6 * diff * diff;
        }
    }
    return std::sqrt(sum);
}

} // namespace ndlab
