#include "ndlab/nd_map.hpp"

#include "ndlab/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

namespace ndlab {

namespace {

constexpr int kSolveBlock = 48;

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

double parse_double(const std::string& s) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') raise(ErrorCode::IoError, "bad number '" + s + "' in N-D matrix CSV");
    return v;
}

} // namespace

Eigen::SparseMatrix<double> FluxBasis::densities(int node_count) const {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(nodes.size());
    for (int i = 0; i < size(); ++i) trips.emplace_back(nodes[static_cast<std::size_t>(i)], i, 1.0 / weights[i]);
    Eigen::SparseMatrix<double> d(node_count, size());
    d.setFromTriplets(trips.begin(), trips.end());
    return d;
}

BoundaryFlux FluxBasis::combination(const Eigen::VectorXd& c, int node_count) const {
    if (c.size() != size()) raise(ErrorCode::MeshMismatch, "coefficient vector does not match the flux basis");
    BoundaryFlux flux{Eigen::VectorXd::Zero(node_count)};
    for (int i = 0; i < size(); ++i) flux.density[nodes[static_cast<std::size_t>(i)]] += c[i] / weights[i];
    return flux;
}

int FluxBasis::nearest(const Eigen::Vector2d& xp) const {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < size(); ++i) {
        const double d = (coords[static_cast<std::size_t>(i)].head<2>() - xp).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

FluxBasis flux_basis(const Mesh& mesh) {
    if (mesh.sigma_nodes.empty()) raise(ErrorCode::EmptySigma, "the accessible patch contains no mesh node");
    const Eigen::SparseMatrix<double> mb = boundary_mass(mesh);
    const Eigen::VectorXd row_sums = mb * Eigen::VectorXd::Ones(mesh.node_count());
    FluxBasis basis;
    basis.nodes = mesh.sigma_nodes;
    basis.weights.resize(basis.size());
    for (int i = 0; i < basis.size(); ++i) {
        const int node = basis.nodes[static_cast<std::size_t>(i)];
        basis.coords.push_back(mesh.vertices[static_cast<std::size_t>(node)]);
        basis.weights[i] = row_sums[node];
    }
    return basis;
}

NDMatrix::NDMatrix(std::vector<int> nodes, std::vector<Eigen::Vector3d> coords, Eigen::MatrixXd values,
                   std::vector<bool> known)
    : nodes_(std::move(nodes)), coords_(std::move(coords)), values_(std::move(values)), known_(std::move(known)) {
    const auto m = nodes_.size();
    if (coords_.size() != m || known_.size() != m || static_cast<std::size_t>(values_.rows()) != m ||
        static_cast<std::size_t>(values_.cols()) != m)
        raise(ErrorCode::InvalidArgument, "inconsistent N-D matrix dimensions");
}

bool NDMatrix::complete() const { return std::all_of(known_.begin(), known_.end(), [](bool k) { return k; }); }

double NDMatrix::entry(int i, int j) const {
    if (column_known(j)) return values_(i, j);
    if (column_known(i)) return values_(j, i);
    raise(ErrorCode::InvalidArgument,
          "N-D entry (" + std::to_string(i) + ", " + std::to_string(j) + ") was not computed");
}

double NDMatrix::symmetry_error() const {
    if (!complete()) raise(ErrorCode::InvalidArgument, "symmetry needs the full N-D matrix");
    const double scale = values_.cwiseAbs().maxCoeff();
    if (scale == 0.0) return 0.0;
    return (values_ - values_.transpose()).cwiseAbs().maxCoeff() / scale;
}

bool NDMatrix::positive_definite() const {
    if (!complete()) raise(ErrorCode::InvalidArgument, "definiteness needs the full N-D matrix");
    const Eigen::MatrixXd sym = 0.5 * (values_ + values_.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff() > 0.0;
}

bool NDMatrix::same_basis(const NDMatrix& other) const { return nodes_ == other.nodes_; }

bool operator==(const NDMatrix& a, const NDMatrix& b) {
    if (a.nodes_ != b.nodes_ || a.known_ != b.known_) return false;
    for (std::size_t i = 0; i < a.coords_.size(); ++i)
        if (a.coords_[i] != b.coords_[i]) return false;
    for (Eigen::Index j = 0; j < a.values_.cols(); ++j) {
        if (!a.known_[static_cast<std::size_t>(j)]) continue;
        if (a.values_.col(j) != b.values_.col(j)) return false;
    }
    return true;
}

Eigen::MatrixXd pair_densities(const DiscreteSystem& system, const Eigen::SparseMatrix<double>& densities,
                               const std::vector<int>& columns) {
    const Eigen::SparseMatrix<double>& mb = system.mass();
    if (densities.rows() != mb.rows()) raise(ErrorCode::MeshMismatch, "densities do not match the mesh");
    const Eigen::SparseMatrix<double> loads = mb * densities; // M_b rho_j for every column
    const Eigen::SparseMatrix<double> loads_t = loads.transpose();
    Eigen::MatrixXd out = Eigen::MatrixXd::Constant(densities.cols(), densities.cols(),
                                                    std::numeric_limits<double>::quiet_NaN());
    for (std::size_t start = 0; start < columns.size(); start += kSolveBlock) {
        const std::size_t stop = std::min(columns.size(), start + kSolveBlock);
        Eigen::MatrixXd rhs(mb.rows(), static_cast<Eigen::Index>(stop - start));
        for (std::size_t c = start; c < stop; ++c) rhs.col(static_cast<Eigen::Index>(c - start)) = loads.col(columns[c]);
        const Eigen::MatrixXd u = system.solve(rhs);
        // <rho_i, u_j> = (M_b rho_i)^T u_j
        const Eigen::MatrixXd block = loads_t * u;
        for (std::size_t c = start; c < stop; ++c) out.col(columns[c]) = block.col(static_cast<Eigen::Index>(c - start));
    }
    return out;
}

namespace {

std::vector<int> resolve_columns(const std::optional<std::vector<int>>& columns, int m) {
    std::vector<int> cols;
    if (columns) {
        cols = *columns;
        std::sort(cols.begin(), cols.end());
        cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
        for (int c : cols)
            if (c < 0 || c >= m) raise(ErrorCode::InvalidArgument, "N-D column index out of range");
    } else {
        cols.resize(static_cast<std::size_t>(m));
        std::iota(cols.begin(), cols.end(), 0);
    }
    return cols;
}

NDMatrix finish(const FluxBasis& basis, Eigen::MatrixXd values, const std::vector<int>& cols) {
    std::vector<bool> known(static_cast<std::size_t>(basis.size()), false);
    for (int c : cols) known[static_cast<std::size_t>(c)] = true;
    return {basis.nodes, basis.coords, std::move(values), std::move(known)};
}

} // namespace

NDMatrix assemble_nd(const DiscreteSystem& system, const FluxBasis& basis,
                     const std::optional<std::vector<int>>& columns) {
    const int n = system.mesh().node_count();
    for (int node : basis.nodes)
        if (node >= n || !system.mesh().is_sigma_node(node))
            raise(ErrorCode::MeshMismatch, "flux basis does not belong to the system's mesh");
    const auto cols = resolve_columns(columns, basis.size());
    return finish(basis, pair_densities(system, basis.densities(n), cols), cols);
}

Eigen::SparseMatrix<double> transfer_densities(const FluxBasis& coarse, const Mesh& coarse_mesh,
                                               const Mesh& fine_mesh) {
    auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12 * (1.0 + std::abs(a)); };
    if (!close(coarse_mesh.xs.front(), fine_mesh.xs.front()) || !close(coarse_mesh.xs.back(), fine_mesh.xs.back()) ||
        !close(coarse_mesh.ys.front(), fine_mesh.ys.front()) || !close(coarse_mesh.ys.back(), fine_mesh.ys.back()))
        raise(ErrorCode::MeshMismatch, "coarse and fine meshes cover different footprints");
    std::vector<int> index_of(static_cast<std::size_t>(coarse_mesh.node_count()), -1);
    for (int i = 0; i < coarse.size(); ++i) index_of[static_cast<std::size_t>(coarse.nodes[static_cast<std::size_t>(i)])] = i;

    std::vector<Eigen::Triplet<double>> trips;
    for (int j = 0; j <= fine_mesh.ny(); ++j)
        for (int i = 0; i <= fine_mesh.nx(); ++i) {
            const int node = fine_mesh.node_index(i, j, 0);
            const Eigen::Vector2d xp = fine_mesh.vertices[static_cast<std::size_t>(node)].head<2>();
            for (const auto& [cnode, w] : coarse_mesh.locate_bottom(xp)) {
                const int b = index_of[static_cast<std::size_t>(cnode)];
                if (b < 0 || w <= 1e-14) continue;
                if (!fine_mesh.is_sigma_node(node))
                    raise(ErrorCode::MeshMismatch, "coarse flux support leaves the fine Sigma patch");
                trips.emplace_back(node, b, w / coarse.weights[b]);
            }
        }
    Eigen::SparseMatrix<double> d(fine_mesh.node_count(), coarse.size());
    d.setFromTriplets(trips.begin(), trips.end());
    return d;
}

NDMatrix assemble_nd_transferred(const DiscreteSystem& fine_system, const FluxBasis& coarse, const Mesh& coarse_mesh,
                                 const std::optional<std::vector<int>>& columns) {
    const auto cols = resolve_columns(columns, coarse.size());
    const auto dens = transfer_densities(coarse, coarse_mesh, fine_system.mesh());
    return finish(coarse, pair_densities(fine_system, dens, cols), cols);
}

AlessandriniPair alessandrini_gap(const NDMatrix& l1, const NDMatrix& l2, const Eigen::VectorXd& c1,
                                  const Eigen::VectorXd& c2, const Eigen::VectorXd& u1, const Eigen::VectorXd& u2,
                                  const Mesh& mesh, const CoefficientField& k1, const CoefficientField& k2) {
    if (!l1.same_basis(l2) || c1.size() != l1.size() || c2.size() != l1.size())
        raise(ErrorCode::MeshMismatch, "N-D matrices and fluxes use different bases");
    if (u1.size() != mesh.node_count() || u2.size() != mesh.node_count())
        raise(ErrorCode::MeshMismatch, "solutions do not match the mesh");
    if (k1.layer_count() != mesh.layer_count || k2.layer_count() != mesh.layer_count)
        raise(ErrorCode::MeshMismatch, "coefficient fields do not match the mesh partition");
    if (!l1.complete() || !l2.complete()) raise(ErrorCode::InvalidArgument, "identity needs full N-D matrices");

    AlessandriniPair out;
    out.lhs = c1.dot((l2.values() - l1.values()) * c2);
    for (int e = 0; e < mesh.element_count(); ++e) {
        const auto& t = mesh.tets[static_cast<std::size_t>(e)];
        const int label = mesh.labels[static_cast<std::size_t>(e)];
        const auto& a = k1.layer(label);
        const auto& b = k2.layer(label);
        const SymTensor ds(a.sigma.matrix() - b.sigma.matrix());
        const std::array<Eigen::Vector3d, 4> p{mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]],
                                               mesh.vertices[t[3]]};
        const Eigen::Matrix4d ke = element_matrix(p, ds, a.q - b.q);
        Eigen::Vector4d x, y;
        for (int k = 0; k < 4; ++k) {
            x[k] = u1[t[k]];
            y[k] = u2[t[k]];
        }
        out.rhs += x.dot(ke * y);
    }
    return out;
}

double k_kernel(const NDMatrix& lambda, int x, int y, int w, int z, bool check_distinct) {
    const int m = lambda.size();
    for (int i : {x, y, w, z})
        if (i < 0 || i >= m) raise(ErrorCode::InvalidArgument, "kernel argument outside the flux basis");
    if (check_distinct) {
        const std::array<int, 4> ids{x, y, w, z};
        for (int a = 0; a < 4; ++a)
            for (int b = a + 1; b < 4; ++b)
                if (ids[static_cast<std::size_t>(a)] == ids[static_cast<std::size_t>(b)])
                    raise(ErrorCode::CoincidingPoints, "kernel points must be distinct Sigma nodes");
    }
    return lambda.entry(x, y) - lambda.entry(x, w) - lambda.entry(z, y) + lambda.entry(z, w);
}

void write_nd_csv(const NDMatrix& m, std::ostream& out) {
    out << "node_id,x,y,z";
    for (int node : m.nodes()) out << ",col_" << node;
    out << '\n';
    for (int i = 0; i < m.size(); ++i) {
        const auto& c = m.coords()[static_cast<std::size_t>(i)];
        out << m.nodes()[static_cast<std::size_t>(i)] << ',' << format_double(c.x()) << ',' << format_double(c.y())
            << ',' << format_double(c.z());
        for (int j = 0; j < m.size(); ++j)
            out << ',' << (m.column_known(j) ? format_double(m.values()(i, j)) : std::string("nan"));
        out << '\n';
    }
}

NDMatrix read_nd_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) raise(ErrorCode::IoError, "empty N-D matrix CSV");
    const auto header = split_csv(line);
    if (header.size() < 4 || header[0] != "node_id") raise(ErrorCode::IoError, "missing N-D matrix CSV header");
    const std::size_t m = header.size() - 4;
    std::vector<int> nodes;
    std::vector<Eigen::Vector3d> coords;
    Eigen::MatrixXd values(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != m + 4 || nodes.size() >= m) raise(ErrorCode::IoError, "malformed N-D matrix CSV row");
        const auto r = static_cast<Eigen::Index>(nodes.size());
        nodes.push_back(std::stoi(cells[0]));
        coords.emplace_back(parse_double(cells[1]), parse_double(cells[2]), parse_double(cells[3]));
        for (std::size_t j = 0; j < m; ++j) values(r, static_cast<Eigen::Index>(j)) = parse_double(cells[j + 4]);
    }
    if (nodes.size() != m) raise(ErrorCode::IoError, "N-D matrix CSV is not square");
    std::vector<bool> known(m);
    for (std::size_t j = 0; j < m; ++j) {
        if (header[j + 4] != "col_" + std::to_string(nodes[j]))
            raise(ErrorCode::IoError, "column header does not match row node ids");
        known[j] = !std::isnan(values(0, static_cast<Eigen::Index>(j)));
    }
    return {std::move(nodes), std::move(coords), std::move(values), std::move(known)};
}

} // namespace ndlab
