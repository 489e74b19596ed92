#include "ndlab/geometry.hpp"

#include "ndlab/error.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

namespace ndlab {

namespace {

// Exponent tuples of total degree 0, 1, 2, ... in graded-lex order, first
// coordinate descending within a degree.
void append_degree(int vars, int degree, std::vector<int>& prefix, std::vector<std::vector<int>>& out) {
    if (vars == 1) {
        prefix.push_back(degree);
        out.push_back(prefix);
        prefix.pop_back();
        return;
    }
    for (int e = degree; e >= 0; --e) {
        prefix.push_back(e);
        append_degree(vars - 1, degree - e, prefix, out);
        prefix.pop_back();
    }
}

std::vector<std::vector<int>> monomial_exponents(int vars, std::size_t count) {
    std::vector<std::vector<int>> out;
    std::vector<int> prefix;
    for (int degree = 0; out.size() < count; ++degree) append_degree(vars, degree, prefix, out);
    out.resize(count);
    return out;
}

// Tensor grid of `res` points per axis over the cube [c - r, c + r]^m, clipped to the disc.
std::vector<Eigen::VectorXd> disc_grid(const Eigen::VectorXd& center, double r, int res) {
    const int m = static_cast<int>(center.size());
    std::vector<Eigen::VectorXd> pts;
    std::vector<int> idx(m, 0);
    const double step = res > 1 ? 2.0 * r / (res - 1) : 0.0;
    while (true) {
        Eigen::VectorXd offset(m);
        for (int a = 0; a < m; ++a) offset[a] = res > 1 ? -r + step * idx[a] : 0.0;
        if (offset.norm() <= r * (1.0 + 1e-12)) pts.push_back(center + offset);
        int a = 0;
        while (a < m && ++idx[a] == res) idx[a++] = 0;
        if (a == m) break;
    }
    return pts;
}

std::vector<Eigen::VectorXd> box_grid(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, int res) {
    const int m = static_cast<int>(lo.size());
    std::vector<Eigen::VectorXd> pts;
    std::vector<int> idx(m, 0);
    while (true) {
        Eigen::VectorXd p(m);
        for (int a = 0; a < m; ++a) p[a] = lo[a] + (hi[a] - lo[a]) * idx[a] / std::max(1, res - 1);
        pts.push_back(p);
        int a = 0;
        while (a < m && ++idx[a] == res) idx[a++] = 0;
        if (a == m) break;
    }
    return pts;
}

std::string describe(const Eigen::VectorXd& v) {
    std::ostringstream os;
    os << "(";
    for (int i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
    os << ")";
    return os.str();
}

} // namespace

std::string to_string(GraphKind kind) {
    switch (kind) {
    case GraphKind::plane: return "plane";
    case GraphKind::paraboloid: return "paraboloid";
    case GraphKind::polynomial: return "polynomial";
    case GraphKind::sphere_cap: return "sphere_cap";
    }
    return "unknown";
}

GraphKind graph_kind_from_string(const std::string& name) {
    if (name == "plane") return GraphKind::plane;
    if (name == "paraboloid") return GraphKind::paraboloid;
    if (name == "polynomial") return GraphKind::polynomial;
    if (name == "sphere_cap") return GraphKind::sphere_cap;
    raise(ErrorCode::InvalidArgument, "unknown interface kind '" + name + "'");
}

InterfaceGraph::InterfaceGraph(GraphKind kind, std::vector<double> coefficients, double radius, int dimension,
                               double alpha)
    : kind_(kind), coefficients_(std::move(coefficients)), radius_(radius), dimension_(dimension), alpha_(alpha) {
    if (dimension_ < 2) raise(ErrorCode::DimensionTooSmall, "graph dimension must be >= 2");
    if (!(radius_ > 0.0)) raise(ErrorCode::InvalidArgument, "graph radius must be positive");
    if (coefficients_.empty()) raise(ErrorCode::InvalidArgument, "interface needs at least one coefficient");
    const auto m = static_cast<std::size_t>(dimension_ - 1);
    switch (kind_) {
    case GraphKind::plane:
        if (coefficients_.size() != 1 && coefficients_.size() != m + 1)
            raise(ErrorCode::InvalidArgument, "plane takes [height] or [height, slopes...]");
        break;
    case GraphKind::paraboloid:
        if (coefficients_.size() != 2) raise(ErrorCode::InvalidArgument, "paraboloid takes [base, curvature]");
        break;
    case GraphKind::sphere_cap:
        if (coefficients_.size() != 2) raise(ErrorCode::InvalidArgument, "sphere_cap takes [base, sphere radius]");
        if (!(coefficients_[1] > radius_))
            raise(ErrorCode::InvalidArgument, "sphere_cap radius must exceed the graph radius");
        break;
    case GraphKind::polynomial:
        exponents_ = monomial_exponents(dimension_ - 1, coefficients_.size());
        break;
    }
}

InterfaceGraph InterfaceGraph::plane(double height, double radius, int dimension) {
    return {GraphKind::plane, {height}, radius, dimension};
}

InterfaceGraph InterfaceGraph::paraboloid(double base, double curvature, double radius, int dimension) {
    return {GraphKind::paraboloid, {base, curvature}, radius, dimension};
}

double InterfaceGraph::height(const Eigen::VectorXd& xp) const {
    switch (kind_) {
    case GraphKind::plane: {
        double h = coefficients_[0];
        if (coefficients_.size() > 1)
            for (int a = 0; a < xp.size(); ++a) h += coefficients_[a + 1] * xp[a];
        return h;
    }
    case GraphKind::paraboloid: return coefficients_[0] + coefficients_[1] * xp.squaredNorm();
    case GraphKind::sphere_cap: {
        const double rho = coefficients_[1];
        return coefficients_[0] + rho - std::sqrt(rho * rho - xp.squaredNorm());
    }
    case GraphKind::polynomial: {
        double h = 0.0;
        for (std::size_t t = 0; t < coefficients_.size(); ++t) {
            double mono = coefficients_[t];
            for (int a = 0; a < xp.size(); ++a) mono *= std::pow(xp[a], exponents_[t][a]);
            h += mono;
        }
        return h;
    }
    }
    return 0.0;
}

Eigen::VectorXd InterfaceGraph::gradient(const Eigen::VectorXd& xp) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(xp.size());
    switch (kind_) {
    case GraphKind::plane:
        if (coefficients_.size() > 1)
            for (int a = 0; a < xp.size(); ++a) g[a] = coefficients_[a + 1];
        break;
    case GraphKind::paraboloid: g = 2.0 * coefficients_[1] * xp; break;
    case GraphKind::sphere_cap: {
        const double rho = coefficients_[1];
        g = xp / std::sqrt(rho * rho - xp.squaredNorm());
        break;
    }
    case GraphKind::polynomial:
        for (std::size_t t = 0; t < coefficients_.size(); ++t) {
            for (int a = 0; a < xp.size(); ++a) {
                const int ea = exponents_[t][a];
                if (ea == 0) continue;
                double d = coefficients_[t] * ea * std::pow(xp[a], ea - 1);
                for (int b = 0; b < xp.size(); ++b)
                    if (b != a) d *= std::pow(xp[b], exponents_[t][b]);
                g[a] += d;
            }
        }
        break;
    }
    return g;
}

Eigen::MatrixXd InterfaceGraph::hessian(const Eigen::VectorXd& xp) const {
    const auto m = xp.size();
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(m, m);
    switch (kind_) {
    case GraphKind::plane: break;
    case GraphKind::paraboloid: h.diagonal().setConstant(2.0 * coefficients_[1]); break;
    case GraphKind::sphere_cap: {
        const double rho = coefficients_[1];
        const double s = std::sqrt(rho * rho - xp.squaredNorm());
        h = Eigen::MatrixXd::Identity(m, m) / s + xp * xp.transpose() / (s * s * s);
        break;
    }
    case GraphKind::polynomial:
        for (std::size_t t = 0; t < coefficients_.size(); ++t) {
            for (int a = 0; a < m; ++a) {
                for (int b = 0; b < m; ++b) {
                    std::vector<int> e = exponents_[t];
                    double d = coefficients_[t];
                    for (int axis : {a, b}) {
                        d *= e[axis];
                        e[axis] = std::max(0, e[axis] - 1);
                    }
                    if (d == 0.0) continue;
                    for (int c = 0; c < m; ++c) d *= std::pow(xp[c], e[c]);
                    h(a, b) += d;
                }
            }
        }
        break;
    }
    return h;
}

Eigen::VectorXd InterfaceGraph::surface_point(const Eigen::VectorXd& xp) const {
    Eigen::VectorXd p(xp.size() + 1);
    p.head(xp.size()) = xp;
    p[xp.size()] = height(xp);
    return p;
}

Eigen::VectorXd InterfaceGraph::downward_normal(const Eigen::VectorXd& xp) const {
    Eigen::VectorXd n(xp.size() + 1);
    n.head(xp.size()) = gradient(xp);
    n[xp.size()] = -1.0;
    return n.normalized();
}

bool InterfaceGraph::contains(const Eigen::VectorXd& xp, double tol) const {
    return xp.norm() <= radius_ * (1.0 + tol) + tol;
}

bool InterfaceGraph::is_canonical(double tol) const {
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(dimension_ - 1);
    return std::abs(height(zero)) <= tol && gradient(zero).norm() <= tol;
}

const InterfaceGraph& LayeredDomain::graph(int k) const {
    if (k == 0) return desc_.boundary;
    if (k < 0 || k > static_cast<int>(desc_.interfaces.size()))
        raise(ErrorCode::InvalidArgument, "graph index out of range");
    return desc_.interfaces[static_cast<std::size_t>(k - 1)];
}

double LayeredDomain::layer_bottom(int j, const Eigen::VectorXd& xp) const { return graph(j).height(xp); }

double LayeredDomain::layer_top(int j, const Eigen::VectorXd& xp) const {
    return j + 1 < layer_count() ? graph(j + 1).height(xp) : desc_.top;
}

int LayeredDomain::locate(const Eigen::VectorXd& x) const {
    const int m = dimension() - 1;
    const Eigen::VectorXd xp = x.head(m);
    for (int a = 0; a < m; ++a)
        if (xp[a] < desc_.lower[a] || xp[a] > desc_.upper[a]) return -1;
    const double z = x[m];
    if (z < layer_bottom(0, xp) || z > desc_.top) return -1;
    for (int j = 0; j < layer_count(); ++j)
        if (z <= layer_top(j, xp)) return j;
    return -1;
}

LayeredDomain LayeredDomain::truncated(int first_layer, const SigmaPatch& patch) const {
    if (first_layer < 0 || first_layer >= layer_count())
        raise(ErrorCode::InvalidArgument, "truncation layer out of range");
    DomainDescription d = desc_;
    d.boundary = graph(first_layer);
    d.interfaces.assign(desc_.interfaces.begin() + first_layer, desc_.interfaces.end());
    d.sigma = patch;
    return build_layered_domain(d);
}

LayeredDomain LayeredDomain::with_interface(const InterfaceGraph& extra) const {
    DomainDescription d = desc_;
    const Eigen::VectorXd mid = 0.5 * (desc_.lower + desc_.upper);
    const double h = extra.height(mid);
    auto pos = std::find_if(d.interfaces.begin(), d.interfaces.end(),
                            [&](const InterfaceGraph& g) { return g.height(mid) > h; });
    d.interfaces.insert(pos, extra);
    return build_layered_domain(d);
}

LayeredDomain build_layered_domain(const DomainDescription& desc) {
    const int n = desc.dimension;
    if (n < 2) raise(ErrorCode::DimensionTooSmall, "domain dimension must be >= 2");
    const int m = n - 1;
    if (desc.lower.size() != m || desc.upper.size() != m)
        raise(ErrorCode::InvalidArgument, "footprint corners must have n-1 components");
    for (int a = 0; a < m; ++a)
        if (!(desc.upper[a] > desc.lower[a])) raise(ErrorCode::InvalidArgument, "footprint has zero width");

    std::vector<const InterfaceGraph*> graphs{&desc.boundary};
    for (const auto& g : desc.interfaces) graphs.push_back(&g);
    for (const auto* g : graphs)
        if (g->dimension() != n) raise(ErrorCode::InvalidArgument, "interface dimension mismatch");

    // Every footprint corner must lie in each graph's disc.
    for (const auto* g : graphs) {
        for (const auto& c : box_grid(desc.lower, desc.upper, 2))
            if (!g->contains(c, 1e-12))
                raise(ErrorCode::OutsideGraphDomain, "footprint corner " + describe(c) + " lies outside B'_R");
    }

    const int res = std::max(desc.sampling, 2);
    for (std::size_t k = 1; k < graphs.size(); ++k) {
        const double r = std::min(graphs[k - 1]->radius(), graphs[k]->radius());
        for (const auto& p : disc_grid(Eigen::VectorXd::Zero(m), r, res)) {
            const double gap = graphs[k]->height(p) - graphs[k - 1]->height(p);
            if (!(gap > 0.0))
                raise(ErrorCode::OrderingViolation, "interfaces " + std::to_string(k - 1) + " and " +
                                                        std::to_string(k) + " cross at x' = " + describe(p));
        }
    }
    for (const auto& p : box_grid(desc.lower, desc.upper, res)) {
        if (!(desc.top > graphs.back()->height(p)))
            raise(ErrorCode::EmptyLayer, "top plane does not clear the last interface at x' = " + describe(p));
        for (std::size_t k = 1; k < graphs.size(); ++k)
            if (!(graphs[k]->height(p) > graphs[k - 1]->height(p)))
                raise(ErrorCode::EmptyLayer, "layer " + std::to_string(k - 1) + " is empty at x' = " + describe(p));
    }

    const SigmaPatch& s = desc.sigma;
    if (s.center.size() != m || !(s.radius > 0.0))
        raise(ErrorCode::SigmaOutsideGraph, "sigma patch needs an (n-1)-dimensional center and positive radius");
    if (s.center.norm() + s.radius > desc.boundary.radius() * (1.0 + 1e-12))
        raise(ErrorCode::SigmaOutsideGraph, "sigma disc leaves B'_R of the accessible graph");
    for (int a = 0; a < m; ++a)
        if (s.center[a] - s.radius < desc.lower[a] - 1e-12 || s.center[a] + s.radius > desc.upper[a] + 1e-12)
            raise(ErrorCode::SigmaOutsideGraph, "sigma disc leaves the domain footprint");

    return LayeredDomain(desc);
}

double TangentFrame::orthonormality_residual() const {
    const int n = dimension();
    Eigen::MatrixXd basis(n, n);
    basis.leftCols(n - 1) = tangents;
    basis.col(n - 1) = normal;
    return (basis.transpose() * basis - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff();
}

TangentFrame TangentFrame::rotated(const Eigen::MatrixXd& rotation) const {
    return {rotation * point, rotation * tangents, rotation * normal};
}

TangentFrame tangent_frame_at(const InterfaceGraph& graph, const Eigen::VectorXd& xp) {
    const int n = graph.dimension();
    if (xp.size() != n - 1) raise(ErrorCode::InvalidArgument, "x' must have n-1 components");
    if (!graph.contains(xp)) raise(ErrorCode::OutsideGraphDomain, "x' = " + describe(xp) + " is outside B'_R");
    const Eigen::VectorXd grad = graph.gradient(xp);
    TangentFrame f;
    f.point = graph.surface_point(xp);
    f.normal = graph.downward_normal(xp);
    f.tangents.resize(n, n - 1);
    for (int a = 0; a < n - 1; ++a) {
        Eigen::VectorXd t = Eigen::VectorXd::Zero(n);
        t[a] = 1.0;
        t[n - 1] = grad[a];
        // Two passes of Gram-Schmidt keep the residual at rounding level.
        for (int pass = 0; pass < 2; ++pass) {
            t -= t.dot(f.normal) * f.normal;
            for (int b = 0; b < a; ++b) t -= t.dot(f.tangents.col(b)) * f.tangents.col(b);
        }
        f.tangents.col(a) = t.normalized();
    }
    return f;
}

WitnessTriple nonflat_witnesses(const InterfaceGraph& graph, const WitnessOptions& options) {
    const int m = graph.dimension() - 1;
    const Eigen::VectorXd center = options.center.value_or(Eigen::VectorXd::Zero(m));
    const double radius = options.search_radius.value_or(graph.radius());
    if (center.norm() + radius > graph.radius() * (1.0 + 1e-12))
        raise(ErrorCode::OutsideGraphDomain, "witness search disc leaves B'_R");
    const auto pts = disc_grid(center, radius, std::max(options.resolution, 2));
    const auto count = pts.size();
    std::vector<Eigen::VectorXd> normals;
    normals.reserve(count);
    for (const auto& p : pts) normals.push_back(graph.downward_normal(p));

    Eigen::MatrixXd deficit(count, count);
    for (std::size_t i = 0; i < count; ++i)
        for (std::size_t j = 0; j < count; ++j) deficit(i, j) = 1.0 - normals[i].dot(normals[j]);

    double best = -1.0;
    std::array<std::size_t, 3> arg{0, 0, 0};
    for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t j = i + 1; j < count; ++j) {
            const double dij = deficit(i, j);
            if (dij <= best) continue;
            for (std::size_t k = j + 1; k < count; ++k) {
                const double d = std::min({dij, deficit(i, k), deficit(j, k)});
                if (d > best) {
                    best = d;
                    arg = {i, j, k};
                }
            }
        }
    }
    if (best < options.eps_flat)
        raise(ErrorCode::FlatInterface, "best normal deficit " + std::to_string(std::max(best, 0.0)) +
                                            " is below eps_flat");
    return {{pts[arg[0]], pts[arg[1]], pts[arg[2]]}, best};
}

bool gammas_admissible(double g1, double g2, double g3, double eps) {
    const bool nz1 = std::abs(g1) >= eps;
    const bool nz2 = std::abs(g2) >= eps;
    const bool nz3 = std::abs(g3) >= eps;
    return (nz1 && nz3) || (nz1 && !nz3 && nz2 && std::abs(g1 - g2) >= eps);
}

GammaTriple GammaTriple::from_values(double g1, double g2, double g3, int dimension, double eps_flat) {
    if (dimension < 3) raise(ErrorCode::DimensionTooSmall, "gamma triples need n >= 3");
    if (!gammas_admissible(g1, g2, g3, eps_flat))
        raise(ErrorCode::InadmissibleGammas, "gammas (" + std::to_string(g1) + ", " + std::to_string(g2) + ", " +
                                                 std::to_string(g3) + ") violate the admissibility condition");
    GammaTriple t;
    t.gamma1 = g1;
    t.gamma2 = g2;
    t.gamma3 = g3;
    t.branch = std::abs(g3) >= eps_flat ? GammaBranch::A1 : GammaBranch::A2;
    t.rotation = Eigen::MatrixXd::Identity(dimension, dimension);
    return t;
}

GammaTriple gammas_from_frames(const TangentFrame& f1, const TangentFrame& f2, const TangentFrame& f3,
                               double eps_flat) {
    const int n = f1.dimension();
    if (n < 3) raise(ErrorCode::DimensionTooSmall, "gamma triples need n >= 3");
    if (f2.dimension() != n || f3.dimension() != n)
        raise(ErrorCode::InvalidArgument, "frames have different dimensions");
    const Eigen::VectorXd& nu1 = f1.normal;
    const Eigen::VectorXd& nu2 = f2.normal;
    const Eigen::VectorXd& nu3 = f3.normal;

    const double c2 = nu2.dot(nu1);
    const double c3 = nu3.dot(nu1);
    if (!(c2 > 0.0) || !(c3 > 0.0))
        raise(ErrorCode::InadmissibleGammas, "witness normals are not in a common half-space with nu(y1)");

    Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(n, n);
    basis.col(n - 1) = -nu1;

    const Eigen::VectorXd t2 = nu2 - c2 * nu1;
    const double g1 = t2.norm() / c2;
    if (t2.norm() < 1e-14) raise(ErrorCode::InadmissibleGammas, "nu(y2) is parallel to nu(y1): gamma1 = 0");
    basis.col(n - 2) = t2 / t2.norm();

    const double g2 = nu3.dot(basis.col(n - 2)) / c3;
    const Eigen::VectorXd t3 = nu3 - c3 * nu1 - nu3.dot(basis.col(n - 2)) * basis.col(n - 2);
    const double g3 = t3.norm() / c3;

    // Remaining columns: the t3 direction (if any) then a Gram-Schmidt completion.
    int filled = 2;
    auto orthogonalize = [&](Eigen::VectorXd v) {
        for (int pass = 0; pass < 2; ++pass)
            for (int c = n - filled; c < n; ++c) v -= v.dot(basis.col(c)) * basis.col(c);
        return v;
    };
    if (t3.norm() > 1e-12) {
        basis.col(n - 3) = orthogonalize(t3).normalized();
        ++filled;
    }
    for (int e = 0; e < n && filled < n; ++e) {
        Eigen::VectorXd v = Eigen::VectorXd::Unit(n, e);
        v = orthogonalize(v);
        if (v.norm() > 1e-6) {
            basis.col(n - 1 - filled) = v.normalized();
            ++filled;
        }
    }

    GammaTriple t = GammaTriple::from_values(g1, g2, g3, n, eps_flat);
    t.rotation = basis;
    t.frames = {f1, f2, f3};
    return t;
}

void write_surface_vtk(const LayeredDomain& domain, std::ostream& out, int resolution) {
    if (domain.dimension() != 3) raise(ErrorCode::InvalidArgument, "surface export supports n = 3 only");
    const int res = std::max(resolution, 2);
    const int surfaces = domain.layer_count() + 1;
    const int per = res * res;
    out << "# vtk DataFile Version 3.0\nlayered domain surfaces\nASCII\nDATASET POLYDATA\n";
    out << "POINTS " << surfaces * per << " double\n";
    out.precision(17);
    for (int s = 0; s < surfaces; ++s) {
        for (int j = 0; j < res; ++j) {
            for (int i = 0; i < res; ++i) {
                Eigen::VectorXd xp(2);
                xp[0] = domain.lower()[0] + (domain.upper()[0] - domain.lower()[0]) * i / (res - 1);
                xp[1] = domain.lower()[1] + (domain.upper()[1] - domain.lower()[1]) * j / (res - 1);
                const double z = s < domain.layer_count() ? domain.graph(s).height(xp) : domain.top();
                out << xp[0] << ' ' << xp[1] << ' ' << z << '\n';
            }
        }
    }
    const int tris = surfaces * (res - 1) * (res - 1) * 2;
    out << "POLYGONS " << tris << ' ' << tris * 4 << '\n';
    for (int s = 0; s < surfaces; ++s) {
        for (int j = 0; j + 1 < res; ++j) {
            for (int i = 0; i + 1 < res; ++i) {
                const int a = s * per + j * res + i;
                const int b = a + 1;
                const int c = a + res + 1;
                const int d = a + res;
                out << "3 " << a << ' ' << b << ' ' << c << "\n3 " << a << ' ' << c << ' ' << d << '\n';
            }
        }
    }
    out << "CELL_DATA " << tris << "\nSCALARS surface int 1\nLOOKUP_TABLE default\n";
    for (int s = 0; s < surfaces; ++s)
        for (int t = 0; t < (res - 1) * (res - 1) * 2; ++t) out << s << '\n';
}

} // namespace ndlab
