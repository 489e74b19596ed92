#include "ndlab/mesh.hpp"

#include "ndlab/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace ndlab {

namespace {

// Node positions on [lo, hi] with spacing following size(x): equidistribution of
// the stretched coordinate xi(x) = int dx / size(x).
template <class SizeFn>
std::vector<double> graded_points(double lo, double hi, SizeFn size, int min_cells) {
    constexpr int samples = 20000;
    std::vector<double> cum(samples + 1, 0.0);
    const double dx = (hi - lo) / samples;
    for (int s = 0; s < samples; ++s) {
        const double a = lo + s * dx;
        cum[s + 1] = cum[s] + 0.5 * dx * (1.0 / size(a) + 1.0 / size(a + dx));
    }
    const int cells = std::max(min_cells, static_cast<int>(std::lround(cum.back())));
    std::vector<double> pts(cells + 1);
    pts.front() = lo;
    pts.back() = hi;
    for (int k = 1; k < cells; ++k) {
        const double target = cum.back() * k / cells;
        const auto it = std::lower_bound(cum.begin(), cum.end(), target);
        const auto s = static_cast<int>(std::distance(cum.begin(), it));
        const double f = (target - cum[s - 1]) / (cum[s] - cum[s - 1]);
        pts[k] = lo + (s - 1 + f) * dx;
    }
    return pts;
}

std::vector<double> uniform_points(double lo, double hi, int cells) {
    std::vector<double> pts(cells + 1);
    for (int k = 0; k <= cells; ++k) pts[k] = lo + (hi - lo) * k / cells;
    pts.back() = hi;
    return pts;
}

double grown_size(const MeshGrading& g, double h, double distance) {
    const double s = h + (g.growth - 1.0) * std::max(0.0, distance);
    return g.h_max > 0.0 ? std::min(s, std::max(g.h_max, h)) : s;
}

// Axis nodes for a graded mesh. Around every focus coordinate the spacing is
// built outward from the focus and mirrored, so each focus is a node with
// identical offsets on both sides (and on both axes); the gaps between these
// symmetric zones are filled by equidistribution.
std::vector<double> footprint_axis(double lo, double hi, const MeshOptions& opt, int axis) {
    if (!opt.grading) return uniform_points(lo, hi, std::max(1, static_cast<int>(std::lround((hi - lo) / opt.h))));
    const MeshGrading& g = *opt.grading;
    auto size = [&](double x) {
        double dist = g.focus.empty() ? 0.0 : 1e300;
        for (const auto& f : g.focus) dist = std::min(dist, std::abs(x - f[axis]) - g.focus_halfwidth);
        return grown_size(g, opt.h, dist);
    };
    std::vector<double> foci;
    for (const auto& f : g.focus)
        if (f[axis] > lo && f[axis] < hi) foci.push_back(f[axis]);
    std::sort(foci.begin(), foci.end());
    foci.erase(std::unique(foci.begin(), foci.end(), [&](double a, double b) { return b - a < 1e-9 * opt.h; }),
               foci.end());
    if (foci.empty()) return graded_points(lo, hi, size, 1);

    std::vector<double> pts;
    double cursor = lo;
    auto fill_to = [&](double end) {
        if (end - cursor > 1e-9 * opt.h) {
            const auto gap = graded_points(cursor, end, size, 1);
            pts.insert(pts.end(), gap.begin() + (pts.empty() ? 0 : 1), gap.end());
        } else if (pts.empty()) {
            pts.push_back(cursor);
        }
        cursor = end;
    };
    for (std::size_t i = 0; i < foci.size(); ++i) {
        const double f = foci[i];
        double reach = std::min(f - lo, hi - f);
        if (i > 0) reach = std::min(reach, 0.5 * (f - foci[i - 1]));
        if (i + 1 < foci.size()) reach = std::min(reach, 0.5 * (foci[i + 1] - f));
        std::vector<double> offsets{0.0};
        for (;;) {
            const double o = offsets.back();
            const double s = grown_size(g, opt.h, o - g.focus_halfwidth);
            if (o + s > reach * (1.0 - 1e-9)) break;
            offsets.push_back(o + s);
        }
        // Leave at least one gap cell so the zone joins the filler smoothly.
        if (offsets.size() > 1 && f - offsets.back() - cursor < 0.5 * opt.h) offsets.pop_back();
        fill_to(f - offsets.back());
        for (std::size_t k = offsets.size() - 1; k-- > 0;) pts.push_back(f - offsets[k]);
        for (std::size_t k = 1; k < offsets.size(); ++k) pts.push_back(f + offsets[k]);
        cursor = pts.back();
    }
    fill_to(hi);
    return pts;
}

double signed_volume(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c,
                     const Eigen::Vector3d& d) {
    Eigen::Matrix3d m;
    m.col(0) = b - a;
    m.col(1) = c - a;
    m.col(2) = d - a;
    return m.determinant() / 6.0;
}

} // namespace

double Mesh::volume(int e) const {
    const auto& t = tets[static_cast<std::size_t>(e)];
    return signed_volume(vertices[t[0]], vertices[t[1]], vertices[t[2]], vertices[t[3]]);
}

Eigen::Vector3d Mesh::centroid(int e) const {
    const auto& t = tets[static_cast<std::size_t>(e)];
    return 0.25 * (vertices[t[0]] + vertices[t[1]] + vertices[t[2]] + vertices[t[3]]);
}

double Mesh::face_area(int f) const {
    const auto& t = boundary_faces[static_cast<std::size_t>(f)];
    return 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
}

bool Mesh::is_sigma_node(int node) const { return sigma_position(node) >= 0; }

int Mesh::sigma_position(int node) const {
    const auto it = std::lower_bound(sigma_nodes.begin(), sigma_nodes.end(), node);
    return it != sigma_nodes.end() && *it == node ? static_cast<int>(std::distance(sigma_nodes.begin(), it)) : -1;
}

int Mesh::nearest_bottom_node(const Eigen::Vector2d& xp) const {
    auto nearest = [](const std::vector<double>& axis, double v) {
        const auto it = std::lower_bound(axis.begin(), axis.end(), v);
        if (it == axis.begin()) return 0;
        if (it == axis.end()) return static_cast<int>(axis.size()) - 1;
        const auto hi = static_cast<int>(std::distance(axis.begin(), it));
        return (v - axis[hi - 1] <= axis[hi] - v) ? hi - 1 : hi;
    };
    return node_index(nearest(xs, xp[0]), nearest(ys, xp[1]), 0);
}

std::array<std::pair<int, double>, 3> Mesh::locate_bottom(const Eigen::Vector2d& xp) const {
    auto cell = [](const std::vector<double>& axis, double v) {
        const auto it = std::upper_bound(axis.begin(), axis.end(), v);
        const auto c = static_cast<int>(std::distance(axis.begin(), it)) - 1;
        return std::clamp(c, 0, static_cast<int>(axis.size()) - 2);
    };
    const int i = cell(xs, xp[0]);
    const int j = cell(ys, xp[1]);
    const double s = std::clamp((xp[0] - xs[i]) / (xs[i + 1] - xs[i]), 0.0, 1.0);
    const double t = std::clamp((xp[1] - ys[j]) / (ys[j + 1] - ys[j]), 0.0, 1.0);
    const int n00 = node_index(i, j, 0), n10 = node_index(i + 1, j, 0);
    const int n01 = node_index(i, j + 1, 0), n11 = node_index(i + 1, j + 1, 0);
    if (s >= t) return {{{n00, 1.0 - s}, {n10, s - t}, {n11, t}}};
    return {{{n00, 1.0 - t}, {n01, t - s}, {n11, s}}};
}

Mesh generate_mesh(const LayeredDomain& domain, const MeshOptions& opt) {
    if (domain.dimension() != 3) raise(ErrorCode::InvalidArgument, "meshing supports n = 3 only");
    if (!(opt.h > 0.0)) raise(ErrorCode::InvalidArgument, "mesh size h must be positive");

    Mesh mesh;
    mesh.h = opt.h;
    mesh.sigma_patch = domain.sigma();
    mesh.layer_count = domain.layer_count();
    mesh.xs = footprint_axis(domain.lower()[0], domain.upper()[0], opt, 0);
    mesh.ys = footprint_axis(domain.lower()[1], domain.upper()[1], opt, 1);
    const int nx = mesh.nx(), ny = mesh.ny();

    // Layer thickness check on every column.
    for (int j = 0; j <= ny; ++j) {
        for (int i = 0; i <= nx; ++i) {
            const Eigen::VectorXd xp = Eigen::Vector2d(mesh.xs[i], mesh.ys[j]);
            for (int l = 0; l < mesh.layer_count; ++l) {
                const double thick = domain.layer_top(l, xp) - domain.layer_bottom(l, xp);
                if (thick < 2.0 * opt.h * (1.0 - 1e-12))
                    raise(ErrorCode::LayerTooThin, "layer " + std::to_string(l) + " has thickness " +
                                                       std::to_string(thick) + " < 2h at x' = (" +
                                                       std::to_string(xp[0]) + ", " + std::to_string(xp[1]) + ")");
            }
        }
    }

    // Sheets per layer from a reference column.
    const Eigen::VectorXd ref = opt.grading ? Eigen::VectorXd(domain.sigma().center)
                                            : Eigen::VectorXd(0.5 * (domain.lower() + domain.upper()));
    const double base = domain.layer_bottom(0, ref);
    mesh.layer_sheet_begin.push_back(0);
    for (int l = 0; l < mesh.layer_count; ++l) {
        const double lo = domain.layer_bottom(l, ref);
        const double hi = domain.layer_top(l, ref);
        std::vector<double> pts;
        if (opt.grading) {
            const MeshGrading& g = *opt.grading;
            auto size = [&](double z) { return grown_size(g, opt.h, z - base - g.fine_depth); };
            pts = graded_points(lo, hi, size, opt.min_sheets_per_layer);
        } else {
            double mean = 0.0;
            for (int j = 0; j <= ny; ++j)
                for (int i = 0; i <= nx; ++i) {
                    const Eigen::VectorXd xp = Eigen::Vector2d(mesh.xs[i], mesh.ys[j]);
                    mean += domain.layer_top(l, xp) - domain.layer_bottom(l, xp);
                }
            mean /= (nx + 1) * (ny + 1);
            const int cells = std::max(opt.min_sheets_per_layer, static_cast<int>(std::lround(mean / opt.h)));
            pts = uniform_points(lo, hi, cells);
        }
        const std::size_t first = l == 0 ? 0 : 1; // shared interface sheet
        for (std::size_t s = first; s < pts.size(); ++s)
            mesh.sheet_fraction.push_back(s + 1 == pts.size() ? 1.0 : (pts[s] - lo) / (hi - lo));
        mesh.layer_sheet_begin.push_back(static_cast<int>(mesh.sheet_fraction.size()) - 1);
    }
    const int nz = mesh.nz();

    // Vertices.
    std::vector<int> sheet_layer(static_cast<std::size_t>(nz + 1));
    for (int l = 0; l < mesh.layer_count; ++l)
        for (int k = mesh.layer_sheet_begin[l]; k <= mesh.layer_sheet_begin[l + 1]; ++k)
            sheet_layer[k] = (k == mesh.layer_sheet_begin[l + 1] && l + 1 < mesh.layer_count) ? l + 1 : l;
    mesh.vertices.resize(static_cast<std::size_t>((nx + 1) * (ny + 1) * (nz + 1)));
    for (int k = 0; k <= nz; ++k) {
        const int l = sheet_layer[k];
        const double t = k == mesh.layer_sheet_begin[l] ? 0.0 : mesh.sheet_fraction[k];
        for (int j = 0; j <= ny; ++j) {
            for (int i = 0; i <= nx; ++i) {
                const Eigen::VectorXd xp = Eigen::Vector2d(mesh.xs[i], mesh.ys[j]);
                const double lo = domain.layer_bottom(l, xp);
                const double hi = domain.layer_top(l, xp);
                mesh.vertices[mesh.node_index(i, j, k)] = Eigen::Vector3d(xp[0], xp[1], lo + t * (hi - lo));
            }
        }
    }

    // Kuhn split: one tetrahedron per axis permutation, all sharing the cell diagonal.
    std::array<std::array<int, 3>, 6> perms{{{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
    std::array<std::array<Eigen::Vector3i, 4>, 6> paths{};
    std::array<double, 6> ref_sign{};
    for (std::size_t p = 0; p < perms.size(); ++p) {
        Eigen::Vector3i v = Eigen::Vector3i::Zero();
        paths[p][0] = v;
        for (int s = 0; s < 3; ++s) {
            v[perms[p][s]] += 1;
            paths[p][s + 1] = v;
        }
        ref_sign[p] = signed_volume(paths[p][0].cast<double>(), paths[p][1].cast<double>(),
                                    paths[p][2].cast<double>(), paths[p][3].cast<double>()) > 0 ? 1.0 : -1.0;
    }

    std::vector<int> layer_of_cell(static_cast<std::size_t>(nz));
    for (int l = 0; l < mesh.layer_count; ++l)
        for (int k = mesh.layer_sheet_begin[l]; k < mesh.layer_sheet_begin[l + 1]; ++k) layer_of_cell[k] = l;

    mesh.tets.reserve(static_cast<std::size_t>(6 * nx * ny * nz));
    mesh.labels.reserve(mesh.tets.capacity());
    const double min_volume = 1e-14 * opt.h * opt.h * opt.h;
    for (int k = 0; k < nz; ++k) {
        for (int j = 0; j < ny; ++j) {
            for (int i = 0; i < nx; ++i) {
                for (std::size_t p = 0; p < perms.size(); ++p) {
                    std::array<int, 4> t{};
                    for (int c = 0; c < 4; ++c) {
                        const auto& o = paths[p][c];
                        t[c] = mesh.node_index(i + o[0], j + o[1], k + o[2]);
                    }
                    if (ref_sign[p] < 0) std::swap(t[2], t[3]);
                    const double vol = signed_volume(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]],
                                                     mesh.vertices[t[3]]);
                    if (!(vol > min_volume))
                        raise(ErrorCode::DegenerateElement, "tetrahedron in cell (" + std::to_string(i) + ", " +
                                                                std::to_string(j) + ", " + std::to_string(k) +
                                                                ") has volume " + std::to_string(vol));
                    mesh.tets.push_back(t);
                    mesh.labels.push_back(layer_of_cell[k]);
                }
            }
        }
    }

    // Boundary faces: every boundary square is split along its low-to-high diagonal.
    auto add_square = [&](int a, int b, int c, int d, bool bottom) {
        // a = low corner, b / d = the two side corners, c = high corner
        mesh.boundary_faces.push_back({a, b, c});
        mesh.boundary_faces.push_back({a, d, c});
        mesh.face_on_bottom.push_back(bottom);
        mesh.face_on_bottom.push_back(bottom);
    };
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            add_square(mesh.node_index(i, j, 0), mesh.node_index(i + 1, j, 0), mesh.node_index(i + 1, j + 1, 0),
                       mesh.node_index(i, j + 1, 0), true);
            add_square(mesh.node_index(i, j, nz), mesh.node_index(i + 1, j, nz), mesh.node_index(i + 1, j + 1, nz),
                       mesh.node_index(i, j + 1, nz), false);
        }
    for (int k = 0; k < nz; ++k) {
        for (int j = 0; j < ny; ++j)
            for (int i : {0, nx})
                add_square(mesh.node_index(i, j, k), mesh.node_index(i, j + 1, k), mesh.node_index(i, j + 1, k + 1),
                           mesh.node_index(i, j, k + 1), false);
        for (int i = 0; i < nx; ++i)
            for (int j : {0, ny})
                add_square(mesh.node_index(i, j, k), mesh.node_index(i + 1, j, k), mesh.node_index(i + 1, j, k + 1),
                           mesh.node_index(i, j, k + 1), false);
    }

    const SigmaPatch& sigma = domain.sigma();
    std::vector<char> in_sigma_face(mesh.vertices.size(), 0), in_delta_face(mesh.vertices.size(), 0);
    mesh.face_tags.resize(mesh.boundary_faces.size());
    for (std::size_t f = 0; f < mesh.boundary_faces.size(); ++f) {
        bool inside = mesh.face_on_bottom[f];
        for (int v : mesh.boundary_faces[f])
            inside = inside && sigma.contains(mesh.vertices[v].head<2>(), 1e-10);
        mesh.face_tags[f] = inside ? FaceTag::sigma : FaceTag::delta;
        for (int v : mesh.boundary_faces[f]) (inside ? in_sigma_face : in_delta_face)[v] = 1;
    }
    for (int v = 0; v < mesh.node_count(); ++v)
        if (in_sigma_face[v] && !in_delta_face[v]) mesh.sigma_nodes.push_back(v);
    return mesh;
}

void write_mesh_vtk(const Mesh& mesh, std::ostream& out,
                    const std::vector<std::pair<std::string, const Eigen::VectorXd*>>& point_data) {
    out << "# vtk DataFile Version 3.0\nlayered tetrahedral mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n";
    out.precision(17);
    out << "POINTS " << mesh.node_count() << " double\n";
    for (const auto& v : mesh.vertices) out << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
    out << "CELLS " << mesh.element_count() << ' ' << 5 * mesh.element_count() << '\n';
    for (const auto& t : mesh.tets) out << "4 " << t[0] << ' ' << t[1] << ' ' << t[2] << ' ' << t[3] << '\n';
    out << "CELL_TYPES " << mesh.element_count() << '\n';
    for (int e = 0; e < mesh.element_count(); ++e) out << "10\n";
    out << "CELL_DATA " << mesh.element_count() << "\nSCALARS layer int 1\nLOOKUP_TABLE default\n";
    for (int l : mesh.labels) out << l << '\n';
    out << "POINT_DATA " << mesh.node_count() << "\nSCALARS sigma_node int 1\nLOOKUP_TABLE default\n";
    std::vector<char> flag(static_cast<std::size_t>(mesh.node_count()), 0);
    for (int v : mesh.sigma_nodes) flag[v] = 1;
    for (char c : flag) out << static_cast<int>(c) << '\n';
    for (const auto& [name, values] : point_data) {
        if (values->size() != mesh.node_count())
            raise(ErrorCode::MeshMismatch, "point data '" + name + "' does not match the node count");
        out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
        for (int v = 0; v < values->size(); ++v) out << (*values)[v] << '\n';
    }
}

} // namespace ndlab
