#pragma once

#include "ndlab/geometry.hpp"

#include <Eigen/Dense>

#include <array>
#include <iosfwd>
#include <optional>
#include <vector>

namespace ndlab {

enum class FaceTag { sigma, delta };

/// Local refinement of the structured grid: cells have size h inside the focus
/// zones and grow linearly with distance from them (ratio `growth` per cell)
/// up to h_max.
struct MeshGrading {
    std::vector<Eigen::Vector2d> focus;  // x' points that keep size h around them
    double focus_halfwidth = 0.0;        // half-width of the fine band around each focus coordinate
    double fine_depth = 0.0;             // depth above phi_0 kept at size h
    double growth = 1.2;
    double h_max = 0.0;                  // 0 means unbounded
};

struct MeshOptions {
    double h = 0.1;
    std::optional<MeshGrading> grading;
    int min_sheets_per_layer = 2;
};

/// Structured tetrahedral mesh of a layered domain (n = 3). Each grid cell is
/// split into six Kuhn tetrahedra; vertex sheets are warped vertically so that
/// every interface is a sheet of vertices.
class Mesh {
public:
    std::vector<Eigen::Vector3d> vertices;
    std::vector<std::array<int, 4>> tets;
    std::vector<int> labels; // layer index per tet, 0-based
    std::vector<std::array<int, 3>> boundary_faces;
    std::vector<FaceTag> face_tags;
    std::vector<bool> face_on_bottom; // face lies on the accessible graph phi_0
    std::vector<int> sigma_nodes;     // sorted; nodes whose every incident boundary face is a Sigma face
    double h = 0.0;
    int layer_count = 0;
    SigmaPatch sigma_patch; // accessible patch the Sigma faces were tagged from

    // Structured description.
    std::vector<double> xs, ys;          // footprint axes
    std::vector<int> layer_sheet_begin;  // first sheet index of each layer (size layer_count + 1)
    std::vector<double> sheet_fraction;  // in-layer parameter t of every sheet

    [[nodiscard]] int node_count() const { return static_cast<int>(vertices.size()); }
    [[nodiscard]] int element_count() const { return static_cast<int>(tets.size()); }
    [[nodiscard]] int nx() const { return static_cast<int>(xs.size()) - 1; }
    [[nodiscard]] int ny() const { return static_cast<int>(ys.size()) - 1; }
    [[nodiscard]] int nz() const { return static_cast<int>(sheet_fraction.size()) - 1; }
    [[nodiscard]] int node_index(int i, int j, int k) const { return (k * (ny() + 1) + j) * (nx() + 1) + i; }
    [[nodiscard]] double volume(int element) const;
    [[nodiscard]] Eigen::Vector3d centroid(int element) const;
    [[nodiscard]] double face_area(int face) const;
    [[nodiscard]] bool is_sigma_node(int node) const;
    /// Index of the node in sigma_nodes, or -1.
    [[nodiscard]] int sigma_position(int node) const;
    /// Bottom node (k = 0) nearest to x' in the footprint grid.
    [[nodiscard]] int nearest_bottom_node(const Eigen::Vector2d& xp) const;
    /// Nodes and barycentric weights of the bottom triangle containing x' (projected).
    [[nodiscard]] std::array<std::pair<int, double>, 3> locate_bottom(const Eigen::Vector2d& xp) const;
};

/// LayerTooThin (layer thinner than 2h somewhere), DegenerateElement.
Mesh generate_mesh(const LayeredDomain& domain, const MeshOptions& options);

/// ASCII legacy-VTK unstructured grid with per-cell layer labels and optional point data.
void write_mesh_vtk(const Mesh& mesh, std::ostream& out,
                    const std::vector<std::pair<std::string, const Eigen::VectorXd*>>& point_data = {});

} // namespace ndlab
