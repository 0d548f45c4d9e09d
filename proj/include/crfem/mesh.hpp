#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "crfem/types.hpp"

namespace crfem {

/// Mesh edge with a fixed orientation.
///
/// `k_plus` is the adjacent triangle with the smaller index and `normal`
/// points from `k_plus` into `k_minus`. On the boundary `k_minus` is -1 and
/// `normal` is the outward normal. `tangent` is `normal` rotated by +90°.
struct Edge {
    std::array<int, 2> endpoints{};  // ascending vertex indices
    double length = 0.0;
    Vec2 midpoint = Vec2::Zero();
    Vec2 normal = Vec2::Zero();
    Vec2 tangent = Vec2::Zero();
    int k_plus = -1;
    int k_minus = -1;
    bool is_boundary = false;
};

struct ElementGeometry {
    int triangle = -1;
    double area = 0.0;
    double diameter = 0.0;
    std::array<Vec2, 3> grad_lambda{};  // gradients of the barycentric coordinates

    /// Throws GeometryError for clockwise or degenerate input.
    static ElementGeometry from_vertices(const Vec2& p0, const Vec2& p1, const Vec2& p2,
                                         int triangle = -1);
};

/// Conforming triangulation with edge topology and newest-vertex-bisection data.
///
/// Local convention: local edge i of a triangle is the edge opposite its
/// local vertex i, so `triangle_edges(t)[i]` is the edge not touching
/// `triangles()[t][i]`. `refinement_edge(t)` is such a local index.
class Mesh {
public:
    Mesh() = default;

    /// Builds edge topology and validates orientation and conformity of the
    /// edge graph. `generation` and `parent` may be empty.
    Mesh(std::vector<Vec2> vertices, std::vector<std::array<int, 3>> triangles,
         std::vector<int> refinement_edge, std::vector<int> generation = {},
         std::vector<int> parent = {});

    const std::vector<Vec2>& vertices() const { return vertices_; }
    const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }
    const std::vector<Edge>& edges() const { return edges_; }
    const std::array<int, 3>& triangle_edges(int t) const { return tri_edges_[t]; }
    int refinement_edge(int t) const { return refinement_edge_[t]; }
    int generation(int t) const { return generation_[t]; }

    /// Index of the triangle in the coarser mesh this one was refined from,
    /// empty for meshes that were not produced by refinement.
    const std::vector<int>& parent() const { return parent_; }

    int num_vertices() const { return static_cast<int>(vertices_.size()); }
    int num_triangles() const { return static_cast<int>(triangles_.size()); }
    int num_edges() const { return static_cast<int>(edges_.size()); }
    int num_boundary_edges() const { return num_boundary_edges_; }

    ElementGeometry geometry(int t) const;
    Vec2 centroid(int t) const;

    double total_area() const;
    /// Smallest interior angle over all triangles, in radians.
    double min_angle() const;
    /// V - E + T.
    int euler_characteristic() const;
    /// Edge graph is manifold and no hanging nodes exist on any edge.
    bool is_conforming() const;

    /// Edge index for a vertex pair, or -1.
    int find_edge(int a, int b) const;

    /// Copy with a replaced parent map.
    Mesh with_parent(std::vector<int> parent) const;

private:
    void build_edges();

    std::vector<Vec2> vertices_;
    std::vector<std::array<int, 3>> triangles_;
    std::vector<Edge> edges_;
    std::vector<std::array<int, 3>> tri_edges_;
    std::vector<int> refinement_edge_;
    std::vector<int> generation_;
    std::vector<int> parent_;
    std::vector<std::vector<int>> vertex_edges_;
    int num_boundary_edges_ = 0;
};

/// n x n cells, each split lower-left to upper-right; refinement edge is the diagonal.
Mesh build_structured_square(int n, const Vec2& corner_min = Vec2(0.0, 0.0),
                             const Vec2& corner_max = Vec2(1.0, 1.0));

/// (0,2)^2 minus [1,2]^2 with cell side 1/n, same diagonal pattern.
Mesh build_lshape(int n);

/// Newest-vertex bisection of every marked triangle with conforming closure.
Mesh refine(const Mesh& mesh, std::span<const int> marked);

/// Bisects every triangle twice; parent map refers to `mesh`.
Mesh refine_uniform(const Mesh& mesh);

/// (k_plus, k_minus) of an interior edge.
std::pair<int, int> element_patch(const Mesh& mesh, int edge);

/// Text dump: "<nv> <nt>", vertex lines, triangle lines.
std::string format_mesh(const Mesh& mesh);
Mesh parse_mesh(const std::string& text);

/// Writes through a temporary file and renames it into place.
void write_mesh(const Mesh& mesh, const std::filesystem::path& path);
Mesh read_mesh(const std::filesystem::path& path);

} // namespace crfem
