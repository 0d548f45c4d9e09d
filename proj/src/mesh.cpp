#include "crfem/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>

#include "crfem/errors.hpp"
#include "crfem/io.hpp"

namespace crfem {

namespace {

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

std::array<int, 2> local_edge_vertices(const std::array<int, 3>& tri, int i)
{
    return {tri[(i + 1) % 3], tri[(i + 2) % 3]};
}

} // namespace

ElementGeometry ElementGeometry::from_vertices(const Vec2& p0, const Vec2& p1, const Vec2& p2,
                                               int triangle)
{
    const double twice_area = cross(p1 - p0, p2 - p0);
    if (!(twice_area > 0.0)) {
        throw GeometryError("triangle " + std::to_string(triangle) +
                            " is degenerate or clockwise (signed area " +
                            format_double(0.5 * twice_area) + ")");
    }
    ElementGeometry g;
    g.triangle = triangle;
    g.area = 0.5 * twice_area;
    g.diameter = std::max({(p1 - p0).norm(), (p2 - p1).norm(), (p0 - p2).norm()});
    const std::array<Vec2, 3> p{p0, p1, p2};
    for (int i = 0; i < 3; ++i) {
        const Vec2& a = p[(i + 1) % 3];
        const Vec2& b = p[(i + 2) % 3];
        g.grad_lambda[i] = Vec2(a.y() - b.y(), b.x() - a.x()) / twice_area;
    }
    return g;
}

Mesh::Mesh(std::vector<Vec2> vertices, std::vector<std::array<int, 3>> triangles,
           std::vector<int> refinement_edge, std::vector<int> generation, std::vector<int> parent)
    : vertices_(std::move(vertices)),
      triangles_(std::move(triangles)),
      refinement_edge_(std::move(refinement_edge)),
      generation_(std::move(generation)),
      parent_(std::move(parent))
{
    const auto nt = triangles_.size();
    if (refinement_edge_.size() != nt) {
        throw ContractError("refinement_edge size does not match triangle count");
    }
    if (generation_.empty()) {
        generation_.assign(nt, 0);
    }
    if (generation_.size() != nt || (!parent_.empty() && parent_.size() != nt)) {
        throw ContractError("per-triangle metadata size does not match triangle count");
    }
    for (std::size_t t = 0; t < nt; ++t) {
        for (int v : triangles_[t]) {
            if (v < 0 || v >= num_vertices()) {
                throw ContractError("triangle " + std::to_string(t) + " references vertex " +
                                    std::to_string(v) + " out of range");
            }
        }
        if (refinement_edge_[t] < 0 || refinement_edge_[t] > 2) {
            throw ContractError("refinement edge index must be 0, 1 or 2");
        }
        geometry(static_cast<int>(t));  // orientation check
    }
    build_edges();
}

void Mesh::build_edges()
{
    vertex_edges_.assign(vertices_.size(), {});
    tri_edges_.assign(triangles_.size(), {-1, -1, -1});
    edges_.clear();
    edges_.reserve(triangles_.size() * 3 / 2 + vertices_.size());

    for (int t = 0; t < num_triangles(); ++t) {
        for (int i = 0; i < 3; ++i) {
            auto [a, b] = local_edge_vertices(triangles_[t], i);
            if (a > b) {
                std::swap(a, b);
            }
            int e = find_edge(a, b);
            if (e < 0) {
                e = num_edges();
                Edge edge;
                edge.endpoints = {a, b};
                edge.k_plus = t;
                edges_.push_back(edge);
                vertex_edges_[a].push_back(e);
                vertex_edges_[b].push_back(e);
            } else {
                Edge& edge = edges_[e];
                if (edge.k_minus >= 0 || edge.k_plus == t) {
                    throw GeometryError("edge (" + std::to_string(a) + "," + std::to_string(b) +
                                        ") is shared by more than two triangles");
                }
                edge.k_minus = t;
            }
            tri_edges_[t][i] = e;
        }
    }

    num_boundary_edges_ = 0;
    for (Edge& edge : edges_) {
        const Vec2& a = vertices_[edge.endpoints[0]];
        const Vec2& b = vertices_[edge.endpoints[1]];
        const Vec2 d = b - a;
        edge.length = d.norm();
        edge.midpoint = 0.5 * (a + b);
        edge.is_boundary = edge.k_minus < 0;
        num_boundary_edges_ += edge.is_boundary ? 1 : 0;
        Vec2 n(d.y(), -d.x());
        n /= edge.length;
        if (n.dot(edge.midpoint - centroid(edge.k_plus)) < 0.0) {
            n = -n;
        }
        edge.normal = n;
        edge.tangent = Vec2(-n.y(), n.x());
    }
}

int Mesh::find_edge(int a, int b) const
{
    if (a < 0 || b < 0 || a >= num_vertices() || b >= num_vertices()) {
        return -1;
    }
    if (a > b) {
        std::swap(a, b);
    }
    for (int e : vertex_edges_[a]) {
        if (edges_[e].endpoints[0] == a && edges_[e].endpoints[1] == b) {
            return e;
        }
    }
    return -1;
}

ElementGeometry Mesh::geometry(int t) const
{
    const auto& tri = triangles_[t];
    return ElementGeometry::from_vertices(vertices_[tri[0]], vertices_[tri[1]], vertices_[tri[2]], t);
}

Vec2 Mesh::centroid(int t) const
{
    const auto& tri = triangles_[t];
    return (vertices_[tri[0]] + vertices_[tri[1]] + vertices_[tri[2]]) / 3.0;
}

double Mesh::total_area() const
{
    double sum = 0.0;
    for (int t = 0; t < num_triangles(); ++t) {
        sum += geometry(t).area;
    }
    return sum;
}

double Mesh::min_angle() const
{
    double best = std::numbers::pi;
    for (const auto& tri : triangles_) {
        for (int i = 0; i < 3; ++i) {
            const Vec2 u = vertices_[tri[(i + 1) % 3]] - vertices_[tri[i]];
            const Vec2 v = vertices_[tri[(i + 2) % 3]] - vertices_[tri[i]];
            best = std::min(best, std::atan2(std::abs(cross(u, v)), u.dot(v)));
        }
    }
    return best;
}

int Mesh::euler_characteristic() const
{
    return num_vertices() - num_edges() + num_triangles();
}

bool Mesh::is_conforming() const
{
    // The constructor already rejects edges with more than two triangles.
    // A hanging node v on an edge (a,b) shows up as boundary edges (a,v) and
    // (a,b) that are collinear and overlapping.
    for (const Edge& e : edges_) {
        if (!e.is_boundary) {
            continue;
        }
        for (int end = 0; end < 2; ++end) {
            const int a = e.endpoints[end];
            const int b = e.endpoints[1 - end];
            const Vec2 ab = vertices_[b] - vertices_[a];
            for (int other : vertex_edges_[a]) {
                const Edge& f = edges_[other];
                if (&f == &e || !f.is_boundary) {
                    continue;
                }
                const int v = f.endpoints[0] == a ? f.endpoints[1] : f.endpoints[0];
                const Vec2 av = vertices_[v] - vertices_[a];
                const double tol = 1e-12 * ab.squaredNorm();
                if (std::abs(cross(ab, av)) <= tol && av.dot(ab) > 0.0 &&
                    av.squaredNorm() < ab.squaredNorm()) {
                    return false;
                }
            }
        }
    }
    return true;
}

Mesh Mesh::with_parent(std::vector<int> parent) const
{
    if (!parent.empty() && parent.size() != triangles_.size()) {
        throw ContractError("parent map size does not match triangle count");
    }
    Mesh copy = *this;
    copy.parent_ = std::move(parent);
    return copy;
}

namespace {

/// Shared generator for unions of unit-diagonal cells on a regular grid.
/// `keep(i, j)` selects cell (i, j) of an nx x ny grid.
Mesh build_cell_mesh(int nx, int ny, const Vec2& origin, const Vec2& cell,
                     const std::function<bool(int, int)>& keep)
{
    const auto point_index = [&](int i, int j) { return j * (nx + 1) + i; };
    std::vector<int> used((nx + 1) * (ny + 1), -1);
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            if (keep(i, j)) {
                used[point_index(i, j)] = used[point_index(i + 1, j)] =
                    used[point_index(i, j + 1)] = used[point_index(i + 1, j + 1)] = 0;
            }
        }
    }
    std::vector<Vec2> vertices;
    for (int j = 0; j <= ny; ++j) {
        for (int i = 0; i <= nx; ++i) {
            if (used[point_index(i, j)] == 0) {
                used[point_index(i, j)] = static_cast<int>(vertices.size());
                // Corners are computed from integer indices so shared points are bitwise equal.
                vertices.emplace_back(origin.x() + cell.x() * i, origin.y() + cell.y() * j);
            }
        }
    }
    std::vector<std::array<int, 3>> triangles;
    std::vector<int> ref_edge;
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            if (!keep(i, j)) {
                continue;
            }
            const int p00 = used[point_index(i, j)];
            const int p10 = used[point_index(i + 1, j)];
            const int p01 = used[point_index(i, j + 1)];
            const int p11 = used[point_index(i + 1, j + 1)];
            // Hypotenuse p00-p11 is opposite the right-angle vertex.
            triangles.push_back({p00, p10, p11});
            ref_edge.push_back(1);
            triangles.push_back({p00, p11, p01});
            ref_edge.push_back(2);
        }
    }
    return Mesh(std::move(vertices), std::move(triangles), std::move(ref_edge));
}

} // namespace

Mesh build_structured_square(int n, const Vec2& corner_min, const Vec2& corner_max)
{
    if (n < 1) {
        throw ConfigError("structured square needs n >= 1");
    }
    if (!(corner_max.x() > corner_min.x() && corner_max.y() > corner_min.y())) {
        throw ConfigError("corner_max must strictly dominate corner_min");
    }
    const Vec2 cell = (corner_max - corner_min) / n;
    return build_cell_mesh(n, n, corner_min, cell, [](int, int) { return true; });
}

Mesh build_lshape(int n)
{
    if (n < 1) {
        throw ConfigError("L-shape needs n >= 1");
    }
    const Vec2 cell(1.0 / n, 1.0 / n);
    return build_cell_mesh(2 * n, 2 * n, Vec2(0.0, 0.0), cell,
                           [n](int i, int j) { return i < n || j < n; });
}

namespace {

struct Bisector {
    const Mesh& mesh;
    const std::vector<char>& marked_edge;
    const std::vector<int>& edge_midpoint;

    std::vector<std::array<int, 3>> triangles;
    std::vector<int> ref_edge;
    std::vector<int> generation;
    std::vector<int> parent;

    // Triangle (v0, v1, v2) with refinement edge v1-v2; `edge_ids[i]` is the
    // input-mesh edge opposite v_i or -1 for edges created in this pass.
    void bisect(const std::array<int, 3>& v, const std::array<int, 3>& edge_ids, int gen, int origin)
    {
        const int e = edge_ids[0];
        if (e < 0 || !marked_edge[e]) {
            triangles.push_back(v);
            ref_edge.push_back(0);
            generation.push_back(gen);
            parent.push_back(origin);
            return;
        }
        const int m = edge_midpoint[e];
        bisect({m, v[0], v[1]}, {edge_ids[2], -1, -1}, gen + 1, origin);
        bisect({m, v[2], v[0]}, {edge_ids[1], -1, -1}, gen + 1, origin);
    }
};

} // namespace

Mesh refine(const Mesh& mesh, std::span<const int> marked)
{
    const int nt = mesh.num_triangles();
    for (int t : marked) {
        if (t < 0 || t >= nt) {
            throw ContractError("marked triangle " + std::to_string(t) + " out of range");
        }
    }

    std::vector<char> marked_edge(mesh.num_edges(), 0);
    std::vector<int> work;
    const auto mark_ref_edge = [&](int t) {
        const int e = mesh.triangle_edges(t)[mesh.refinement_edge(t)];
        if (!marked_edge[e]) {
            marked_edge[e] = 1;
            work.push_back(e);
        }
    };
    for (int t : marked) {
        mark_ref_edge(t);
    }
    // Closure: any triangle with a marked edge must also bisect its refinement edge.
    while (!work.empty()) {
        const int e = work.back();
        work.pop_back();
        const Edge& edge = mesh.edges()[e];
        mark_ref_edge(edge.k_plus);
        if (edge.k_minus >= 0) {
            mark_ref_edge(edge.k_minus);
        }
    }

    std::vector<Vec2> vertices = mesh.vertices();
    std::vector<int> edge_midpoint(mesh.num_edges(), -1);
    for (int e = 0; e < mesh.num_edges(); ++e) {
        if (marked_edge[e]) {
            edge_midpoint[e] = static_cast<int>(vertices.size());
            const auto& ends = mesh.edges()[e].endpoints;
            vertices.push_back(0.5 * (mesh.vertices()[ends[0]] + mesh.vertices()[ends[1]]));
        }
    }

    Bisector bisector{mesh, marked_edge, edge_midpoint, {}, {}, {}, {}};
    bisector.triangles.reserve(nt * 2);
    for (int t = 0; t < nt; ++t) {
        const auto& tri = mesh.triangles()[t];
        const auto& te = mesh.triangle_edges(t);
        const int r = mesh.refinement_edge(t);
        if (!marked_edge[te[r]]) {
            bisector.triangles.push_back(tri);
            bisector.ref_edge.push_back(r);
            bisector.generation.push_back(mesh.generation(t));
            bisector.parent.push_back(t);
            continue;
        }
        // Rotate so the refinement edge is opposite local vertex 0.
        const std::array<int, 3> v{tri[r], tri[(r + 1) % 3], tri[(r + 2) % 3]};
        const std::array<int, 3> ids{te[r], te[(r + 1) % 3], te[(r + 2) % 3]};
        bisector.bisect(v, ids, mesh.generation(t), t);
    }

    return Mesh(std::move(vertices), std::move(bisector.triangles), std::move(bisector.ref_edge),
                std::move(bisector.generation), std::move(bisector.parent));
}

Mesh refine_uniform(const Mesh& mesh)
{
    std::vector<int> all(mesh.num_triangles());
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        all[t] = t;
    }
    const Mesh once = refine(mesh, all);
    all.resize(once.num_triangles());
    for (int t = 0; t < once.num_triangles(); ++t) {
        all[t] = t;
    }
    const Mesh twice = refine(once, all);
    std::vector<int> parent(twice.num_triangles());
    for (int t = 0; t < twice.num_triangles(); ++t) {
        parent[t] = once.parent()[twice.parent()[t]];
    }
    return twice.with_parent(std::move(parent));
}

std::pair<int, int> element_patch(const Mesh& mesh, int edge)
{
    if (edge < 0 || edge >= mesh.num_edges()) {
        throw ContractError("edge index " + std::to_string(edge) + " out of range");
    }
    const Edge& e = mesh.edges()[edge];
    if (e.is_boundary) {
        throw PatchError("edge " + std::to_string(edge) + " lies on the boundary and has no patch");
    }
    return {e.k_plus, e.k_minus};
}

std::string format_mesh(const Mesh& mesh)
{
    std::string out;
    out += std::to_string(mesh.num_vertices()) + " " + std::to_string(mesh.num_triangles()) + "\n";
    for (const Vec2& p : mesh.vertices()) {
        out += format_double(p.x());
        out += ' ';
        out += format_double(p.y());
        out += '\n';
    }
    for (const auto& tri : mesh.triangles()) {
        out += std::to_string(tri[0]) + " " + std::to_string(tri[1]) + " " + std::to_string(tri[2]) + "\n";
    }
    return out;
}

Mesh parse_mesh(const std::string& text)
{
    std::istringstream in(text);
    int nv = 0;
    int nt = 0;
    if (!(in >> nv >> nt) || nv < 3 || nt < 1) {
        throw ConfigError("mesh file: bad header");
    }
    std::vector<Vec2> vertices(nv);
    for (auto& p : vertices) {
        if (!(in >> p.x() >> p.y())) {
            throw ConfigError("mesh file: truncated vertex list");
        }
    }
    std::vector<std::array<int, 3>> triangles(nt);
    std::vector<int> ref_edge(nt);
    for (int t = 0; t < nt; ++t) {
        auto& tri = triangles[t];
        if (!(in >> tri[0] >> tri[1] >> tri[2])) {
            throw ConfigError("mesh file: truncated triangle list");
        }
        for (int v : tri) {
            if (v < 0 || v >= nv) {
                throw ConfigError("mesh file: vertex index out of range");
            }
        }
        const Vec2& a = vertices[tri[0]];
        const Vec2& b = vertices[tri[1]];
        const Vec2& c = vertices[tri[2]];
        if (cross(b - a, c - a) < 0.0) {
            std::swap(tri[1], tri[2]);
        }
        // Longest edge becomes the refinement edge.
        double best = -1.0;
        for (int i = 0; i < 3; ++i) {
            const double len =
                (vertices[tri[(i + 1) % 3]] - vertices[tri[(i + 2) % 3]]).squaredNorm();
            if (len > best) {
                best = len;
                ref_edge[t] = i;
            }
        }
    }
    return Mesh(std::move(vertices), std::move(triangles), std::move(ref_edge));
}

void write_mesh(const Mesh& mesh, const std::filesystem::path& path)
{
    write_file_atomic(path, format_mesh(mesh));
}

Mesh read_mesh(const std::filesystem::path& path)
{
    return parse_mesh(read_file(path));
}

} // namespace crfem
