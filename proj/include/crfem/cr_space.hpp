#pragma once

#include <array>
#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "crfem/mesh.hpp"
#include "crfem/types.hpp"

namespace crfem {

/// Crouzeix-Raviart P1 space: one degree of freedom per edge midpoint, with
/// homogeneous Dirichlet conditions removing the boundary edges.
///
/// Local basis on a triangle: phi_i = 1 - 2*lambda_i, which is 1 at the
/// midpoint of local edge i and 0 at the other two midpoints.
class CRSpace {
public:
    explicit CRSpace(std::shared_ptr<const Mesh> mesh);

    const Mesh& mesh() const { return *mesh_; }
    std::shared_ptr<const Mesh> mesh_ptr() const { return mesh_; }

    int n_dof() const { return mesh_->num_edges(); }
    int n_free() const { return static_cast<int>(interior_dofs_.size()); }

    /// Position of an edge among the free unknowns, -1 on the boundary.
    int free_index(int edge) const { return free_index_[edge]; }
    const std::vector<int>& interior_dofs() const { return interior_dofs_; }
    const std::vector<int>& boundary_dofs() const { return boundary_dofs_; }

private:
    std::shared_ptr<const Mesh> mesh_;
    std::vector<int> free_index_;
    std::vector<int> interior_dofs_;
    std::vector<int> boundary_dofs_;
};

struct LocalMatrices {
    Eigen::Matrix3d diffusion;
    Eigen::Matrix3d convection;
    Eigen::Matrix3d mass;

    Eigen::Matrix3d a() const { return diffusion + convection; }
};

/// Exact element integrals; entry (i, j) couples test function i with trial function j.
LocalMatrices element_matrices(const ElementGeometry& geom, const Vec2& b);

/// Sparse pencil (A, M) over the free degrees of freedom.
struct CRSystem {
    SparseMatrix A;
    Vector M;          // diagonal of the mass matrix, free dofs only
    Vector mass_full;  // diagonal of the mass matrix before boundary elimination
    Vec2 b = Vec2::Zero();

    int size() const { return static_cast<int>(M.size()); }
};

enum class AssemblyMode { sequential, parallel };

CRSystem assemble(const CRSpace& space, const Vec2& b,
                  AssemblyMode mode = AssemblyMode::sequential);

/// A^H: the dual problem A^H u* = lambda* M u* shares M with the primal pencil.
SparseMatrix assemble_adjoint_action(const CRSystem& system);

/// Elementwise view of a CR function: the three midpoint values and the
/// constant gradient on every triangle. Boundary midpoints carry 0.
struct BrokenField {
    std::vector<std::array<Complex, 3>> local_values;
    std::vector<CVec2> gradients;

    Complex value(const Mesh& mesh, int t, const Vec2& x) const;
    /// Values at the triangle's vertices, in local vertex order.
    std::array<Complex, 3> vertex_values(int t) const;
};

BrokenField make_broken_field(const CRSpace& space, const CVector& coeffs);

std::vector<CVec2> broken_gradient(const CRSpace& space, const CVector& coeffs);

/// Midpoint values of `f` on the interior edges.
CVector interpolate(const CRSpace& space, const std::function<Complex(const Vec2&)>& f);

/// Returns c with c^H M c = 1 and the first nonzero entry real positive.
CVector l2_normalize(const CRSystem& system, const CVector& coeffs);

struct ReferenceField {
    std::function<Complex(const Vec2&)> value;
    std::function<CVec2(const Vec2&)> gradient;
};

/// || grad u - grad_h u_h ||_{L2}, after rotating u_h by the unit phase that
/// best aligns its broken gradient with the reference gradient.
double broken_h1_error(const CRSpace& space, const CVector& coeffs, const ReferenceField& reference);

/// Six-point rule on the reference triangle, exact for degree 4.
struct TriangleRule {
    std::array<std::array<double, 3>, 6> barycentric;
    std::array<double, 6> weights;  // sum to 1; multiply by |K|
};
const TriangleRule& degree4_rule();

} // namespace crfem
