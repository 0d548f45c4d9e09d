#include "crfem/cr_space.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "crfem/errors.hpp"

namespace crfem {

CRSpace::CRSpace(std::shared_ptr<const Mesh> mesh) : mesh_(std::move(mesh))
{
    if (!mesh_) {
        throw ContractError("CRSpace needs a mesh");
    }
    free_index_.assign(mesh_->num_edges(), -1);
    for (int e = 0; e < mesh_->num_edges(); ++e) {
        if (mesh_->edges()[e].is_boundary) {
            boundary_dofs_.push_back(e);
        } else {
            free_index_[e] = static_cast<int>(interior_dofs_.size());
            interior_dofs_.push_back(e);
        }
    }
}

LocalMatrices element_matrices(const ElementGeometry& geom, const Vec2& b)
{
    if (!(geom.area > 0.0)) {
        throw GeometryError("element_matrices: non-positive area");
    }
    LocalMatrices out;
    std::array<Vec2, 3> grad_phi;
    for (int i = 0; i < 3; ++i) {
        grad_phi[i] = -2.0 * geom.grad_lambda[i];
    }
    const double third = geom.area / 3.0;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            out.diffusion(i, j) = geom.area * grad_phi[j].dot(grad_phi[i]);
            // (b . grad phi_j) is constant and every phi_i integrates to |K|/3.
            out.convection(i, j) = third * b.dot(grad_phi[j]);
        }
    }
    out.mass = third * Eigen::Matrix3d::Identity();
    return out;
}

CRSystem assemble(const CRSpace& space, const Vec2& b, AssemblyMode mode)
{
    const Mesh& mesh = space.mesh();
    const int nt = mesh.num_triangles();

    std::vector<LocalMatrices> local(nt);
    const auto compute_range = [&](int begin, int end) {
        for (int t = begin; t < end; ++t) {
            local[t] = element_matrices(mesh.geometry(t), b);
        }
    };
    if (mode == AssemblyMode::parallel && nt > 1) {
        const int workers = static_cast<int>(std::clamp(std::thread::hardware_concurrency(), 2u, 16u));
        const int chunk = (nt + workers - 1) / workers;
        std::vector<std::thread> threads;
        for (int w = 0; w < workers; ++w) {
            const int begin = w * chunk;
            const int end = std::min(nt, begin + chunk);
            if (begin < end) {
                threads.emplace_back(compute_range, begin, end);
            }
        }
        for (auto& th : threads) {
            th.join();
        }
    } else {
        compute_range(0, nt);
    }

    // Reduction runs in element order regardless of mode, so the summation
    // order inside setFromTriplets is identical.
    CRSystem sys;
    sys.b = b;
    sys.M = Vector::Zero(space.n_free());
    sys.mass_full = Vector::Zero(space.n_dof());
    std::vector<Eigen::Triplet<Complex>> triplets;
    triplets.reserve(static_cast<std::size_t>(nt) * 9);
    for (int t = 0; t < nt; ++t) {
        const auto& te = mesh.triangle_edges(t);
        const Eigen::Matrix3d a = local[t].a();
        for (int i = 0; i < 3; ++i) {
            sys.mass_full[te[i]] += local[t].mass(i, i);
            const int row = space.free_index(te[i]);
            if (row < 0) {
                continue;
            }
            sys.M[row] += local[t].mass(i, i);
            for (int j = 0; j < 3; ++j) {
                const int col = space.free_index(te[j]);
                if (col >= 0) {
                    triplets.emplace_back(row, col, Complex(a(i, j), 0.0));
                }
            }
        }
    }
    sys.A.resize(space.n_free(), space.n_free());
    sys.A.setFromTriplets(triplets.begin(), triplets.end());
    sys.A.makeCompressed();
    return sys;
}

SparseMatrix assemble_adjoint_action(const CRSystem& system)
{
    SparseMatrix adj = system.A.adjoint();
    adj.makeCompressed();
    return adj;
}

Complex BrokenField::value(const Mesh& mesh, int t, const Vec2& x) const
{
    const ElementGeometry g = mesh.geometry(t);
    const Vec2 offset = x - mesh.centroid(t);
    Complex u = 0.0;
    for (int i = 0; i < 3; ++i) {
        const double lambda = 1.0 / 3.0 + g.grad_lambda[i].dot(offset);
        u += local_values[t][i] * (1.0 - 2.0 * lambda);
    }
    return u;
}

std::array<Complex, 3> BrokenField::vertex_values(int t) const
{
    // phi_i(vertex j) = 1 - 2*delta_ij
    const auto& c = local_values[t];
    const Complex sum = c[0] + c[1] + c[2];
    return {sum - 2.0 * c[0], sum - 2.0 * c[1], sum - 2.0 * c[2]};
}

BrokenField make_broken_field(const CRSpace& space, const CVector& coeffs)
{
    if (coeffs.size() != space.n_free()) {
        throw ContractError("coefficient vector has length " + std::to_string(coeffs.size()) +
                            ", expected " + std::to_string(space.n_free()));
    }
    const Mesh& mesh = space.mesh();
    BrokenField field;
    field.local_values.resize(mesh.num_triangles());
    field.gradients.resize(mesh.num_triangles());
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const auto& te = mesh.triangle_edges(t);
        const ElementGeometry g = mesh.geometry(t);
        CVec2 grad = CVec2::Zero();
        for (int i = 0; i < 3; ++i) {
            const int k = space.free_index(te[i]);
            const Complex c = k >= 0 ? coeffs[k] : Complex(0.0);
            field.local_values[t][i] = c;
            grad += c * (-2.0 * g.grad_lambda[i]).cast<Complex>();
        }
        field.gradients[t] = grad;
    }
    return field;
}

std::vector<CVec2> broken_gradient(const CRSpace& space, const CVector& coeffs)
{
    return make_broken_field(space, coeffs).gradients;
}

CVector interpolate(const CRSpace& space, const std::function<Complex(const Vec2&)>& f)
{
    CVector c(space.n_free());
    for (int k = 0; k < space.n_free(); ++k) {
        c[k] = f(space.mesh().edges()[space.interior_dofs()[k]].midpoint);
    }
    return c;
}

CVector l2_normalize(const CRSystem& system, const CVector& coeffs)
{
    if (coeffs.size() != system.size()) {
        throw ContractError("l2_normalize: length mismatch");
    }
    const double norm_sq = (coeffs.array().abs2() * system.M.array()).sum();
    if (!(norm_sq > 0.0)) {
        throw ContractError("l2_normalize: zero vector");
    }
    CVector out = coeffs / std::sqrt(norm_sq);
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        if (out[i] != Complex(0.0)) {
            out *= std::conj(out[i]) / std::abs(out[i]);
            out[i] = std::abs(out[i]);
            break;
        }
    }
    return out;
}

const TriangleRule& degree4_rule()
{
    static const TriangleRule rule = [] {
        constexpr double a = 0.445948490915965;
        constexpr double wa = 0.223381589678011;
        constexpr double b = 0.091576213509771;
        constexpr double wb = 0.109951743655322;
        TriangleRule r;
        r.barycentric = {{{1 - 2 * a, a, a}, {a, 1 - 2 * a, a}, {a, a, 1 - 2 * a},
                          {1 - 2 * b, b, b}, {b, 1 - 2 * b, b}, {b, b, 1 - 2 * b}}};
        r.weights = {wa, wa, wa, wb, wb, wb};
        return r;
    }();
    return rule;
}

double broken_h1_error(const CRSpace& space, const CVector& coeffs, const ReferenceField& reference)
{
    const Mesh& mesh = space.mesh();
    const auto grads = broken_gradient(space, coeffs);
    const TriangleRule& rule = degree4_rule();

    struct Sample {
        CVec2 exact;
        double weight;
        int t;
    };
    std::vector<Sample> samples;
    samples.reserve(static_cast<std::size_t>(mesh.num_triangles()) * 6);
    Complex overlap = 0.0;
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const auto& tri = mesh.triangles()[t];
        const double area = mesh.geometry(t).area;
        for (int q = 0; q < 6; ++q) {
            const auto& bc = rule.barycentric[q];
            const Vec2 x = bc[0] * mesh.vertices()[tri[0]] + bc[1] * mesh.vertices()[tri[1]] +
                           bc[2] * mesh.vertices()[tri[2]];
            Sample s{reference.gradient(x), rule.weights[q] * area, t};
            overlap += s.weight * grads[t].dot(s.exact);  // sum of conj(grad_h) . exact
            samples.push_back(s);
        }
    }
    const Complex phase = std::abs(overlap) > 0.0 ? overlap / std::abs(overlap) : Complex(1.0);
    double err = 0.0;
    for (const Sample& s : samples) {
        err += s.weight * (s.exact - phase * grads[s.t]).squaredNorm();
    }
    return std::sqrt(err);
}

} // namespace crfem
