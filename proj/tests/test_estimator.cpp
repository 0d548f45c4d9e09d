#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <numeric>
#include <random>

#include "crfem/adaptive.hpp"
#include "crfem/cr_space.hpp"
#include "crfem/eigensolver.hpp"
#include "crfem/errors.hpp"
#include "crfem/estimator.hpp"

using namespace crfem;

namespace {

const ElementGeometry kUnitRight =
    ElementGeometry::from_vertices(Vec2(0, 0), Vec2(1, 0), Vec2(0, 1));

EigenPair pair_from(const CVector& v, Complex lambda, EigenRole role)
{
    EigenPair p;
    p.vector = v;
    p.lambda = lambda;
    p.role = role;
    return p;
}

CVector random_coeffs(int n, unsigned seed)
{
    std::mt19937 rng(seed);
    std::normal_distribution<double> g;
    CVector c(n);
    for (auto& x : c) {
        x = Complex(g(rng), g(rng));
    }
    return c;
}

int edge_between(const Mesh& mesh, const Vec2& a, const Vec2& b)
{
    for (int e = 0; e < mesh.num_edges(); ++e) {
        const auto& ends = mesh.edges()[e].endpoints;
        const Vec2& p = mesh.vertices()[ends[0]];
        const Vec2& q = mesh.vertices()[ends[1]];
        if (((p - a).norm() < 1e-14 && (q - b).norm() < 1e-14) ||
            ((p - b).norm() < 1e-14 && (q - a).norm() < 1e-14)) {
            return e;
        }
    }
    return -1;
}

/// Unit square as two triangles; u = x on the lower-right one, 0 on the other.
struct TwoTriangles {
    Mesh mesh = build_structured_square(1);
    BrokenField field;

    TwoTriangles()
    {
        field.gradients = {CVec2(Complex(1.0), Complex(0.0)), CVec2::Zero()};
        field.local_values.resize(2);
        for (int t = 0; t < 2; ++t) {
            for (int i = 0; i < 3; ++i) {
                const Vec2 mid = mesh.edges()[mesh.triangle_edges(t)[i]].midpoint;
                field.local_values[t][i] = t == 0 ? Complex(mid.x()) : Complex(0.0);
            }
        }
    }
};

} // namespace

TEST(ElementResidual, ConstantOnUnitTriangle)
{
    const std::array<Complex, 3> ones{1.0, 1.0, 1.0};
    EXPECT_NEAR(element_residual(kUnitRight, ones, CVec2::Zero(), 2.0, Vec2(1, 0)), 2.0, 1e-14);
    EXPECT_NEAR(dual_element_residual(kUnitRight, ones, CVec2::Zero(), 2.0, Vec2(1, 0)), 2.0, 1e-14);
}

TEST(ElementResidual, ZeroAndCollapsedCases)
{
    const std::array<Complex, 3> vals{Complex(0.3, 1.0), Complex(-2.0, 0.5), Complex(1.5, 0.0)};
    const CVec2 grad(Complex(1.0, 2.0), Complex(-0.5, 0.0));
    EXPECT_EQ(element_residual(kUnitRight, vals, grad, 0.0, Vec2(0, 0)), 0.0);

    // b = 0: h_K |lambda| ||u||, with ||u||^2 from the exact midpoint rule.
    const Complex lambda(3.0, -1.0);
    double norm_sq = 0.0;
    for (const Complex& v : vals) {
        norm_sq += std::norm(v) * kUnitRight.area / 3.0;
    }
    const double expected = kUnitRight.diameter * std::abs(lambda) * std::sqrt(norm_sq);
    EXPECT_NEAR(element_residual(kUnitRight, vals, grad, lambda, Vec2(0, 0)), expected, 1e-13);
    EXPECT_NEAR(dual_element_residual(kUnitRight, vals, grad, lambda, Vec2(0, 0)), expected, 1e-13);
}

TEST(ElementResidual, DualIsPrimalWithFlippedConvection)
{
    std::mt19937 rng(4);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
        const std::array<Complex, 3> vals{Complex(u(rng), u(rng)), Complex(u(rng), u(rng)), Complex(u(rng), u(rng))};
        const CVec2 grad(Complex(u(rng), u(rng)), Complex(u(rng), u(rng)));
        const Vec2 b(u(rng), u(rng));
        const Complex lambda(u(rng) + 10.0, u(rng));
        EXPECT_NEAR(dual_element_residual(kUnitRight, vals, grad, lambda, b),
                    element_residual(kUnitRight, vals, grad, lambda, -b), 1e-12);
    }
}

TEST(ElementResidual, ExplicitLaplacianTermChangesNothing)
{
    // Residual with a finite-difference Laplacian of the linear field added.
    const auto mesh = std::make_shared<const Mesh>(build_structured_square(3));
    const CRSpace space(mesh);
    const BrokenField field = make_broken_field(space, random_coeffs(space.n_free(), 11));
    const Vec2 b(1.0, 0.5);
    const Complex lambda(20.0, 0.1);
    const double h = 1e-3;
    for (int t = 0; t < mesh->num_triangles(); ++t) {
        const Vec2 c = mesh->centroid(t);
        const Complex lap = (field.value(*mesh, t, c + Vec2(h, 0)) + field.value(*mesh, t, c - Vec2(h, 0)) +
                             field.value(*mesh, t, c + Vec2(0, h)) + field.value(*mesh, t, c - Vec2(0, h)) -
                             4.0 * field.value(*mesh, t, c)) /
                            (h * h);
        EXPECT_LT(std::abs(lap), 1e-6);
        std::array<Complex, 3> with_lap = field.local_values[t];
        // lambda (u + lap / lambda) = lambda u + lap
        for (auto& v : with_lap) {
            v += lap / lambda;
        }
        const auto g = mesh->geometry(t);
        EXPECT_NEAR(element_residual(g, with_lap, field.gradients[t], lambda, b),
                    element_residual(g, field.local_values[t], field.gradients[t], lambda, b), 1e-9);
    }
}

TEST(JumpTerms, TwoTriangleDiagonal)
{
    const TwoTriangles tt;
    const int diag = edge_between(tt.mesh, Vec2(0, 0), Vec2(1, 1));
    ASSERT_GE(diag, 0);
    const auto normal = normal_jump_terms(tt.mesh, tt.field, Vec2(0, 0), EigenRole::primal);
    const auto tangential = tangential_jump_terms(tt.mesh, tt.field, Vec2(0, 0), EigenRole::primal);
    EXPECT_NEAR(normal[diag], 1.0, 1e-14);
    EXPECT_NEAR(tangential[diag], 1.0, 1e-14);
    for (int e = 0; e < tt.mesh.num_edges(); ++e) {
        if (tt.mesh.edges()[e].is_boundary) {
            EXPECT_EQ(normal[e], 0.0);
        }
    }
    // Boundary traces of grad u = (1,0): bottom edge is tangent to it, right edge normal to it.
    EXPECT_NEAR(tangential[edge_between(tt.mesh, Vec2(0, 0), Vec2(1, 0))], 1.0, 1e-14);
    EXPECT_NEAR(tangential[edge_between(tt.mesh, Vec2(1, 0), Vec2(1, 1))], 0.0, 1e-14);
    EXPECT_NEAR(tangential[edge_between(tt.mesh, Vec2(0, 1), Vec2(1, 1))], 0.0, 1e-14);
}

TEST(JumpTerms, ZeroField)
{
    const auto mesh = std::make_shared<const Mesh>(build_lshape(2));
    const CRSpace space(mesh);
    const BrokenField zero = make_broken_field(space, CVector::Zero(space.n_free()));
    for (EigenRole role : {EigenRole::primal, EigenRole::dual}) {
        for (double v : normal_jump_terms(*mesh, zero, Vec2(3, 1), role)) {
            EXPECT_EQ(v, 0.0);
        }
        for (double v : tangential_jump_terms(*mesh, zero, Vec2(3, 1), role)) {
            EXPECT_EQ(v, 0.0);
        }
    }
}

TEST(JumpTerms, AffineFieldPatchTest)
{
    // A CR field equal to an affine function on every element; the boundary
    // midpoints are set directly instead of through the Dirichlet space.
    const Mesh mesh = refine(build_structured_square(4), std::vector<int>{0, 9, 17, 30});
    BrokenField field;
    const auto affine = [](const Vec2& p) { return Complex(1.0 + p.x(), 0.5 * p.y()); };
    const CVec2 grad(Complex(1.0, 0.0), Complex(0.0, 0.5));
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        std::array<Complex, 3> vals;
        for (int i = 0; i < 3; ++i) {
            vals[i] = affine(mesh.edges()[mesh.triangle_edges(t)[i]].midpoint);
        }
        field.local_values.push_back(vals);
        field.gradients.push_back(grad);
    }
    const Vec2 b(2.0, -1.0);
    for (EigenRole role : {EigenRole::primal, EigenRole::dual}) {
        const auto normal = normal_jump_terms(mesh, field, b, role);
        const auto tangential = tangential_jump_terms(mesh, field, b, role);
        for (int e = 0; e < mesh.num_edges(); ++e) {
            if (!mesh.edges()[e].is_boundary) {
                EXPECT_EQ(normal[e], 0.0);
                EXPECT_LT(tangential[e], 1e-28);
            }
        }
    }
}

TEST(JumpTerms, BoundaryTraceOfLinearInterpolant)
{
    // u = x on every element, boundary midpoints included.
    const Mesh mesh = build_structured_square(1);
    BrokenField field;
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        std::array<Complex, 3> vals;
        for (int i = 0; i < 3; ++i) {
            vals[i] = mesh.edges()[mesh.triangle_edges(t)[i]].midpoint.x();
        }
        field.local_values.push_back(vals);
        field.gradients.push_back(CVec2(Complex(1.0), Complex(0.0)));
    }
    const auto tangential = tangential_jump_terms(mesh, field, Vec2(0, 0), EigenRole::primal);
    for (int e = 0; e < mesh.num_edges(); ++e) {
        const Edge& edge = mesh.edges()[e];
        if (edge.is_boundary) {
            const double t = edge.tangent.dot(Vec2(1, 0));
            EXPECT_NEAR(tangential[e], edge.length * t * t * edge.length, 1e-14);
        } else {
            EXPECT_LT(tangential[e], 1e-30);
        }
    }
}

namespace {

/// The same triangulation with triangle indices reversed and vertices cycled:
/// every interior edge swaps K+ and K-.
Mesh reversed(const Mesh& mesh)
{
    std::vector<std::array<int, 3>> tris(mesh.triangles().rbegin(), mesh.triangles().rend());
    std::vector<int> ref;
    for (int t = mesh.num_triangles() - 1; t >= 0; --t) {
        ref.push_back(mesh.refinement_edge(t));
    }
    for (std::size_t t = 0; t < tris.size(); ++t) {
        tris[t] = {tris[t][1], tris[t][2], tris[t][0]};
        ref[t] = (ref[t] + 2) % 3;
    }
    return Mesh(mesh.vertices(), tris, ref);
}

CVector transfer(const CRSpace& from, const CVector& c, const CRSpace& to)
{
    CVector out(to.n_free());
    for (int k = 0; k < to.n_free(); ++k) {
        const auto& ends = to.mesh().edges()[to.interior_dofs()[k]].endpoints;
        out[k] = c[from.free_index(from.mesh().find_edge(ends[0], ends[1]))];
    }
    return out;
}

} // namespace

TEST(LocalIndicators, OrientationInvariance)
{
    const auto mesh = std::make_shared<const Mesh>(refine(build_lshape(3), std::vector<int>{2, 5, 11, 20}));
    const auto flipped = std::make_shared<const Mesh>(reversed(*mesh));
    int swapped = 0;
    for (int e = 0; e < mesh->num_edges(); ++e) {
        const auto& ends = mesh->edges()[e].endpoints;
        const Edge& other = flipped->edges()[flipped->find_edge(ends[0], ends[1])];
        if (!other.is_boundary && other.normal.dot(mesh->edges()[e].normal) < 0.0) {
            ++swapped;
        }
    }
    ASSERT_GT(swapped, 0);

    const CRSpace a(mesh);
    const CRSpace b(flipped);
    const Vec2 conv(3.0, 1.0);
    const CRSystem sa = assemble(a, conv);
    const CRSystem sb = assemble(b, conv);
    const CVector u = random_coeffs(a.n_free(), 21);
    const CVector v = random_coeffs(a.n_free(), 22);
    const Complex lambda(25.0, 0.3);
    const IndicatorField fa = local_indicators(a, sa, pair_from(u, lambda, EigenRole::primal),
                                               pair_from(v, std::conj(lambda), EigenRole::dual));
    const IndicatorField fb = local_indicators(b, sb, pair_from(transfer(a, u, b), lambda, EigenRole::primal),
                                               pair_from(transfer(a, v, b), std::conj(lambda), EigenRole::dual));
    const int n = mesh->num_triangles();
    for (int t = 0; t < n; ++t) {
        EXPECT_NEAR(fa.eta_sq[t], fb.eta_sq[n - 1 - t], 1e-14 * fa.eta_sq[t]);
        EXPECT_NEAR(fa.eta_star_sq[t], fb.eta_star_sq[n - 1 - t], 1e-14 * fa.eta_star_sq[t]);
    }
}

TEST(LocalIndicators, ConsistencyAndHalfWeighting)
{
    const auto mesh = std::make_shared<const Mesh>(refine(build_structured_square(4), std::vector<int>{3, 4, 18}));
    const CRSpace space(mesh);
    const Vec2 conv(1.0, 0.0);
    const CRSystem sys = assemble(space, conv);
    const CVector u = random_coeffs(space.n_free(), 5);
    const CVector v = random_coeffs(space.n_free(), 6);
    const Complex lambda(19.0, 0.0);
    const IndicatorField f = local_indicators(space, sys, pair_from(u, lambda, EigenRole::primal),
                                              pair_from(v, lambda, EigenRole::dual));
    ASSERT_EQ(f.size(), mesh->num_triangles());
    EXPECT_EQ(f.lambda_h, lambda);

    const BrokenField fu = make_broken_field(space, u);
    const BrokenField fv = make_broken_field(space, v);
    const auto pn = normal_jump_terms(*mesh, fu, conv, EigenRole::primal);
    const auto pt = tangential_jump_terms(*mesh, fu, conv, EigenRole::primal);
    const auto dn = normal_jump_terms(*mesh, fv, conv, EigenRole::dual);
    const auto dt = tangential_jump_terms(*mesh, fv, conv, EigenRole::dual);

    double half_normal = 0.0;
    double half_tangential = 0.0;
    double dual_half = 0.0;
    for (int t = 0; t < f.size(); ++t) {
        EXPECT_GE(f.eta_sq[t], 0.0);
        EXPECT_GE(f.eta_star_sq[t], 0.0);
        EXPECT_EQ(f.eta_sq[t], f.primal[t].total());
        EXPECT_EQ(f.eta_star_sq[t], f.dual[t].total());
        const auto g = mesh->geometry(t);
        EXPECT_NEAR(f.primal[t].residual_sq,
                    std::pow(element_residual(g, fu.local_values[t], fu.gradients[t], lambda, conv), 2), 1e-12);
        half_normal += f.primal[t].normal_sq;
        half_tangential += f.primal[t].tangential_sq;
        dual_half += f.dual[t].normal_sq + f.dual[t].tangential_sq;
    }
    double edge_normal = 0.0;
    double edge_tangential = 0.0;
    double dual_edges = 0.0;
    double boundary_tangential = 0.0;
    for (int e = 0; e < mesh->num_edges(); ++e) {
        edge_normal += pn[e];
        edge_tangential += pt[e];
        dual_edges += dn[e] + dt[e];
        if (mesh->edges()[e].is_boundary) {
            boundary_tangential += pt[e] + dt[e];
        }
    }
    EXPECT_NEAR(half_normal, edge_normal, 1e-12 * edge_normal);
    // Boundary edges have a single element, so they count half.
    EXPECT_NEAR(half_tangential + dual_half, edge_tangential + dual_edges - 0.5 * boundary_tangential,
                1e-12 * (edge_tangential + dual_edges));

    const std::vector<double> comb = f.combined();
    double sum = 0.0;
    for (int t = 0; t < f.size(); ++t) {
        EXPECT_EQ(comb[t], f.eta_sq[t] + f.eta_star_sq[t]);
        sum += f.eta_sq[t];
    }
    EXPECT_NEAR(f.total(), sum, 1e-12 * sum);
}

TEST(LocalIndicators, ZeroFieldsAndMismatch)
{
    const auto mesh = std::make_shared<const Mesh>(build_structured_square(3));
    const CRSpace space(mesh);
    const CRSystem sys = assemble(space, Vec2(1, 0));
    const CVector zero = CVector::Zero(space.n_free());
    const IndicatorField f = local_indicators(space, sys, pair_from(zero, 5.0, EigenRole::primal),
                                              pair_from(zero, 5.0, EigenRole::dual));
    EXPECT_EQ(f.total(), 0.0);
    EXPECT_EQ(f.star_total(), 0.0);

    const CVector short_vec = CVector::Zero(space.n_free() - 1);
    EXPECT_THROW(local_indicators(space, sys, pair_from(short_vec, 5.0, EigenRole::primal),
                                  pair_from(zero, 5.0, EigenRole::dual)),
                 ContractError);
    const CRSpace other(std::make_shared<const Mesh>(build_structured_square(4)));
    EXPECT_THROW(local_indicators(other, sys, pair_from(zero, 5.0, EigenRole::primal),
                                  pair_from(zero, 5.0, EigenRole::dual)),
                 ContractError);
}

TEST(SubsetTotal, Additivity)
{
    const auto mesh = std::make_shared<const Mesh>(build_lshape(2));
    const CRSpace space(mesh);
    const CRSystem sys = assemble(space, Vec2(1, 2));
    const IndicatorField f =
        local_indicators(space, sys, pair_from(random_coeffs(space.n_free(), 1), 10.0, EigenRole::primal),
                         pair_from(random_coeffs(space.n_free(), 2), 10.0, EigenRole::dual));
    std::vector<int> all(f.size());
    std::iota(all.begin(), all.end(), 0);
    const auto [eta, star] = subset_total(f, all);
    EXPECT_NEAR(eta, f.total(), 1e-12 * eta);
    EXPECT_NEAR(star, f.star_total(), 1e-12 * star);

    const auto empty = subset_total(f, std::span<const int>());
    EXPECT_EQ(empty.first, 0.0);
    EXPECT_EQ(empty.second, 0.0);

    std::vector<int> even;
    std::vector<int> odd;
    for (int t : all) {
        (t % 2 == 0 ? even : odd).push_back(t);
    }
    const auto pe = subset_total(f, even);
    const auto po = subset_total(f, odd);
    EXPECT_NEAR(pe.first + po.first, eta, 1e-12 * eta);
    EXPECT_NEAR(pe.second + po.second, star, 1e-12 * star);
}

TEST(Estimator, UniformMeshSizeScaling)
{
    AdaptiveConfig cfg;
    cfg.initial_n = 4;
    const ConvergenceHistory h = uniform_study(cfg, 3);
    ASSERT_EQ(h.records.size(), 4u);
    // One uniform level halves h; eta ~ h means eta^2 drops by four per level.
    const auto& last = h.records.back();
    const auto& prev = h.records[h.records.size() - 2];
    const auto& first = h.records.front();
    const double slope = std::log2(std::sqrt(first.eta_sq_total / last.eta_sq_total)) / 3.0;
    EXPECT_GE(slope, 0.8);
    EXPECT_LE(slope, 1.2);
    EXPECT_LT(last.eta_sq_total, prev.eta_sq_total);
}
