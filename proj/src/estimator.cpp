#include "crfem/estimator.hpp"

#include <cmath>
#include <numeric>

#include "crfem/errors.hpp"

namespace crfem {

namespace {

/// Integrand lambda*u + sign*(b . grad u) is affine on K; the edge-midpoint
/// rule integrates its squared modulus exactly. The broken Laplacian of a
/// P1 field vanishes identically and contributes nothing.
double residual_norm(const ElementGeometry& geom, const std::array<Complex, 3>& values,
                     const CVec2& gradient, Complex lambda, const Vec2& b, double sign)
{
    const Complex convection = sign * (b.cast<Complex>().transpose() * gradient)(0);
    double integral = 0.0;
    for (const Complex& v : values) {
        integral += std::norm(lambda * v + convection);
    }
    integral *= geom.area / 3.0;
    return geom.diameter * std::sqrt(integral);
}

/// Two-point Gauss nodes on [0, 1].
constexpr double kGaussLo = 0.5 - 0.28867513459481288;  // 1/(2*sqrt(3))
constexpr double kGaussHi = 0.5 + 0.28867513459481288;

/// Flux g of the chosen role from element t at the two Gauss points of `edge`,
/// ordered from endpoints[0] to endpoints[1].
std::array<CVec2, 2> edge_flux(const Mesh& mesh, const BrokenField& field, const Vec2& b, EigenRole role,
                               int t, const Edge& edge)
{
    const CVec2& grad = field.gradients[t];
    if (role == EigenRole::primal) {
        return {grad, grad};
    }
    const auto& tri = mesh.triangles()[t];
    const auto vertex = field.vertex_values(t);
    Complex ua{};
    Complex ub{};
    for (int i = 0; i < 3; ++i) {
        if (tri[i] == edge.endpoints[0]) {
            ua = vertex[i];
        } else if (tri[i] == edge.endpoints[1]) {
            ub = vertex[i];
        }
    }
    const CVec2 bc = b.cast<Complex>();
    const Complex u_lo = (1.0 - kGaussLo) * ua + kGaussLo * ub;
    const Complex u_hi = (1.0 - kGaussHi) * ua + kGaussHi * ub;
    return {grad + bc * u_lo, grad + bc * u_hi};
}

std::vector<double> jump_terms(const Mesh& mesh, const BrokenField& field, const Vec2& b, EigenRole role,
                               bool tangential)
{
    if (static_cast<int>(field.gradients.size()) != mesh.num_triangles() ||
        static_cast<int>(field.local_values.size()) != mesh.num_triangles()) {
        throw ContractError("broken field does not match the mesh");
    }
    std::vector<double> out(mesh.num_edges(), 0.0);
    for (int e = 0; e < mesh.num_edges(); ++e) {
        const Edge& edge = mesh.edges()[e];
        if (edge.is_boundary && !tangential) {
            continue;
        }
        const Vec2& dir = tangential ? edge.tangent : edge.normal;
        const CVec2 d = dir.cast<Complex>();
        auto jump = edge_flux(mesh, field, b, role, edge.k_plus, edge);
        if (!edge.is_boundary) {
            const auto minus = edge_flux(mesh, field, b, role, edge.k_minus, edge);
            jump[0] -= minus[0];
            jump[1] -= minus[1];
        }
        // jump . dir, no conjugation: dir is real.
        const Complex j0 = (d.transpose() * jump[0])(0);
        const Complex j1 = (d.transpose() * jump[1])(0);
        const double integral = 0.5 * edge.length * (std::norm(j0) + std::norm(j1));
        out[e] = edge.length * integral;
    }
    return out;
}

} // namespace

double IndicatorField::total() const
{
    return std::accumulate(eta_sq.begin(), eta_sq.end(), 0.0);
}

double IndicatorField::star_total() const
{
    return std::accumulate(eta_star_sq.begin(), eta_star_sq.end(), 0.0);
}

std::vector<double> IndicatorField::combined() const
{
    std::vector<double> out(eta_sq.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = eta_sq[i] + eta_star_sq[i];
    }
    return out;
}

double element_residual(const ElementGeometry& geom, const std::array<Complex, 3>& midpoint_values,
                        const CVec2& gradient, Complex lambda_h, const Vec2& b)
{
    return residual_norm(geom, midpoint_values, gradient, lambda_h, b, -1.0);
}

double dual_element_residual(const ElementGeometry& geom,
                             const std::array<Complex, 3>& midpoint_values, const CVec2& gradient,
                             Complex lambda_star_h, const Vec2& b)
{
    return residual_norm(geom, midpoint_values, gradient, lambda_star_h, b, +1.0);
}

std::vector<double> normal_jump_terms(const Mesh& mesh, const BrokenField& field, const Vec2& b,
                                      EigenRole role)
{
    return jump_terms(mesh, field, b, role, false);
}

std::vector<double> tangential_jump_terms(const Mesh& mesh, const BrokenField& field, const Vec2& b,
                                          EigenRole role)
{
    return jump_terms(mesh, field, b, role, true);
}

IndicatorField local_indicators(const CRSpace& space, const CRSystem& system, const EigenPair& primal,
                                const EigenPair& dual)
{
    if (system.size() != space.n_free() || primal.vector.size() != space.n_free() ||
        dual.vector.size() != space.n_free()) {
        throw ContractError("local_indicators: eigenpairs do not belong to this space");
    }
    const Mesh& mesh = space.mesh();
    const Vec2& b = system.b;
    const BrokenField u = make_broken_field(space, primal.vector);
    const BrokenField u_star = make_broken_field(space, dual.vector);

    const auto normal = normal_jump_terms(mesh, u, b, EigenRole::primal);
    const auto tangential = tangential_jump_terms(mesh, u, b, EigenRole::primal);
    const auto normal_star = normal_jump_terms(mesh, u_star, b, EigenRole::dual);
    const auto tangential_star = tangential_jump_terms(mesh, u_star, b, EigenRole::dual);

    IndicatorField out;
    out.lambda_h = primal.lambda;
    out.lambda_star_h = dual.lambda;
    const int nt = mesh.num_triangles();
    out.eta_sq.resize(nt);
    out.eta_star_sq.resize(nt);
    out.primal.resize(nt);
    out.dual.resize(nt);
    for (int t = 0; t < nt; ++t) {
        const ElementGeometry g = mesh.geometry(t);
        auto& cp = out.primal[t];
        auto& cd = out.dual[t];
        cp.residual_sq = std::pow(element_residual(g, u.local_values[t], u.gradients[t], primal.lambda, b), 2);
        cd.residual_sq = std::pow(
            dual_element_residual(g, u_star.local_values[t], u_star.gradients[t], dual.lambda, b), 2);
        for (int e : mesh.triangle_edges(t)) {
            if (!mesh.edges()[e].is_boundary) {
                cp.normal_sq += 0.5 * normal[e];
                cd.normal_sq += 0.5 * normal_star[e];
            }
            cp.tangential_sq += 0.5 * tangential[e];
            cd.tangential_sq += 0.5 * tangential_star[e];
        }
        out.eta_sq[t] = cp.total();
        out.eta_star_sq[t] = cd.total();
    }
    return out;
}

std::pair<double, double> subset_total(const IndicatorField& field, std::span<const int> subset)
{
    double eta = 0.0;
    double eta_star = 0.0;
    for (int t : subset) {
        if (t < 0 || t >= field.size()) {
            throw ContractError("subset_total: element " + std::to_string(t) + " out of range");
        }
        eta += field.eta_sq[t];
        eta_star += field.eta_star_sq[t];
    }
    return {eta, eta_star};
}

} // namespace crfem
