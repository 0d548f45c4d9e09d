#pragma once

#include <span>
#include <utility>
#include <vector>

#include "crfem/cr_space.hpp"
#include "crfem/eigensolver.hpp"
#include "crfem/mesh.hpp"

namespace crfem {

/// Per-element residual indicators for the primal and dual eigenproblems.
///
/// For every element K:
///   eta_sq[K] = residual + 1/2 sum_{interior E in dK} normal(E) + 1/2 sum_{E in dK} tangential(E)
/// and the same for the dual quantities.
struct IndicatorField {
    struct Components {
        double residual_sq = 0.0;
        double normal_sq = 0.0;      // already half-weighted
        double tangential_sq = 0.0;  // already half-weighted
        double total() const { return residual_sq + normal_sq + tangential_sq; }
    };

    std::vector<double> eta_sq;
    std::vector<double> eta_star_sq;
    std::vector<Components> primal;
    std::vector<Components> dual;
    Complex lambda_h{};
    Complex lambda_star_h{};

    int size() const { return static_cast<int>(eta_sq.size()); }
    double total() const;       // sum of eta_sq
    double star_total() const;  // sum of eta_star_sq
    /// eta_sq[K] + eta_star_sq[K], the quantity used for marking.
    std::vector<double> combined() const;
};

/// h_K * || lambda_h u_h + Lap_h u_h - b . grad_h u_h ||_{L2(K)}.
double element_residual(const ElementGeometry& geom, const std::array<Complex, 3>& midpoint_values,
                        const CVec2& gradient, Complex lambda_h, const Vec2& b);

/// h_K * || lambda*_h u*_h + Lap_h u*_h + b . grad_h u*_h ||_{L2(K)}.
double dual_element_residual(const ElementGeometry& geom,
                             const std::array<Complex, 3>& midpoint_values, const CVec2& gradient,
                             Complex lambda_star_h, const Vec2& b);

/// Per-edge h_E * ||[g] . nu_E||^2_{L2(E)}; zero on boundary edges.
/// Primal g = grad_h u_h, dual g = grad_h u*_h + b u*_h.
std::vector<double> normal_jump_terms(const Mesh& mesh, const BrokenField& field, const Vec2& b,
                                      EigenRole role);

/// Per-edge h_E * ||[g] . tau_E||^2_{L2(E)} over all edges, one-sided trace on the boundary.
std::vector<double> tangential_jump_terms(const Mesh& mesh, const BrokenField& field, const Vec2& b,
                                          EigenRole role);

IndicatorField local_indicators(const CRSpace& space, const CRSystem& system, const EigenPair& primal,
                                const EigenPair& dual);

/// Partial sums (eta^2, eta*^2) over the given elements.
std::pair<double, double> subset_total(const IndicatorField& field, std::span<const int> subset);

} // namespace crfem
