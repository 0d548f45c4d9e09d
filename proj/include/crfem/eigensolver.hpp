#pragma once

#include <optional>
#include <vector>

#include "crfem/cr_space.hpp"
#include "crfem/types.hpp"

namespace crfem {

enum class EigenRole { primal, dual };

struct EigenPair {
    Complex lambda{};
    CVector vector;  // v^H M v = 1
    EigenRole role = EigenRole::primal;
    /// ||A v - lambda M v|| / ||v|| (primal) or ||A^H v - lambda M v|| / ||v|| (dual).
    double residual_norm = 0.0;
    int k = 1;
};

struct SolverConfig {
    Complex shift{};
    int num_ritz = 0;  // Krylov dimension; 0 selects k + 5
    double tol = 1e-10;
    int max_iters = 300;  // restarts
    std::optional<CVector> initial_vector;
    /// Continuation mode: return the converged value nearest this primal-side
    /// eigenvalue instead of selecting by index.
    std::optional<Complex> target;
};

/// k-th eigenpair (1-based, ascending real part, ties by imaginary part) of
/// A v = lambda M v, via shift-invert Krylov-Schur iteration on
/// (A - shift*M)^{-1} M. Throws ShiftError if the shifted matrix is
/// singular and ConvergenceError when restarts run out.
EigenPair solve_primal(const CRSystem& system, int k, const SolverConfig& cfg);

/// Same on the conjugate-transposed pencil A^H u* = lambda* M u*; lambda* is
/// the complex conjugate of the matching primal eigenvalue and u* is a left
/// eigenvector of (A, M).
EigenPair solve_dual(const CRSystem& system, int k, const SolverConfig& cfg);

struct DenseEigen {
    Complex lambda{};
    CVector right;  // A x = lambda M x
    CVector left;   // y^H A = lambda y^H M
};

constexpr int kDenseReferenceLimit = 2000;

/// Full dense decomposition, ascending by real part. Throws ContractError
/// beyond kDenseReferenceLimit unknowns.
std::vector<DenseEigen> dense_reference(const CRSystem& system);

/// Eigenvalues only, same ordering and size limit as dense_reference.
std::vector<Complex> dense_spectrum(const CRSystem& system);

/// Interpolates an old CR field onto the midpoints of a refined mesh. The
/// new mesh must carry a parent map into the old one (or be the same mesh).
CVector warm_start(const CRSpace& old_space, const CVector& old_vector, const CRSpace& new_space);

/// ||A v - lambda M v|| / ||v|| for an arbitrary sparse operator.
double pencil_residual(const SparseMatrix& op, const Vector& mass, Complex lambda, const CVector& v);

/// Rotates the first entry of largest modulus onto the positive real axis.
CVector fix_phase(const CVector& v);

} // namespace crfem
