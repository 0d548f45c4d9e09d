#include "crfem/eigensolver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <Eigen/Dense>
#include <Eigen/OrderingMethods>
#include <Eigen/SparseLU>

#include "crfem/errors.hpp"
#include "crfem/io.hpp"

namespace crfem {

namespace {

/// y = (op - shift*M)^{-1} M x with a sparse LU factorization.
class ShiftInvertOperator {
public:
    ShiftInvertOperator(const SparseMatrix& op, const Vector& mass, Complex shift) : mass_(mass)
    {
        SparseMatrix shifted = op;
        for (Eigen::Index i = 0; i < mass.size(); ++i) {
            shifted.coeffRef(i, i) -= shift * mass[i];
        }
        shifted.makeCompressed();
        lu_.analyzePattern(shifted);
        lu_.factorize(shifted);
        if (lu_.info() != Eigen::Success) {
            throw ShiftError("factorization of the shifted pencil failed at shift (" +
                             std::to_string(shift.real()) + ", " + std::to_string(shift.imag()) +
                             "): " + lu_.lastErrorMessage());
        }
    }

    CVector apply(const CVector& x) const
    {
        CVector y = lu_.solve((x.array() * mass_.array()).matrix());
        if (!y.allFinite()) {
            throw ShiftError("shift-invert solve produced non-finite values");
        }
        return y;
    }

private:
    Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu_;
    const Vector& mass_;
};

CVector random_vector(Eigen::Index n, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    CVector v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        v[i] = Complex(dist(rng), dist(rng));
    }
    return v;
}

/// Orthogonalizes w against the first `count` columns of V (two passes of
/// classical Gram-Schmidt); returns the projection coefficients.
CVector orthogonalize(const CMatrix& V, Eigen::Index count, CVector& w)
{
    CVector h = CVector::Zero(count);
    for (int pass = 0; pass < 2; ++pass) {
        const CVector c = V.leftCols(count).adjoint() * w;
        w -= V.leftCols(count) * c;
        h += c;
    }
    return h;
}

/// Sort key shared by primal and dual solves: the primal-side eigenvalue,
/// real part quantized so near-ties fall through to the imaginary part.
struct OrderKey {
    double re;
    double im;
};

std::vector<int> ascending_order(const std::vector<Complex>& lambdas)
{
    double scale = 0.0;
    for (const Complex& l : lambdas) {
        scale = std::max(scale, std::abs(l));
    }
    const double quantum = std::max(scale, 1.0) * 1e-10;
    std::vector<OrderKey> keys;
    keys.reserve(lambdas.size());
    for (const Complex& l : lambdas) {
        keys.push_back({std::round(l.real() / quantum), l.imag()});
    }
    std::vector<int> order(lambdas.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (keys[a].re != keys[b].re) {
            return keys[a].re < keys[b].re;
        }
        return keys[a].im < keys[b].im;
    });
    return order;
}

/// Swaps adjacent diagonal entries j, j+1 of the upper triangular T,
/// updating the unitary U so that U T U^H is unchanged.
void swap_schur(CMatrix& T, CMatrix& U, int j)
{
    const Eigen::Index n = T.rows();
    const Complex t11 = T(j, j);
    const Complex t22 = T(j + 1, j + 1);
    const Complex f = T(j, j + 1);
    const Complex g = t22 - t11;
    double c = 1.0;
    Complex sn = 0.0;
    const double r = std::hypot(std::abs(f), std::abs(g));
    if (std::abs(g) == 0.0) {
        return;
    }
    if (std::abs(f) == 0.0) {
        c = 0.0;
        sn = std::conj(g) / std::abs(g);
    } else {
        c = std::abs(f) / r;
        sn = (f / std::abs(f)) * std::conj(g) / r;
    }
    // x' = c x + s y, y' = c y - conj(s) x
    const auto rot = [](Complex& x, Complex& y, double cs, Complex s) {
        const Complex nx = cs * x + s * y;
        y = cs * y - std::conj(s) * x;
        x = nx;
    };
    for (Eigen::Index col = j + 2; col < n; ++col) {
        rot(T(j, col), T(j + 1, col), c, sn);
    }
    for (Eigen::Index row = 0; row < j; ++row) {
        rot(T(row, j), T(row, j + 1), c, std::conj(sn));
    }
    T(j, j) = t22;
    T(j + 1, j + 1) = t11;
    for (Eigen::Index row = 0; row < U.rows(); ++row) {
        rot(U(row, j), U(row, j + 1), c, std::conj(sn));
    }
}

/// Restarts without convergence before the subspace doubles; small subspaces
/// can hold on to spurious Ritz values of strongly non-normal pencils.
constexpr int kGrowEvery = 20;

EigenPair solve_pencil(const SparseMatrix& op, const Vector& mass, int k, const SolverConfig& cfg,
                       EigenRole role)
{
    const Eigen::Index n = op.rows();
    if (op.cols() != n || mass.size() != n || n == 0) {
        throw ContractError("eigensolver: inconsistent system dimensions");
    }
    if (k < 1 || k > n) {
        throw ContractError("eigensolver: index k=" + std::to_string(k) + " outside 1.." +
                            std::to_string(n));
    }
    const int requested_m = cfg.num_ritz > 0 ? cfg.num_ritz : k + 5;
    if (requested_m < k + 3) {
        throw ContractError("eigensolver: num_ritz must be at least k + 3");
    }
    if (!(cfg.tol > 0.0)) {
        throw ContractError("eigensolver: tol must be positive");
    }

    int m = static_cast<int>(std::min<Eigen::Index>(requested_m, n));
    const auto wanted_count = [&] { return m == n ? m : std::min(k + 2, m - 1); };
    int nev = wanted_count();
    // Ritz tolerance on the transformed operator; the pencil residual is
    // checked separately before accepting a pair.
    const double ritz_tol = cfg.tol * 1e-2;

    const Complex shift = role == EigenRole::dual ? std::conj(cfg.shift) : cfg.shift;
    const ShiftInvertOperator T(op, mass, shift);

    std::mt19937_64 rng(0x5eedULL + static_cast<unsigned>(k));
    CVector start = random_vector(n, rng);
    if (cfg.initial_vector && cfg.initial_vector->size() == n && cfg.initial_vector->norm() > 0.0) {
        start = *cfg.initial_vector / cfg.initial_vector->norm() + 1e-3 * start / start.norm();
    }

    CMatrix V = CMatrix::Zero(n, m + 1);
    CMatrix H = CMatrix::Zero(m + 1, m);
    V.col(0) = start / start.norm();
    int p = 0;
    double best_residual = std::numeric_limits<double>::infinity();

    for (int restart = 0; restart <= cfg.max_iters; ++restart) {
        for (int j = p; j < m; ++j) {
            CVector w = T.apply(V.col(j));
            const double scale = w.norm();
            H.col(j).head(j + 1) = orthogonalize(V, j + 1, w);
            const double beta = w.norm();
            if (j + 1 == n || beta <= 1e-13 * scale) {
                // Invariant subspace: continue with a fresh direction, no coupling.
                H(j + 1, j) = 0.0;
                if (j + 1 < n) {
                    CVector r = random_vector(n, rng);
                    orthogonalize(V, j + 1, r);
                    V.col(j + 1) = r / r.norm();
                } else {
                    V.col(j + 1).setZero();
                }
            } else {
                H(j + 1, j) = beta;
                V.col(j + 1) = w / beta;
            }
        }

        const CMatrix Hm = H.topLeftCorner(m, m);
        Eigen::ComplexEigenSolver<CMatrix> es(Hm);
        if (es.info() != Eigen::Success) {
            throw ConvergenceError("eigensolver: projected eigenproblem failed", best_residual);
        }
        const CVector theta = es.eigenvalues();
        const CMatrix& Y = es.eigenvectors();
        const Complex beta = H(m, m - 1);

        std::vector<int> by_magnitude(m);
        std::iota(by_magnitude.begin(), by_magnitude.end(), 0);
        std::stable_sort(by_magnitude.begin(), by_magnitude.end(),
                         [&](int a, int b) { return std::abs(theta[a]) > std::abs(theta[b]); });
        // Never split a cluster of equal |theta| (conjugate pairs under a real shift).
        int n_wanted = nev;
        while (n_wanted < m - 1 &&
               std::abs(theta[by_magnitude[n_wanted]]) >= (1.0 - 1e-6) * std::abs(theta[by_magnitude[n_wanted - 1]])) {
            ++n_wanted;
        }
        const std::vector<int> wanted(by_magnitude.begin(), by_magnitude.begin() + n_wanted);

        bool converged = true;
        for (int i : wanted) {
            const double ritz_residual = std::abs(beta * Y(m - 1, i)) / Y.col(i).norm();
            if (ritz_residual > ritz_tol * std::abs(theta[i])) {
                converged = false;
            }
        }

        std::vector<Complex> lambdas;
        for (int i : wanted) {
            const Complex mu = shift + 1.0 / theta[i];
            lambdas.push_back(role == EigenRole::dual ? std::conj(mu) : mu);
        }
        int pick = 0;
        if (cfg.target) {
            std::size_t nearest = 0;
            for (std::size_t c = 1; c < lambdas.size(); ++c) {
                if (std::abs(lambdas[c] - *cfg.target) < std::abs(lambdas[nearest] - *cfg.target)) {
                    nearest = c;
                }
            }
            pick = wanted[nearest];
        } else {
            const auto order = ascending_order(lambdas);
            pick = wanted[order[std::min<std::size_t>(k - 1, order.size() - 1)]];
        }

        EigenPair out;
        out.lambda = shift + 1.0 / theta[pick];
        out.role = role;
        out.k = k;
        CVector x = V.leftCols(m) * Y.col(pick);
        x /= std::sqrt((x.array().abs2() * mass.array()).sum());
        out.vector = fix_phase(x);
        out.residual_norm = pencil_residual(op, mass, out.lambda, out.vector);
        best_residual = std::min(best_residual, out.residual_norm);
        if (converged && out.residual_norm <= cfg.tol) {
            return out;
        }

        // Krylov-Schur restart: reorder the Schur form so the p largest |theta| lead.
        p = std::min(n_wanted, m - 1);
        Eigen::ComplexSchur<CMatrix> schur(Hm);
        CMatrix Tm = schur.matrixT();
        CMatrix U = schur.matrixU();
        std::vector<int> diag_order(m);
        std::iota(diag_order.begin(), diag_order.end(), 0);
        std::stable_sort(diag_order.begin(), diag_order.end(),
                         [&](int a, int b) { return std::abs(Tm(a, a)) > std::abs(Tm(b, b)); });
        std::vector<char> keep(m, 0);
        for (int c = 0; c < p; ++c) {
            keep[diag_order[c]] = 1;
        }
        int front = 0;
        for (int pos = 0; pos < m; ++pos) {
            if (!keep[pos]) {
                continue;
            }
            for (int j = pos - 1; j >= front; --j) {
                swap_schur(Tm, U, j);
                std::swap(keep[j], keep[j + 1]);
            }
            ++front;
        }
        const CMatrix Q = U.leftCols(p);
        const CMatrix S = Tm.topLeftCorner(p, p);
        const CVector last = V.col(m);
        V.leftCols(p) = V.leftCols(m) * Q;
        V.col(p) = last;
        H.setZero();
        H.topLeftCorner(p, p) = S;
        H.row(p).head(p) = beta * Q.row(m - 1);
        if (std::abs(beta) == 0.0) {
            CVector r = random_vector(n, rng);
            orthogonalize(V, p, r);
            V.col(p) = r / r.norm();
        }

        if ((restart + 1) % kGrowEvery == 0 && m < n) {
            const int grown = static_cast<int>(std::min<Eigen::Index>(2 * m, n));
            CMatrix V2 = CMatrix::Zero(n, grown + 1);
            V2.leftCols(p + 1) = V.leftCols(p + 1);
            CMatrix H2 = CMatrix::Zero(grown + 1, grown);
            H2.topLeftCorner(p + 1, p) = H.topLeftCorner(p + 1, p);
            V = std::move(V2);
            H = std::move(H2);
            m = grown;
            nev = wanted_count();
        }
    }
    throw ConvergenceError("eigensolver: no convergence within " + std::to_string(cfg.max_iters) +
                               " restarts (best residual " + format_double(best_residual) + ")",
                           best_residual);
}

} // namespace

double pencil_residual(const SparseMatrix& op, const Vector& mass, Complex lambda, const CVector& v)
{
    const CVector r = op * v - lambda * (v.array() * mass.array()).matrix();
    return r.norm() / v.norm();
}

CVector fix_phase(const CVector& v)
{
    Eigen::Index best = 0;
    double best_abs = -1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::abs(v[i]) > best_abs) {
            best_abs = std::abs(v[i]);
            best = i;
        }
    }
    if (!(best_abs > 0.0)) {
        return v;
    }
    CVector out = v * (std::conj(v[best]) / best_abs);
    out[best] = best_abs;
    return out;
}

EigenPair solve_primal(const CRSystem& system, int k, const SolverConfig& cfg)
{
    return solve_pencil(system.A, system.M, k, cfg, EigenRole::primal);
}

EigenPair solve_dual(const CRSystem& system, int k, const SolverConfig& cfg)
{
    return solve_pencil(assemble_adjoint_action(system), system.M, k, cfg, EigenRole::dual);
}

namespace {

void check_dense_size(int n)
{
    if (n > kDenseReferenceLimit) {
        throw ContractError("dense_reference: " + std::to_string(n) + " unknowns exceed the limit of " +
                            std::to_string(kDenseReferenceLimit));
    }
}

bool is_real(const SparseMatrix& A)
{
    for (Eigen::Index i = 0; i < A.nonZeros(); ++i) {
        if (A.valuePtr()[i].imag() != 0.0) {
            return false;
        }
    }
    return true;
}

struct DenseDecomposition {
    CVector values;
    CMatrix vectors;
};

/// Eigen-decomposition of M^{-1} op; the real solver is used when op is real.
DenseDecomposition decompose(const SparseMatrix& op, const Vector& mass, bool vectors)
{
    const Vector inv_mass = mass.cwiseInverse();
    DenseDecomposition out;
    if (is_real(op)) {
        const Eigen::MatrixXd dense = inv_mass.asDiagonal() * Eigen::MatrixXd(CMatrix(op).real());
        Eigen::EigenSolver<Eigen::MatrixXd> es(dense, vectors);
        if (es.info() != Eigen::Success) {
            throw ConvergenceError("dense_reference: dense eigen-decomposition failed", 0.0);
        }
        out.values = es.eigenvalues();
        if (vectors) {
            out.vectors = es.eigenvectors();
        }
    } else {
        const CMatrix dense = inv_mass.cast<Complex>().asDiagonal() * CMatrix(op);
        Eigen::ComplexEigenSolver<CMatrix> es(dense, vectors);
        if (es.info() != Eigen::Success) {
            throw ConvergenceError("dense_reference: dense eigen-decomposition failed", 0.0);
        }
        out.values = es.eigenvalues();
        if (vectors) {
            out.vectors = es.eigenvectors();
        }
    }
    return out;
}

} // namespace

std::vector<DenseEigen> dense_reference(const CRSystem& system)
{
    const int n = system.size();
    check_dense_size(n);
    if (n == 0) {
        return {};
    }
    const DenseDecomposition right = decompose(system.A, system.M, true);
    const DenseDecomposition left = decompose(assemble_adjoint_action(system), system.M, true);

    const auto normalize = [&](CVector v) {
        v /= std::sqrt((v.array().abs2() * system.M.array()).sum());
        return fix_phase(v);
    };

    std::vector<Complex> lambdas(right.values.data(), right.values.data() + n);
    std::vector<char> used(n, 0);
    std::vector<DenseEigen> out;
    out.reserve(n);
    for (int i : ascending_order(lambdas)) {
        DenseEigen d;
        d.lambda = lambdas[i];
        d.right = normalize(right.vectors.col(i));
        // Left eigenvectors satisfy A^H y = conj(lambda) M y.
        int match = -1;
        double best = std::numeric_limits<double>::infinity();
        for (int j = 0; j < n; ++j) {
            const double dist = std::abs(std::conj(left.values[j]) - d.lambda);
            if (!used[j] && dist < best) {
                best = dist;
                match = j;
            }
        }
        used[match] = 1;
        d.left = normalize(left.vectors.col(match));
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<Complex> dense_spectrum(const CRSystem& system)
{
    const int n = system.size();
    check_dense_size(n);
    if (n == 0) {
        return {};
    }
    const DenseDecomposition d = decompose(system.A, system.M, false);
    std::vector<Complex> lambdas(d.values.data(), d.values.data() + n);
    std::vector<Complex> out;
    out.reserve(n);
    for (int i : ascending_order(lambdas)) {
        out.push_back(lambdas[i]);
    }
    return out;
}

CVector warm_start(const CRSpace& old_space, const CVector& old_vector, const CRSpace& new_space)
{
    const Mesh& old_mesh = old_space.mesh();
    const Mesh& new_mesh = new_space.mesh();
    if (old_vector.size() != old_space.n_free()) {
        throw ContractError("warm_start: old vector length mismatch");
    }
    const bool same_mesh = &old_mesh == &new_mesh ||
                           (old_mesh.vertices() == new_mesh.vertices() &&
                            old_mesh.triangles() == new_mesh.triangles());
    if (same_mesh) {
        return old_vector;
    }
    const auto& parent = new_mesh.parent();
    if (static_cast<int>(parent.size()) != new_mesh.num_triangles()) {
        return CVector::Ones(new_space.n_free());
    }
    for (int p : parent) {
        if (p < 0 || p >= old_mesh.num_triangles()) {
            return CVector::Ones(new_space.n_free());
        }
    }

    const BrokenField field = make_broken_field(old_space, old_vector);
    CVector out(new_space.n_free());
    for (int k = 0; k < new_space.n_free(); ++k) {
        const Edge& e = new_mesh.edges()[new_space.interior_dofs()[k]];
        const int old_edge = old_mesh.find_edge(e.endpoints[0], e.endpoints[1]);
        if (old_edge >= 0) {
            const int idx = old_space.free_index(old_edge);
            out[k] = idx >= 0 ? old_vector[idx] : Complex(0.0);
            continue;
        }
        const int kp = parent[e.k_plus];
        const int km = parent[e.k_minus];
        if (kp == km) {
            out[k] = field.value(old_mesh, kp, e.midpoint);
        } else {
            // The midpoint lies on an old inter-element edge.
            out[k] = 0.5 * (field.value(old_mesh, kp, e.midpoint) + field.value(old_mesh, km, e.midpoint));
        }
    }
    return out;
}

} // namespace crfem
