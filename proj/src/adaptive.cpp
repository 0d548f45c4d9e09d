#include "crfem/adaptive.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <memory>
#include <numbers>
#include <numeric>

#include "crfem/cr_space.hpp"
#include "crfem/eigensolver.hpp"
#include "crfem/errors.hpp"

namespace crfem {

std::string to_string(Termination reason)
{
    switch (reason) {
    case Termination::max_dof:
        return "max_dof";
    case Termination::max_iter:
        return "max_iter";
    case Termination::solver_failure:
        return "solver_failure";
    }
    return "unknown";
}

void AdaptiveConfig::validate() const
{
    if (!(theta > 0.0 && theta < 1.0)) {
        throw ConfigError("theta must lie in (0, 1)");
    }
    if (k < 1) {
        throw ConfigError("k must be at least 1");
    }
    if (initial_n < 1) {
        throw ConfigError("initial_n must be at least 1");
    }
    if (max_iter < 0) {
        throw ConfigError("max_iter must be non-negative");
    }
    if (!(eig_tol > 0.0)) {
        throw ConfigError("eigen tolerance must be positive");
    }
    if (domain == Domain::custom && mesh_file.empty()) {
        throw ConfigError("custom domain needs a mesh file");
    }
}

std::vector<int> mark(std::span<const double> indicators, double theta)
{
    if (indicators.empty()) {
        throw ContractError("mark: empty indicator field");
    }
    if (!(theta > 0.0 && theta < 1.0)) {
        throw ContractError("mark: theta must lie in (0, 1)");
    }
    std::vector<int> order(indicators.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return indicators[a] > indicators[b]; });
    // Total accumulated in the same order as the prefix, so marking every
    // element always satisfies the bound.
    double total = 0.0;
    for (int i : order) {
        total += indicators[i];
    }
    if (!(total > 0.0)) {
        return {0};
    }
    const double target = theta * total;
    std::vector<int> marked;
    double sum = 0.0;
    for (int i : order) {
        marked.push_back(i);
        sum += indicators[i];
        if (sum >= target) {
            break;
        }
    }
    std::sort(marked.begin(), marked.end());
    return marked;
}

std::vector<int> mark(const IndicatorField& field, double theta)
{
    const auto combined = field.combined();
    return mark(std::span<const double>(combined), theta);
}

namespace {

Mesh domain_mesh(const AdaptiveConfig& config, int n)
{
    switch (config.domain) {
    case Domain::square:
        return build_structured_square(n);
    case Domain::lshape:
        return build_lshape(n);
    case Domain::custom:
        return read_mesh(config.mesh_file);
    }
    throw ConfigError("unknown domain");
}

struct ShiftPlan {
    Complex shift{};
    std::optional<Complex> target;
};

/// Shift Re(lambda_k) - 0.5 and target lambda_k from a dense solve on the
/// initial mesh or, when that is too large, on a coarser mesh of the same domain.
ShiftPlan initial_shift(const AdaptiveConfig& config, const Mesh& initial)
{
    auto mesh = std::make_shared<const Mesh>(initial);
    int n = config.initial_n;
    while (true) {
        const CRSpace space(mesh);
        if (space.n_free() <= kDenseReferenceLimit) {
            if (space.n_free() < config.k) {
                return {};
            }
            const Complex lambda = dense_spectrum(assemble(space, config.b))[config.k - 1];
            return {lambda.real() - 0.5, lambda};
        }
        if (config.domain == Domain::custom || n <= 1) {
            return {};
        }
        n = (n + 1) / 2;
        mesh = std::make_shared<const Mesh>(domain_mesh(config, n));
    }
}

enum class Strategy { adaptive, uniform };

struct SolvedPairs {
    EigenPair primal;
    EigenPair dual;
};

SolvedPairs solve_both(const CRSystem& system, int k, Complex shift, const std::optional<Complex>& target,
                       double tol, const std::optional<CVector>& warm_primal,
                       const std::optional<CVector>& warm_dual)
{
    SolverConfig primal_cfg;
    primal_cfg.shift = shift;
    primal_cfg.target = target;
    primal_cfg.tol = tol;
    primal_cfg.initial_vector = warm_primal;
    SolverConfig dual_cfg = primal_cfg;
    dual_cfg.initial_vector = warm_dual;

    auto dual_future = std::async(std::launch::async, [&] { return solve_dual(system, k, dual_cfg); });
    EigenPair primal;
    try {
        primal = solve_primal(system, k, primal_cfg);
    } catch (...) {
        dual_future.wait();
        throw;
    }
    EigenPair dual = dual_future.get();
    if (std::abs(std::conj(dual.lambda) - primal.lambda) > 1e-8 * std::abs(primal.lambda)) {
        // The concurrent dual solve settled on another member of a cluster.
        dual_cfg.target = primal.lambda;
        dual = solve_dual(system, k, dual_cfg);
    }
    return {std::move(primal), std::move(dual)};
}

ConvergenceHistory drive(const AdaptiveConfig& config, Strategy strategy, int n_levels)
{
    config.validate();
    ConvergenceHistory history;
    history.config = config;

    auto mesh = std::make_shared<const Mesh>(initial_mesh(config));
    {
        const CRSpace space(mesh);
        if (strategy == Strategy::adaptive && config.max_dof < space.n_free()) {
            throw ConfigError("max_dof is below the initial number of degrees of freedom (" +
                              std::to_string(space.n_free()) + ")");
        }
    }
    const ShiftPlan plan = initial_shift(config, *mesh);
    Complex shift = plan.shift;
    std::optional<Complex> target = plan.target;

    std::unique_ptr<CRSpace> previous_space;
    std::optional<CVector> warm_primal;
    std::optional<CVector> warm_dual;
    EigenPair last_primal;
    EigenPair last_dual;

    for (int l = 0;; ++l) {
        const auto t0 = std::chrono::steady_clock::now();
        auto space = std::make_unique<CRSpace>(mesh);
        const CRSystem system = assemble(*space, config.b);

        if (previous_space) {
            warm_primal = warm_start(*previous_space, last_primal.vector, *space);
            warm_dual = warm_start(*previous_space, last_dual.vector, *space);
        }

        std::optional<SolvedPairs> solved;
        std::string failure;
        constexpr int kAttempts = 3;
        for (int attempt = 0; attempt < kAttempts && !solved; ++attempt) {
            const Complex trial = shift - attempt * 1e-2 * std::max(1.0, std::abs(shift));
            try {
                solved = solve_both(system, config.k, trial, target, config.eig_tol, warm_primal, warm_dual);
            } catch (const ShiftError& e) {
                failure = e.what();
            } catch (const ConvergenceError& e) {
                failure = e.what();
            }
        }
        if (!solved) {
            history.reason = Termination::solver_failure;
            history.failure_message = failure;
            return history;
        }
        last_primal = std::move(solved->primal);
        last_dual = std::move(solved->dual);

        const IndicatorField indicators = local_indicators(*space, system, last_primal, last_dual);

        ConvergenceRecord rec;
        rec.iter = l;
        rec.n_dof = space->n_free();
        rec.n_triangles = mesh->num_triangles();
        rec.lambda_h = last_primal.lambda;
        rec.lambda_star_h = last_dual.lambda;
        rec.eta_sq_total = indicators.total();
        rec.eta_star_sq_total = indicators.star_total();
        if (config.exact_lambda) {
            rec.err_exact = std::abs(*config.exact_lambda - last_primal.lambda);
        }
        rec.mesh_conforming = mesh->is_conforming();
        rec.euler_characteristic = mesh->euler_characteristic();

        const bool done_dof = strategy == Strategy::adaptive && rec.n_dof > config.max_dof;
        const bool done_iter = strategy == Strategy::adaptive ? l == config.max_iter : l == n_levels;

        std::shared_ptr<const Mesh> next;
        if (!done_dof && !done_iter) {
            if (strategy == Strategy::adaptive) {
                next = std::make_shared<const Mesh>(refine(*mesh, mark(indicators, config.theta)));
            } else {
                next = std::make_shared<const Mesh>(refine_uniform(*mesh));
            }
        }
        rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        history.records.push_back(rec);
        if (config.keep_meshes) {
            history.meshes.push_back(*mesh);
        }
        if (done_dof || done_iter) {
            history.reason = done_dof ? Termination::max_dof : Termination::max_iter;
            return history;
        }

        shift = last_primal.lambda.real() - 1e-3 * std::abs(last_primal.lambda);
        target = last_primal.lambda;
        previous_space = std::move(space);
        mesh = std::move(next);
    }
}

} // namespace

Mesh initial_mesh(const AdaptiveConfig& config)
{
    return domain_mesh(config, config.initial_n);
}

ConvergenceHistory run(const AdaptiveConfig& config)
{
    return drive(config, Strategy::adaptive, 0);
}

ConvergenceHistory uniform_study(const AdaptiveConfig& config, int n_levels)
{
    if (n_levels < 1) {
        throw ConfigError("uniform_study needs at least one level");
    }
    return drive(config, Strategy::uniform, n_levels);
}

double unit_square_eigenvalue(const Vec2& b, int k)
{
    if (k < 1) {
        throw ContractError("unit_square_eigenvalue: k must be at least 1");
    }
    const int range = k + 1;
    std::vector<int> sums;
    for (int i = 1; i <= range; ++i) {
        for (int j = 1; j <= range; ++j) {
            sums.push_back(i * i + j * j);
        }
    }
    std::sort(sums.begin(), sums.end());
    return b.squaredNorm() / 4.0 + std::numbers::pi * std::numbers::pi * sums[k - 1];
}

} // namespace crfem
