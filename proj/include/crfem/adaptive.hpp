#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crfem/estimator.hpp"
#include "crfem/mesh.hpp"
#include "crfem/types.hpp"

namespace crfem {

enum class Domain { square, lshape, custom };

struct AdaptiveConfig {
    Domain domain = Domain::square;
    std::filesystem::path mesh_file;  // used when domain == custom
    Vec2 b = Vec2(1.0, 0.0);
    double theta = 0.5;
    int k = 1;
    int initial_n = 16;
    int max_dof = 50000;
    int max_iter = 40;
    double eig_tol = 1e-10;
    std::optional<double> exact_lambda;
    bool keep_meshes = false;

    /// Throws ConfigError on an invalid combination.
    void validate() const;
};

struct ConvergenceRecord {
    int iter = 0;
    int n_dof = 0;  // free degrees of freedom
    int n_triangles = 0;
    Complex lambda_h{};
    Complex lambda_star_h{};
    double eta_sq_total = 0.0;
    double eta_star_sq_total = 0.0;
    std::optional<double> err_exact;  // |lambda - lambda_h|
    double wall_time = 0.0;           // seconds spent in this iteration
    bool mesh_conforming = true;
    int euler_characteristic = 1;
};

enum class Termination { max_dof, max_iter, solver_failure };

std::string to_string(Termination reason);

struct ConvergenceHistory {
    AdaptiveConfig config;
    std::vector<ConvergenceRecord> records;
    Termination reason = Termination::max_iter;
    std::string failure_message;
    std::vector<Mesh> meshes;  // one per record when config.keep_meshes

    bool completed() const { return reason != Termination::solver_failure; }
};

/// Smallest set of elements whose indicators carry a theta-fraction of the
/// total: greedy by descending value, ties by ascending index. Returned in
/// ascending index order. All-zero input marks element 0.
std::vector<int> mark(std::span<const double> indicators, double theta);
std::vector<int> mark(const IndicatorField& field, double theta);

/// Initial mesh for a configuration (structured square, L-shape or file).
Mesh initial_mesh(const AdaptiveConfig& config);

/// Solve, estimate, mark, refine until n_dof > max_dof or iter == max_iter.
ConvergenceHistory run(const AdaptiveConfig& config);

/// Same bookkeeping with every element refined (two bisections each) for
/// `n_levels` levels; records n_levels + 1 rows.
ConvergenceHistory uniform_study(const AdaptiveConfig& config, int n_levels);

/// Exact eigenvalue |b|^2/4 + pi^2 (i^2 + j^2) of the k-th mode on the unit
/// square, counting repeated values separately.
double unit_square_eigenvalue(const Vec2& b, int k);

} // namespace crfem
