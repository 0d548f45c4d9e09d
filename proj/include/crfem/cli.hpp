#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "crfem/adaptive.hpp"

namespace crfem {

enum class Subcommand { solve, uniform, table1, table2, dump_mesh };

struct CliInvocation {
    Subcommand subcommand = Subcommand::solve;
    AdaptiveConfig config;
    std::optional<std::filesystem::path> out;
    std::optional<std::filesystem::path> mesh_dir;
    int levels = 3;  // uniform only
    bool help = false;
    std::string help_text;
};

/// Maps argv (without the program name) onto an invocation. Throws UsageError.
CliInvocation parse(const std::vector<std::string>& args);

/// Usage text listing every flag and its default.
std::string help_text();

/// CSV with header
/// iter,ndof,lambda_re,lambda_im,lambda_dual_re,lambda_dual_im,eta_sq,eta_star_sq,err_exact
std::string format_log(const ConvergenceHistory& history);
void emit_log(const ConvergenceHistory& history, const std::filesystem::path& path);

/// mesh_<l>.txt for every kept mesh of the history.
void dump_meshes(const ConvergenceHistory& history, const std::filesystem::path& dir);

/// Runs configurations of a table preset: (b, k) combinations on the preset's domain.
std::vector<AdaptiveConfig> table_preset(int table, const AdaptiveConfig& base);

/// Entry point used by the executable. Exit status 0 iff every run ended by
/// max_dof or max_iter; 1 on solver failure, 2 on usage errors, 3 on I/O errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace crfem
