#include "crfem/cli.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "crfem/errors.hpp"
#include "crfem/io.hpp"

namespace crfem {

namespace {

Vec2 parse_vector(const std::string& text)
{
    const auto comma = text.find(',');
    if (comma == std::string::npos || text.find(',', comma + 1) != std::string::npos) {
        throw UsageError("--b expects two comma-separated numbers, got '" + text + "'");
    }
    Vec2 v;
    for (int i = 0; i < 2; ++i) {
        const std::string part = i == 0 ? text.substr(0, comma) : text.substr(comma + 1);
        std::size_t used = 0;
        try {
            v[i] = std::stod(part, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != part.size() || !std::isfinite(v[i])) {
            throw UsageError("--b: malformed number '" + part + "'");
        }
    }
    return v;
}

struct Options {
    std::string command;
    std::string domain = "square";
    std::string b = "1,0";
    double theta = 0.5;
    int k = 1;
    int n = 16;
    int max_dof = 50000;
    int max_iter = 40;
    double tol = 1e-10;
    int levels = 3;
    std::string out;
    std::string mesh_dir;
    std::string mesh_file;
    double exact = 0.0;
};

void build_app(CLI::App& app, Options& o)
{
    app.add_option("command", o.command, "solve | uniform | table1 | table2 | dump-mesh")
        ->required()
        ->check(CLI::IsMember({"solve", "uniform", "table1", "table2", "dump-mesh"}));
    app.add_option("--domain", o.domain, "square | lshape | custom")->capture_default_str();
    app.add_option("--b", o.b, "constant convection vector 'b1,b2'")->capture_default_str();
    app.add_option("--theta", o.theta, "bulk marking fraction in (0,1)")->capture_default_str();
    app.add_option("--k", o.k, "eigenvalue index (ascending real part)")->capture_default_str();
    app.add_option("--n", o.n, "initial subdivisions per unit length")->capture_default_str();
    app.add_option("--max-dof", o.max_dof, "stop once the free DOF count exceeds this")->capture_default_str();
    app.add_option("--max-iter", o.max_iter, "maximum adaptive iteration index")->capture_default_str();
    app.add_option("--tol", o.tol, "eigenpair residual tolerance")->capture_default_str();
    app.add_option("--levels", o.levels, "uniform refinement levels (uniform only)")->capture_default_str();
    app.add_option("--exact", o.exact, "reference eigenvalue for the err_exact column (default: none)");
    app.add_option("--out", o.out, "CSV log path; output directory for table presets (default: stdout / tableN)");
    app.add_option("--mesh-dir", o.mesh_dir, "write mesh_<l>.txt per iteration into this directory (default: off)");
    app.add_option("--mesh-file", o.mesh_file, "input mesh for --domain custom (default: none)");
}

std::string csv_number(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.15g", v);
    return buf;
}

int run_one(const AdaptiveConfig& config, const CliInvocation& inv, bool uniform,
            const std::optional<std::filesystem::path>& csv_path,
            const std::optional<std::filesystem::path>& mesh_dir, std::ostream& out, std::ostream& err)
{
    AdaptiveConfig cfg = config;
    cfg.keep_meshes = mesh_dir.has_value();
    const ConvergenceHistory history = uniform ? uniform_study(cfg, inv.levels) : run(cfg);
    if (!history.records.empty()) {
        if (csv_path) {
            emit_log(history, *csv_path);
        } else {
            out << format_log(history);
        }
    }
    if (mesh_dir) {
        dump_meshes(history, *mesh_dir);
    }
    if (!history.completed()) {
        err << "solver failure: " << history.failure_message << "\n";
        return 1;
    }
    return 0;
}

} // namespace

std::string help_text()
{
    CLI::App app("Adaptive Crouzeix-Raviart solver for -Lap u + b.grad u = lambda u", "crfem");
    Options o;
    build_app(app, o);
    return app.help();
}

CliInvocation parse(const std::vector<std::string>& args)
{
    CLI::App app("Adaptive Crouzeix-Raviart solver for -Lap u + b.grad u = lambda u", "crfem");
    Options o;
    build_app(app, o);

    CliInvocation inv;
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        inv.help = true;
        inv.help_text = app.help();
        return inv;
    } catch (const CLI::ParseError& e) {
        throw UsageError(e.what());
    }

    if (o.command == "solve") {
        inv.subcommand = Subcommand::solve;
    } else if (o.command == "uniform") {
        inv.subcommand = Subcommand::uniform;
    } else if (o.command == "table1") {
        inv.subcommand = Subcommand::table1;
    } else if (o.command == "table2") {
        inv.subcommand = Subcommand::table2;
    } else {
        inv.subcommand = Subcommand::dump_mesh;
    }

    AdaptiveConfig& c = inv.config;
    if (o.domain == "square") {
        c.domain = Domain::square;
    } else if (o.domain == "lshape") {
        c.domain = Domain::lshape;
    } else if (o.domain == "custom") {
        c.domain = Domain::custom;
        c.mesh_file = o.mesh_file;
    } else {
        throw UsageError("unknown domain '" + o.domain + "' (expected square, lshape or custom)");
    }
    c.b = parse_vector(o.b);
    c.theta = o.theta;
    c.k = o.k;
    c.initial_n = o.n;
    c.max_dof = o.max_dof;
    c.max_iter = o.max_iter;
    c.eig_tol = o.tol;
    if (app.count("--exact") > 0) {
        c.exact_lambda = o.exact;
    }
    if (!o.out.empty()) {
        inv.out = o.out;
    }
    if (!o.mesh_dir.empty()) {
        inv.mesh_dir = o.mesh_dir;
    }
    if (o.levels < 1) {
        throw UsageError("--levels must be at least 1");
    }
    inv.levels = o.levels;
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    return inv;
}

std::string format_log(const ConvergenceHistory& history)
{
    std::string s = "iter,ndof,lambda_re,lambda_im,lambda_dual_re,lambda_dual_im,eta_sq,eta_star_sq,err_exact\n";
    for (const auto& r : history.records) {
        s += std::to_string(r.iter) + "," + std::to_string(r.n_dof) + "," + csv_number(r.lambda_h.real()) +
             "," + csv_number(r.lambda_h.imag()) + "," + csv_number(r.lambda_star_h.real()) + "," +
             csv_number(r.lambda_star_h.imag()) + "," + csv_number(r.eta_sq_total) + "," +
             csv_number(r.eta_star_sq_total) + "," + (r.err_exact ? csv_number(*r.err_exact) : "") + "\n";
    }
    return s;
}

void emit_log(const ConvergenceHistory& history, const std::filesystem::path& path)
{
    if (history.records.empty()) {
        throw ContractError("emit_log: empty history");
    }
    write_file_atomic(path, format_log(history));
}

void dump_meshes(const ConvergenceHistory& history, const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) {
        throw IoError("cannot create mesh directory '" + dir.string() + "'");
    }
    for (std::size_t l = 0; l < history.meshes.size(); ++l) {
        write_mesh(history.meshes[l], dir / ("mesh_" + std::to_string(l) + ".txt"));
    }
}

std::vector<AdaptiveConfig> table_preset(int table, const AdaptiveConfig& base)
{
    if (table != 1 && table != 2) {
        throw ContractError("table_preset: only tables 1 and 2 exist");
    }
    std::vector<AdaptiveConfig> out;
    const std::array<int, 2> ks = table == 1 ? std::array<int, 2>{1, 2} : std::array<int, 2>{1, 8};
    for (int k : ks) {
        for (double b1 : {1.0, 3.0, 10.0}) {
            AdaptiveConfig c = base;
            c.domain = table == 1 ? Domain::square : Domain::lshape;
            c.b = Vec2(b1, 0.0);
            c.k = k;
            c.initial_n = 16;
            if (table == 1) {
                c.exact_lambda = unit_square_eigenvalue(c.b, k);
            } else {
                c.exact_lambda.reset();
            }
            out.push_back(c);
        }
    }
    return out;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CliInvocation inv;
    try {
        inv = parse(args);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n\n" << help_text();
        return 2;
    }
    if (inv.help) {
        out << inv.help_text;
        return 0;
    }

    try {
        switch (inv.subcommand) {
        case Subcommand::solve:
            return run_one(inv.config, inv, false, inv.out, inv.mesh_dir, out, err);
        case Subcommand::uniform:
            return run_one(inv.config, inv, true, inv.out, inv.mesh_dir, out, err);
        case Subcommand::dump_mesh: {
            const Mesh mesh = initial_mesh(inv.config);
            const std::filesystem::path path =
                inv.out ? *inv.out : inv.mesh_dir.value_or(".") / "mesh_0.txt";
            if (!inv.out && inv.mesh_dir) {
                std::filesystem::create_directories(*inv.mesh_dir);
            }
            write_mesh(mesh, path);
            out << "wrote " << path.string() << " (" << mesh.num_vertices() << " vertices, "
                << mesh.num_triangles() << " triangles)\n";
            return 0;
        }
        case Subcommand::table1:
        case Subcommand::table2: {
            const int table = inv.subcommand == Subcommand::table1 ? 1 : 2;
            const std::filesystem::path dir = inv.out.value_or("table" + std::to_string(table));
            std::filesystem::create_directories(dir);
            int status = 0;
            out << "k,b1,iter,ndof,lambda_re,err_exact\n";
            for (const AdaptiveConfig& cfg : table_preset(table, inv.config)) {
                AdaptiveConfig c = cfg;
                c.keep_meshes = inv.mesh_dir.has_value();
                const ConvergenceHistory h = run(c);
                const std::string tag = "k" + std::to_string(c.k) + "_b" + std::to_string(static_cast<int>(c.b.x()));
                if (!h.records.empty()) {
                    emit_log(h, dir / ("table" + std::to_string(table) + "_" + tag + ".csv"));
                }
                if (inv.mesh_dir) {
                    dump_meshes(h, *inv.mesh_dir / tag);
                }
                for (const auto& r : h.records) {
                    out << c.k << "," << c.b.x() << "," << r.iter << "," << r.n_dof << ","
                        << csv_number(r.lambda_h.real()) << ","
                        << (r.err_exact ? csv_number(*r.err_exact) : "") << "\n";
                }
                if (!h.completed()) {
                    err << "solver failure (" << tag << "): " << h.failure_message << "\n";
                    status = 1;
                }
            }
            return status;
        }
        }
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        err << "I/O error: " << e.what() << "\n";
        return 3;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "I/O error: " << e.what() << "\n";
        return 3;
    }
    return 1;
}

} // namespace crfem
