#pragma once

// Drives one optimization from a problem spec and writes its result files.
// Exit codes: 0 success, 1 usage, 2 numerical failure, 3 I/O failure.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <system_error>
#include <vector>

#include "config.hpp"
#include "optimizer.hpp"
#include "output.hpp"

namespace topokry {

enum exit_code : int { exit_ok = 0, exit_usage = 1, exit_numerical = 2, exit_io = 3 };

struct run_result {
    int code = exit_ok;
    std::string method;
    std::optional<optimization_history> history;
    double wall_seconds = 0.0;
};

inline run_result run(const problem_spec& spec, const std::filesystem::path& out_dir,
                      std::ostream& log)
{
    namespace fs = std::filesystem;
    run_result res;
    res.method = method_label(spec.solver, spec.optimizer);

    problem pb;
    try {
        validate(spec);
        pb = build_problem(spec);
    } catch (const validation_error& e) {
        log << "error: " << e.what() << "\n";
        res.code = exit_usage;
        return res;
    }

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) {
        log << "error: cannot create output directory '" << out_dir.string() << "'"
            << (ec ? ": " + ec.message() : std::string()) << "\n";
        res.code = exit_io;
        return res;
    }

    const auto t0 = std::chrono::steady_clock::now();
    try {
        res.history = optimize(pb);
    } catch (const numerical_failure& e) {
        log << "error: " << res.method << ": " << e.what() << "\n";
        res.code = exit_numerical;
        return res;
    } catch (const infeasible_constraint& e) {
        log << "error: " << res.method << ": " << e.what() << "\n";
        res.code = exit_numerical;
        return res;
    }
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const auto& h = *res.history;
    const std::vector<std::string> names{"density.pgm", "history.csv", "summary.txt"};
    std::vector<fs::path> written;
    auto cleanup = [&] {
        for (const auto& p : written)
            fs::remove(p, ec);
    };
    try {
        auto tmp = [&](const std::string& name) {
            const fs::path p = out_dir / (name + ".tmp");
            written.push_back(p);
            return p.string();
        };
        export_density_pgm(h.final_density, pb.grid, tmp(names[0]));
        export_history_csv(h, tmp(names[1]));
        detail::write_file(tmp(names[2]), [&](std::ostream& o) {
            write_summary(o, res.method, h, res.wall_seconds);
        });
        for (const auto& name : names) {
            fs::rename(out_dir / (name + ".tmp"), out_dir / name);
            written.push_back(out_dir / name);
        }
    } catch (const std::exception& e) {
        cleanup();
        log << "error: " << e.what() << "\n";
        res.code = exit_io;
        return res;
    }

    log << res.method << ": " << to_string(h.status) << " after " << h.iterations.size()
        << " outer iterations, " << h.total_inner_iterations()
        << " inner iterations, compliance " << format_number(h.final_compliance()) << "\n";
    return res;
}

/// Runs PCG/PCR × OC/CONLIN on one spec and writes `table.txt` next to the
/// four per-method directories.
inline int run_table(problem_spec spec, const std::filesystem::path& out_dir, std::ostream& log)
{
    spec.solver.precond = preconditioning::jacobi;
    struct row {
        std::string method;
        std::size_t inner;
        double energy;
        double seconds;
    };
    std::vector<row> rows;
    int code = exit_ok;
    for (auto m : {krylov_method::cg, krylov_method::cr})
        for (auto u : {update_rule::oc, update_rule::conlin}) {
            spec.solver.method = m;
            spec.optimizer.rule = u;
            std::string dir = method_label(spec.solver, spec.optimizer);
            std::transform(dir.begin(), dir.end(), dir.begin(),
                           [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
            const auto r = run(spec, out_dir / dir, log);
            code = std::max(code, r.code);
            if (r.history)
                rows.push_back({r.method, r.history->total_inner_iterations(),
                                r.history->final_compliance(), r.wall_seconds});
        }
    if (code != exit_ok)
        return code;
    try {
        detail::write_file((out_dir / "table.txt").string(), [&](std::ostream& o) {
            o << "method,total_iterations,total_strain_energy,cpu_seconds\n";
            for (const auto& r : rows)
                o << r.method << "," << r.inner << "," << format_number(r.energy) << ","
                  << format_number(r.seconds) << "\n";
        });
    } catch (const io_error& e) {
        log << "error: " << e.what() << "\n";
        return exit_io;
    }
    return exit_ok;
}

} // namespace topokry
