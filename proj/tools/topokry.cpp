// topokry: topology optimization with CG / CR structural solvers.
//
//   topokry run <config>... [--out <dir>] [--solver cg|cr] [--update oc|conlin]
//   topokry table <config> [--out <dir>]
//   topokry show-config <config>

#include <algorithm>
#include <filesystem>
#include <future>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <topokry/config.hpp>
#include <topokry/run.hpp>

namespace fs = std::filesystem;

namespace {

int load(const std::string& path, topokry::problem_spec& spec)
{
    try {
        spec = topokry::load_problem(path);
        return topokry::exit_ok;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return topokry::exit_usage;
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Topology optimization with Krylov solvers on singular stiffness matrices"};
    app.require_subcommand(1);

    std::vector<std::string> run_configs;
    std::string run_out;
    std::string solver;
    std::string update;
    auto* run_cmd = app.add_subcommand("run", "optimize one or more problem configurations");
    run_cmd->add_option("config", run_configs, "configuration file(s)")->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--out", run_out, "output directory (default: output.directory from the config)");
    run_cmd->add_option("--solver", solver, "override solver.method")->check(CLI::IsMember({"cg", "cr"}));
    run_cmd->add_option("--update", update, "override optimizer.update")->check(CLI::IsMember({"oc", "conlin"}));

    std::string table_config;
    std::string table_out;
    auto* table_cmd = app.add_subcommand("table", "run PCG/PCR x OC/CONLIN and tabulate the results");
    table_cmd->add_option("config", table_config, "configuration file")->required()->check(CLI::ExistingFile);
    table_cmd->add_option("--out", table_out, "output directory");

    std::string show_config;
    auto* show_cmd = app.add_subcommand("show-config", "print a configuration with every default filled in");
    show_cmd->add_option("config", show_config, "configuration file")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : topokry::exit_usage;
    }

    if (*show_cmd) {
        topokry::problem_spec spec;
        if (int rc = load(show_config, spec))
            return rc;
        std::cout << topokry::write_problem(spec);
        return topokry::exit_ok;
    }

    if (*table_cmd) {
        topokry::problem_spec spec;
        if (int rc = load(table_config, spec))
            return rc;
        const fs::path out = table_out.empty() ? fs::path(spec.output_dir) : fs::path(table_out);
        return topokry::run_table(spec, out, std::cout);
    }

    std::vector<topokry::problem_spec> specs(run_configs.size());
    for (std::size_t i = 0; i < run_configs.size(); ++i) {
        if (int rc = load(run_configs[i], specs[i]))
            return rc;
        if (solver == "cg")
            specs[i].solver.method = topokry::krylov_method::cg;
        else if (solver == "cr")
            specs[i].solver.method = topokry::krylov_method::cr;
        if (update == "oc")
            specs[i].optimizer.rule = topokry::update_rule::oc;
        else if (update == "conlin")
            specs[i].optimizer.rule = topokry::update_rule::conlin;
    }

    auto out_dir = [&](std::size_t i) {
        const fs::path base = run_out.empty() ? fs::path(specs[i].output_dir) : fs::path(run_out);
        return specs.size() == 1 ? base : base / fs::path(run_configs[i]).stem();
    };

    if (specs.size() == 1)
        return topokry::run(specs[0], out_dir(0), std::cout).code;

    // Independent runs, one task each; logs are printed in argument order.
    std::vector<std::future<std::pair<int, std::string>>> jobs;
    for (std::size_t i = 0; i < specs.size(); ++i)
        jobs.push_back(std::async(std::launch::async, [&, i] {
            std::ostringstream log;
            const int code = topokry::run(specs[i], out_dir(i), log).code;
            return std::pair{code, log.str()};
        }));
    int code = topokry::exit_ok;
    for (auto& j : jobs) {
        auto [c, log] = j.get();
        std::cout << log;
        code = std::max(code, c);
    }
    return code;
}
