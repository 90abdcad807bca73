#pragma once

// Problem configuration files: flat `key = value` text with dotted sections.
//
//   # two-bar truss
//   domain.a = 10
//   domain.b = 20
//   mesh.nx = 20
//   mesh.ny = 40
//   material.young_modulus = 2.1e5
//   supports.edges = left
//   loads[0].x = 10
//   loads[0].y = 10
//   loads[0].fy = -105
//
// Unknown keys are rejected. `#` starts a comment.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fem.hpp"
#include "krylov.hpp"
#include "optimizer.hpp"

namespace topokry {

/// Syntax problems; the message starts with "<source>:<line>:".
class config_error : public std::runtime_error {
public:
    config_error(const std::string& source, std::size_t line, const std::string& what)
        : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line)
    {
    }
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Semantically invalid values; field() names the offending key or entry.
class validation_error : public std::runtime_error {
public:
    validation_error(const std::string& field, const std::string& what)
        : std::runtime_error(field + ": " + what), field_(field)
    {
    }
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

struct load_spec {
    double x = 0.0;
    double y = 0.0;
    double fx = 0.0;
    double fy = 0.0;
    friend bool operator==(const load_spec&, const load_spec&) = default;
};

struct support_point {
    double x = 0.0;
    double y = 0.0;
    bool fix_x = true;
    bool fix_y = true;
    friend bool operator==(const support_point&, const support_point&) = default;
};

struct problem_spec {
    double a = 0.0;
    double b = 0.0;
    std::size_t nx = 0;
    std::size_t ny = 0;
    material mat;
    std::vector<std::string> support_edges;
    std::vector<support_point> support_points;
    std::vector<load_spec> loads;
    solver_config solver{.precond = preconditioning::jacobi};
    optimizer_config optimizer;
    std::string output_dir = "out";
    /// Reserved; the pipeline is deterministic.
    std::uint64_t seed = 0;

    friend bool operator==(const problem_spec&, const problem_spec&) = default;
};

namespace detail {

inline std::string trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

struct entry {
    std::string value;
    std::size_t line;
    bool used = false;
};

class entry_table {
public:
    entry_table(std::string source) : source_(std::move(source)) {}

    void add(const std::string& key, std::string value, std::size_t line)
    {
        if (entries_.count(key))
            throw config_error(source_, line, "duplicate key '" + key + "'");
        entries_.emplace(key, entry{std::move(value), line});
    }

    bool has(const std::string& key) const { return entries_.count(key) != 0; }

    const entry* find(const std::string& key)
    {
        auto it = entries_.find(key);
        if (it == entries_.end())
            return nullptr;
        it->second.used = true;
        return &it->second;
    }

    std::optional<double> number(const std::string& key)
    {
        const entry* e = find(key);
        if (!e)
            return std::nullopt;
        double v = 0.0;
        const char* first = e->value.data();
        const char* last = first + e->value.size();
        auto [ptr, ec] = std::from_chars(first, last, v);
        if (ec != std::errc{} || ptr != last || !std::isfinite(v))
            throw config_error(source_, e->line, key + ": expected a number, got '" + e->value + "'");
        return v;
    }

    std::optional<std::size_t> count(const std::string& key)
    {
        const entry* e = find(key);
        if (!e)
            return std::nullopt;
        std::size_t v = 0;
        const char* first = e->value.data();
        const char* last = first + e->value.size();
        auto [ptr, ec] = std::from_chars(first, last, v);
        if (ec != std::errc{} || ptr != last)
            throw config_error(source_, e->line,
                               key + ": expected a non-negative integer, got '" + e->value + "'");
        return v;
    }

    std::optional<std::string> text(const std::string& key)
    {
        const entry* e = find(key);
        if (!e)
            return std::nullopt;
        return e->value;
    }

    std::size_t line_of(const std::string& key) const
    {
        auto it = entries_.find(key);
        return it == entries_.end() ? 0 : it->second.line;
    }

    /// Largest index + 1 among keys "<prefix>[i]." ; indices must be dense.
    std::size_t indexed_count(const std::string& prefix) const
    {
        const std::regex re("^" + std::regex_replace(prefix, std::regex(R"([.\[\]])"), R"(\$&)") +
                            R"(\[(\d+)\]\.)");
        std::vector<std::size_t> seen;
        for (const auto& [k, e] : entries_) {
            std::smatch m;
            if (std::regex_search(k, m, re))
                seen.push_back(std::stoul(m[1].str()));
        }
        if (seen.empty())
            return 0;
        const std::size_t n = *std::max_element(seen.begin(), seen.end()) + 1;
        for (std::size_t i = 0; i < n; ++i)
            if (std::find(seen.begin(), seen.end(), i) == seen.end())
                throw validation_error(prefix + "[" + std::to_string(i) + "]",
                                       "missing entry (indices must be contiguous from 0)");
        return n;
    }

    void reject_unused() const
    {
        for (const auto& [k, e] : entries_)
            if (!e.used)
                throw config_error(source_, e.line, "unknown key '" + k + "'");
    }

    const std::string& source() const { return source_; }

private:
    std::string source_;
    std::map<std::string, entry> entries_;
};

inline std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (auto t = trim(item); !t.empty())
            out.push_back(t);
    return out;
}

template <class T>
void set_if(std::optional<T> v, T& target)
{
    if (v)
        target = *v;
}

inline bool inside(double x, double y, const problem_spec& s)
{
    return x >= 0.0 && x <= s.a && y >= 0.0 && y <= s.b;
}

} // namespace detail

/// Resolved model of a spec: mesh, supports and nodal loads.
inline problem build_problem(const problem_spec& s)
{
    problem pb;
    pb.grid = mesh(s.nx, s.ny, s.a, s.b);
    pb.mat = s.mat;
    pb.solver = s.solver;
    pb.optimizer = s.optimizer;

    const auto& g = pb.grid;
    auto fix_node = [&](std::size_t n, bool fx, bool fy) {
        if (fx)
            pb.bc.fixed_dofs.push_back(2 * n);
        if (fy)
            pb.bc.fixed_dofs.push_back(2 * n + 1);
    };
    for (const auto& edge : s.support_edges) {
        if (edge == "left" || edge == "right")
            for (std::size_t j = 0; j <= g.ny(); ++j)
                fix_node(g.node(edge == "left" ? 0 : g.nx(), j), true, true);
        else if (edge == "bottom" || edge == "top")
            for (std::size_t i = 0; i <= g.nx(); ++i)
                fix_node(g.node(i, edge == "bottom" ? 0 : g.ny()), true, true);
        else
            throw validation_error("supports.edges", "unknown edge '" + edge + "'");
    }
    for (const auto& p : s.support_points)
        fix_node(g.nearest_node(p.x, p.y), p.fix_x, p.fix_y);
    std::sort(pb.bc.fixed_dofs.begin(), pb.bc.fixed_dofs.end());
    pb.bc.fixed_dofs.erase(std::unique(pb.bc.fixed_dofs.begin(), pb.bc.fixed_dofs.end()),
                           pb.bc.fixed_dofs.end());

    for (std::size_t i = 0; i < s.loads.size(); ++i) {
        const auto& l = s.loads[i];
        const std::size_t n = g.nearest_node(l.x, l.y);
        for (auto [dof, f] : {std::pair{2 * n, l.fx}, std::pair{2 * n + 1, l.fy}}) {
            if (f == 0.0)
                continue;
            if (std::binary_search(pb.bc.fixed_dofs.begin(), pb.bc.fixed_dofs.end(), dof))
                throw validation_error("loads[" + std::to_string(i) + "]",
                                       "load acts on a supported DOF");
            pb.bc.loads.push_back({dof, f});
        }
    }
    return pb;
}

inline void validate(const problem_spec& s)
{
    if (s.nx < 1)
        throw validation_error("mesh.nx", "must be at least 1");
    if (s.ny < 1)
        throw validation_error("mesh.ny", "must be at least 1");
    if (!(s.a > 0.0))
        throw validation_error("domain.a", "must be positive");
    if (!(s.b > 0.0))
        throw validation_error("domain.b", "must be positive");
    if (!(s.mat.young_modulus > 0.0))
        throw validation_error("material.young_modulus", "must be positive");
    if (!(s.mat.poisson_ratio >= 0.0 && s.mat.poisson_ratio < 0.5))
        throw validation_error("material.poisson_ratio", "must lie in [0, 0.5)");
    if (!(s.mat.penal >= 1.0))
        throw validation_error("material.penal", "must be at least 1");
    if (!(s.optimizer.volume_fraction > 0.0 && s.optimizer.volume_fraction <= 1.0))
        throw validation_error("optimizer.volume_fraction", "must lie in (0, 1]");
    if (!(s.optimizer.oc_exponent > 0.0 && s.optimizer.oc_exponent <= 1.0))
        throw validation_error("optimizer.oc_exponent", "must lie in (0, 1]");
    if (!(s.optimizer.threshold_cutoff >= 0.0 && s.optimizer.threshold_cutoff < 1.0))
        throw validation_error("optimizer.threshold", "must lie in [0, 1)");
    if (!(s.optimizer.move_limit > 0.0))
        throw validation_error("optimizer.move_limit", "must be positive");
    if (!(s.optimizer.lagrangian_tolerance >= 0.0))
        throw validation_error("optimizer.lagrangian_tolerance", "must be non-negative");
    if (!(s.optimizer.bisection_tolerance > 0.0))
        throw validation_error("optimizer.bisection_tolerance", "must be positive");
    if (s.optimizer.max_outer_iterations < 1)
        throw validation_error("optimizer.max_outer_iterations", "must be at least 1");
    if (!(s.solver.rel_tolerance > 0.0))
        throw validation_error("solver.tolerance", "must be positive");
    if (s.solver.max_iterations < 1)
        throw validation_error("solver.max_iterations", "must be at least 1");
    if (!(s.solver.breakdown_tolerance > 0.0))
        throw validation_error("solver.breakdown_tolerance", "must be positive");
    for (const auto& e : s.support_edges)
        if (e != "left" && e != "right" && e != "top" && e != "bottom")
            throw validation_error("supports.edges", "unknown edge '" + e + "'");
    for (std::size_t i = 0; i < s.support_points.size(); ++i)
        if (!detail::inside(s.support_points[i].x, s.support_points[i].y, s))
            throw validation_error("supports.points[" + std::to_string(i) + "]",
                                   "position outside the domain");
    for (std::size_t i = 0; i < s.loads.size(); ++i)
        if (!detail::inside(s.loads[i].x, s.loads[i].y, s))
            throw validation_error("loads[" + std::to_string(i) + "]", "position outside the domain");
    build_problem(s);
}

/// Parses configuration text. Absent keys take their defaults; the default
/// domain is nx × ny with unit elements and the default Krylov iteration cap
/// is the node count.
inline problem_spec parse_problem(const std::string& text, const std::string& source = "<config>")
{
    detail::entry_table tab(source);
    {
        std::istringstream in(text);
        std::string raw;
        std::size_t line_no = 0;
        while (std::getline(in, raw)) {
            ++line_no;
            if (auto hash = raw.find('#'); hash != std::string::npos)
                raw.erase(hash);
            const std::string line = detail::trim(raw);
            if (line.empty())
                continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw config_error(source, line_no, "expected 'key = value'");
            const std::string key = detail::trim(std::string_view(line).substr(0, eq));
            const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
            if (key.empty())
                throw config_error(source, line_no, "empty key");
            if (value.empty())
                throw config_error(source, line_no, "empty value for '" + key + "'");
            tab.add(key, value, line_no);
        }
    }

    problem_spec s;
    const auto nx = tab.count("mesh.nx");
    const auto ny = tab.count("mesh.ny");
    if (!nx)
        throw validation_error("mesh.nx", "required");
    if (!ny)
        throw validation_error("mesh.ny", "required");
    s.nx = *nx;
    s.ny = *ny;
    s.a = tab.number("domain.a").value_or(static_cast<double>(s.nx));
    s.b = tab.number("domain.b").value_or(static_cast<double>(s.ny));

    const auto e = tab.number("material.young_modulus");
    if (!e)
        throw validation_error("material.young_modulus", "required");
    s.mat.young_modulus = *e;
    detail::set_if(tab.number("material.poisson_ratio"), s.mat.poisson_ratio);
    detail::set_if(tab.number("material.penal"), s.mat.penal);

    if (auto edges = tab.text("supports.edges"))
        s.support_edges = detail::split_list(*edges);
    for (std::size_t i = 0, n = tab.indexed_count("supports.points"); i < n; ++i) {
        const std::string p = "supports.points[" + std::to_string(i) + "].";
        support_point sp;
        const auto x = tab.number(p + "x");
        const auto y = tab.number(p + "y");
        if (!x || !y)
            throw validation_error("supports.points[" + std::to_string(i) + "]",
                                   "needs both x and y");
        sp.x = *x;
        sp.y = *y;
        if (auto fix = tab.text(p + "fix")) {
            if (*fix != "x" && *fix != "y" && *fix != "xy")
                throw config_error(source, tab.line_of(p + "fix"),
                                   p + "fix: expected x, y or xy");
            sp.fix_x = fix->find('x') != std::string::npos;
            sp.fix_y = fix->find('y') != std::string::npos;
        }
        s.support_points.push_back(sp);
    }
    for (std::size_t i = 0, n = tab.indexed_count("loads"); i < n; ++i) {
        const std::string p = "loads[" + std::to_string(i) + "].";
        load_spec l;
        const auto x = tab.number(p + "x");
        const auto y = tab.number(p + "y");
        if (!x || !y)
            throw validation_error("loads[" + std::to_string(i) + "]", "needs both x and y");
        l.x = *x;
        l.y = *y;
        detail::set_if(tab.number(p + "fx"), l.fx);
        detail::set_if(tab.number(p + "fy"), l.fy);
        s.loads.push_back(l);
    }

    if (auto m = tab.text("solver.method")) {
        if (*m == "cg")
            s.solver.method = krylov_method::cg;
        else if (*m == "cr")
            s.solver.method = krylov_method::cr;
        else
            throw config_error(source, tab.line_of("solver.method"),
                               "solver.method: expected cg or cr");
    }
    if (auto p = tab.text("solver.preconditioning")) {
        if (*p == "jacobi")
            s.solver.precond = preconditioning::jacobi;
        else if (*p == "none")
            s.solver.precond = preconditioning::none;
        else
            throw config_error(source, tab.line_of("solver.preconditioning"),
                               "solver.preconditioning: expected jacobi or none");
    }
    detail::set_if(tab.number("solver.tolerance"), s.solver.rel_tolerance);
    s.solver.max_iterations = tab.count("solver.max_iterations").value_or((s.nx + 1) * (s.ny + 1));
    detail::set_if(tab.number("solver.breakdown_tolerance"), s.solver.breakdown_tolerance);

    if (auto u = tab.text("optimizer.update")) {
        if (*u == "oc")
            s.optimizer.rule = update_rule::oc;
        else if (*u == "conlin")
            s.optimizer.rule = update_rule::conlin;
        else
            throw config_error(source, tab.line_of("optimizer.update"),
                               "optimizer.update: expected oc or conlin");
    }
    detail::set_if(tab.number("optimizer.volume_fraction"), s.optimizer.volume_fraction);
    detail::set_if(tab.number("optimizer.oc_exponent"), s.optimizer.oc_exponent);
    detail::set_if(tab.number("optimizer.threshold"), s.optimizer.threshold_cutoff);
    detail::set_if(tab.number("optimizer.lagrangian_tolerance"), s.optimizer.lagrangian_tolerance);
    detail::set_if(tab.count("optimizer.max_outer_iterations"), s.optimizer.max_outer_iterations);
    detail::set_if(tab.number("optimizer.move_limit"), s.optimizer.move_limit);
    detail::set_if(tab.number("optimizer.bisection_tolerance"), s.optimizer.bisection_tolerance);

    detail::set_if(tab.text("output.directory"), s.output_dir);
    if (auto seed = tab.count("seed"))
        s.seed = *seed;

    tab.reject_unused();
    validate(s);
    return s;
}

inline problem_spec load_problem(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open configuration file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_problem(buf.str(), path);
}

/// Serializes every field, defaults included, so parse_problem reproduces
/// an equal spec.
inline std::string write_problem(const problem_spec& s)
{
    // Shortest text that parses back to the same double.
    auto num = [](double v) {
        char buf[32];
        const auto res = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, res.ptr);
    };
    std::ostringstream out;
    out << "domain.a = " << num(s.a) << "\n";
    out << "domain.b = " << num(s.b) << "\n";
    out << "mesh.nx = " << s.nx << "\n";
    out << "mesh.ny = " << s.ny << "\n";
    out << "material.young_modulus = " << num(s.mat.young_modulus) << "\n";
    out << "material.poisson_ratio = " << num(s.mat.poisson_ratio) << "\n";
    out << "material.penal = " << num(s.mat.penal) << "\n";
    if (!s.support_edges.empty()) {
        out << "supports.edges = ";
        for (std::size_t i = 0; i < s.support_edges.size(); ++i)
            out << (i ? ", " : "") << s.support_edges[i];
        out << "\n";
    }
    for (std::size_t i = 0; i < s.support_points.size(); ++i) {
        const auto& p = s.support_points[i];
        const std::string k = "supports.points[" + std::to_string(i) + "].";
        out << k << "x = " << num(p.x) << "\n" << k << "y = " << num(p.y) << "\n";
        out << k << "fix = " << (p.fix_x ? "x" : "") << (p.fix_y ? "y" : "") << "\n";
    }
    for (std::size_t i = 0; i < s.loads.size(); ++i) {
        const auto& l = s.loads[i];
        const std::string k = "loads[" + std::to_string(i) + "].";
        out << k << "x = " << num(l.x) << "\n" << k << "y = " << num(l.y) << "\n";
        out << k << "fx = " << num(l.fx) << "\n" << k << "fy = " << num(l.fy) << "\n";
    }
    out << "solver.method = " << to_string(s.solver.method) << "\n";
    out << "solver.preconditioning = " << to_string(s.solver.precond) << "\n";
    out << "solver.tolerance = " << num(s.solver.rel_tolerance) << "\n";
    out << "solver.max_iterations = " << s.solver.max_iterations << "\n";
    out << "solver.breakdown_tolerance = " << num(s.solver.breakdown_tolerance) << "\n";
    out << "optimizer.update = " << to_string(s.optimizer.rule) << "\n";
    out << "optimizer.volume_fraction = " << num(s.optimizer.volume_fraction) << "\n";
    out << "optimizer.oc_exponent = " << num(s.optimizer.oc_exponent) << "\n";
    out << "optimizer.threshold = " << num(s.optimizer.threshold_cutoff) << "\n";
    out << "optimizer.lagrangian_tolerance = " << num(s.optimizer.lagrangian_tolerance) << "\n";
    out << "optimizer.max_outer_iterations = " << s.optimizer.max_outer_iterations << "\n";
    out << "optimizer.move_limit = " << num(s.optimizer.move_limit) << "\n";
    out << "optimizer.bisection_tolerance = " << num(s.optimizer.bisection_tolerance) << "\n";
    out << "output.directory = " << s.output_dir << "\n";
    out << "seed = " << s.seed << "\n";
    return out.str();
}

} // namespace topokry
