#pragma once

// Result files: density image (plain PGM), per-iteration history (CSV) and a
// key-value run summary.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>

#include "fem.hpp"
#include "optimizer.hpp"

namespace topokry {

class io_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Gray level of a density: round-half-up of 255·(1−ρ), so solid is black.
inline int density_gray(double rho) { return static_cast<int>(std::floor(255.0 * (1.0 - rho) + 0.5)); }

/// P2 image, nx × ny pixels, maxval 255, top row of the domain first.
inline void write_density_pgm(std::ostream& out, std::span<const double> rho, const mesh& m)
{
    check_density(rho, m.element_count());
    out << "P2\n" << m.nx() << " " << m.ny() << "\n255\n";
    for (std::size_t row = 0; row < m.ny(); ++row) {
        const std::size_t ey = m.ny() - 1 - row;
        for (std::size_t ex = 0; ex < m.nx(); ++ex)
            out << (ex ? " " : "") << density_gray(rho[m.element(ex, ey)]);
        out << "\n";
    }
}

inline std::string format_number(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.15g", v);
    return buf;
}

inline void write_history_csv(std::ostream& out, const optimization_history& h)
{
    if (h.iterations.empty())
        throw std::invalid_argument("history is empty");
    out << "outer_iter,cumulative_inner_iters,compliance,lagrange_multiplier,volume\n";
    for (std::size_t t = 0; t < h.iterations.size(); ++t) {
        const auto& r = h.iterations[t];
        out << (t + 1) << "," << r.cumulative_inner_iterations << "," << format_number(r.compliance)
            << "," << format_number(r.lambda) << "," << format_number(r.volume) << "\n";
    }
}

/// "PCG-OC", "CR-CONLIN", ...
inline std::string method_label(const solver_config& s, const optimizer_config& o)
{
    std::string label = s.precond == preconditioning::jacobi ? "P" : "";
    label += s.method == krylov_method::cg ? "CG" : "CR";
    label += o.rule == update_rule::oc ? "-OC" : "-CONLIN";
    return label;
}

inline void write_summary(std::ostream& out, const std::string& method,
                          const optimization_history& h, double wall_seconds)
{
    double volume = 0.0;
    for (double r : h.final_density)
        volume += r;
    out << "method = " << method << "\n";
    out << "status = " << to_string(h.status) << "\n";
    out << "outer_iters = " << h.iterations.size() << "\n";
    out << "total_inner_iters = " << h.total_inner_iterations() << "\n";
    out << "final_compliance = " << format_number(h.final_compliance()) << "\n";
    out << "final_volume = " << format_number(volume) << "\n";
    out << "wall_seconds = " << format_number(wall_seconds) << "\n";
}

namespace detail {

template <class Writer>
void write_file(const std::string& path, Writer&& w)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw io_error("cannot open '" + path + "' for writing");
    w(out);
    out.flush();
    if (!out)
        throw io_error("failed writing '" + path + "'");
}

} // namespace detail

inline void export_density_pgm(std::span<const double> rho, const mesh& m, const std::string& path)
{
    detail::write_file(path, [&](std::ostream& o) { write_density_pgm(o, rho, m); });
}

inline void export_history_csv(const optimization_history& h, const std::string& path)
{
    detail::write_file(path, [&](std::ostream& o) { write_history_csv(o, h); });
}

} // namespace topokry
