#pragma once

// Outer topology-optimization loop: analysis, sensitivities, OC or CONLIN
// density update with a volume-constraint multiplier, thresholding.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "fem.hpp"
#include "krylov.hpp"
#include "linalg.hpp"

namespace topokry {

enum class update_rule { oc, conlin };

inline const char* to_string(update_rule u) { return u == update_rule::oc ? "oc" : "conlin"; }

class infeasible_constraint : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct optimizer_config {
    update_rule rule = update_rule::oc;
    double volume_fraction = 0.375;
    double oc_exponent = 0.85;
    double threshold_cutoff = 1e-3;
    double lagrangian_tolerance = 1e-10;
    std::size_t max_outer_iterations = 100;
    /// Per-step bound on |ρ' − ρ|.
    double move_limit = 0.2;
    /// Relative volume tolerance of the multiplier search.
    double bisection_tolerance = 1e-8;

    void validate() const
    {
        if (!(volume_fraction > 0.0 && volume_fraction <= 1.0))
            throw std::invalid_argument("optimizer_config: volume_fraction must lie in (0, 1]");
        if (!(oc_exponent > 0.0 && oc_exponent <= 1.0))
            throw std::invalid_argument("optimizer_config: oc_exponent must lie in (0, 1]");
        if (!(threshold_cutoff >= 0.0 && threshold_cutoff < 1.0))
            throw std::invalid_argument("optimizer_config: threshold_cutoff must lie in [0, 1)");
        if (!(move_limit > 0.0))
            throw std::invalid_argument("optimizer_config: move_limit must be positive");
        if (!(lagrangian_tolerance >= 0.0))
            throw std::invalid_argument("optimizer_config: lagrangian_tolerance must be >= 0");
        if (!(bisection_tolerance > 0.0))
            throw std::invalid_argument("optimizer_config: bisection_tolerance must be positive");
        if (max_outer_iterations < 1)
            throw std::invalid_argument("optimizer_config: max_outer_iterations must be >= 1");
    }

    friend bool operator==(const optimizer_config&, const optimizer_config&) = default;
};

/// C = ½ (x, b); equals ½ xᵀAx when A x = b.
inline double compliance(std::span<const double> x, std::span<const double> b)
{
    if (x.size() != b.size())
        throw std::invalid_argument("compliance: dimension mismatch");
    return 0.5 * dot(x, b);
}

/// C_ρj = −p·ρ_j^{p−1}·x_jᵀ D_j x_j, evaluated without dividing by ρ_j.
/// Void elements get exactly zero.
inline std::vector<double> sensitivity(const mesh& m, const material& mat,
                                       std::span<const double> rho, std::span<const double> x)
{
    check_density(rho, m.element_count());
    if (x.size() != m.dof_count())
        throw std::invalid_argument("sensitivity: displacement size does not match the mesh");
    const auto ke = element_stiffness(mat, m.element_width(), m.element_height());

    std::vector<double> out(m.element_count(), 0.0);
    for (std::size_t e = 0; e < m.element_count(); ++e) {
        if (rho[e] == 0.0)
            continue;
        const auto dofs = m.element_dofs(e);
        std::array<double, 8> xe{};
        for (std::size_t i = 0; i < 8; ++i)
            xe[i] = x[dofs[i]];
        double energy = 0.0;
        for (std::size_t i = 0; i < 8; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < 8; ++j)
                row += ke(i, j) * xe[j];
            energy += xe[i] * row;
        }
        // x_jᵀ D_j x_j >= 0 up to rounding.
        energy = std::max(energy, 0.0);
        out[e] = -mat.penal * std::pow(rho[e], mat.penal - 1.0) * energy;
    }
    return out;
}

struct density_update {
    density_field rho;
    double lambda = 0.0;
    bool constraint_active = true;
};

namespace detail {

/// ρ'_j(μ) = clamp((|C_ρj| / μ)^e · ρ_j), μ = |λ| > 0.
class multiplicative_update {
public:
    multiplicative_update(std::span<const double> rho, std::span<const double> sens,
                          double exponent, double move_limit)
        : rho_(rho), sens_(sens), exponent_(exponent), move_(move_limit)
    {
    }

    void evaluate(double mu, density_field& out) const
    {
        out.resize(rho_.size());
        for (std::size_t j = 0; j < rho_.size(); ++j) {
            const double r = rho_[j];
            if (r == 0.0) {
                out[j] = 0.0;
                continue;
            }
            const double candidate = std::pow(-sens_[j] / mu, exponent_) * r;
            const double lo = std::max(0.0, r - move_);
            const double hi = std::min(1.0, r + move_);
            out[j] = std::clamp(candidate, lo, hi);
        }
    }

    double volume(double mu, density_field& scratch) const
    {
        evaluate(mu, scratch);
        double v = 0.0;
        for (double r : scratch)
            v += r;
        return v;
    }

private:
    std::span<const double> rho_;
    std::span<const double> sens_;
    double exponent_;
    double move_;
};

/// Finds μ so that Σρ' = ρ0 within tol·ρ0 from below. The volume is
/// non-increasing in μ. Returns the feasible side of the bracket.
inline density_update solve_multiplier(const multiplicative_update& upd, double target,
                                       double tol, double sign)
{
    density_field scratch;
    double lo = 1e-12;
    double hi = 1e12;
    constexpr double limit_lo = 1e-300;
    constexpr double limit_hi = 1e300;

    while (upd.volume(hi, scratch) > target) {
        if (hi >= limit_hi)
            throw infeasible_constraint("volume constraint cannot be met within the move limits");
        hi = std::min(hi * 1e3, limit_hi);
    }
    while (upd.volume(lo, scratch) <= target && lo > limit_lo)
        lo = std::max(lo * 1e-3, limit_lo);

    density_update out;
    if (upd.volume(lo, scratch) <= target) {
        // Constraint inactive: the largest admissible update already fits.
        out.constraint_active = false;
        out.lambda = sign * lo;
        upd.evaluate(lo, out.rho);
        return out;
    }

    for (int it = 0; it < 400; ++it) {
        const double v_hi = upd.volume(hi, scratch);
        if (target - v_hi <= tol * target)
            break;
        const double mid = std::sqrt(lo * hi);
        if (!(mid > lo && mid < hi))
            break;
        if (upd.volume(mid, scratch) > target)
            lo = mid;
        else
            hi = mid;
    }
    out.lambda = sign * hi;
    upd.evaluate(hi, out.rho);
    return out;
}

inline void check_update_inputs(std::span<const double> rho, std::span<const double> sens)
{
    if (rho.size() != sens.size())
        throw std::invalid_argument("density update: size mismatch");
    for (double s : sens)
        if (!(s <= 0.0))
            throw std::invalid_argument("density update: sensitivities must be <= 0");
}

inline double volume_target(const optimizer_config& cfg, std::size_t element_count)
{
    return cfg.volume_fraction * static_cast<double>(element_count);
}

} // namespace detail

/// Optimality-criteria step ρ' = (C_ρ/λ)^η ρ with λ < 0.
inline density_update oc_update(std::span<const double> rho, std::span<const double> sens,
                                const optimizer_config& cfg)
{
    cfg.validate();
    detail::check_update_inputs(rho, sens);
    const detail::multiplicative_update upd(rho, sens, cfg.oc_exponent, cfg.move_limit);
    return detail::solve_multiplier(upd, detail::volume_target(cfg, rho.size()),
                                    cfg.bisection_tolerance, -1.0);
}

/// CONLIN step ρ' = (−C_ρ/λ)^{1/2} ρ with λ > 0.
inline density_update conlin_update(std::span<const double> rho, std::span<const double> sens,
                                    const optimizer_config& cfg)
{
    cfg.validate();
    detail::check_update_inputs(rho, sens);
    const detail::multiplicative_update upd(rho, sens, 0.5, cfg.move_limit);
    return detail::solve_multiplier(upd, detail::volume_target(cfg, rho.size()),
                                    cfg.bisection_tolerance, 1.0);
}

/// Densities strictly below the cutoff become zero.
inline density_field threshold(std::span<const double> rho, double cutoff)
{
    if (!(cutoff >= 0.0 && cutoff < 1.0))
        throw std::invalid_argument("threshold: cutoff must lie in [0, 1)");
    density_field out(rho.begin(), rho.end());
    for (double& r : out)
        if (r < cutoff)
            r = 0.0;
    return out;
}

// --------------------------------------------------------------------------

struct problem {
    mesh grid{1, 1, 1.0, 1.0};
    material mat;
    boundary_conditions bc;
    solver_config solver;
    optimizer_config optimizer;
    /// Uniform volume_fraction when empty.
    density_field initial_density;
};

enum class optimization_status { converged, max_iterations };

inline const char* to_string(optimization_status s)
{
    return s == optimization_status::converged ? "converged" : "max_iterations";
}

struct iteration_record {
    /// Compliance of the analysed design.
    double compliance = 0.0;
    /// Multiplier from the update that followed the analysis.
    double lambda = 0.0;
    double lagrangian = 0.0;
    /// Σρ of the analysed design.
    double volume = 0.0;
    std::size_t inner_iterations = 0;
    std::size_t cumulative_inner_iterations = 0;
    solve_status solver_status = solve_status::converged;
    density_field density;
};

struct optimization_history {
    std::vector<iteration_record> iterations;
    optimization_status status = optimization_status::max_iterations;
    /// Last analysed design and its full-length displacement.
    density_field final_density;
    real_vector final_displacement;

    double final_compliance() const { return iterations.back().compliance; }
    std::size_t total_inner_iterations() const
    {
        return iterations.empty() ? 0 : iterations.back().cumulative_inner_iterations;
    }
};

struct analysis_result {
    real_vector displacement;
    real_vector load;
    solve_report report;
};

/// Assemble, eliminate supports, solve from x0 = 0, scatter back.
inline analysis_result analyze(const problem& pb, std::span<const double> rho)
{
    const auto a = assemble(pb.grid, pb.mat, rho);
    auto b = build_load(pb.grid, pb.bc);
    const auto sys = apply_dirichlet(a, b, pb.bc);
    auto rep = solve(sys.matrix, sys.rhs, pb.solver);
    auto x = scatter_solution(sys, rep.x, pb.grid.dof_count());
    return {std::move(x), std::move(b), std::move(rep)};
}

inline optimization_history optimize(const problem& pb)
{
    pb.mat.validate();
    pb.solver.validate();
    pb.optimizer.validate();
    pb.bc.validate(pb.grid.dof_count());
    const auto& cfg = pb.optimizer;
    const std::size_t ne = pb.grid.element_count();
    const double target = detail::volume_target(cfg, ne);

    density_field rho = pb.initial_density.empty() ? density_field(ne, cfg.volume_fraction)
                                                   : pb.initial_density;
    check_density(rho, ne);

    optimization_history hist;
    std::size_t cumulative = 0;
    std::optional<double> previous_lagrangian;

    for (std::size_t t = 0; t < cfg.max_outer_iterations; ++t) {
        auto res = analyze(pb, rho);
        const double c = compliance(res.displacement, res.load);
        const auto sens = sensitivity(pb.grid, pb.mat, rho, res.displacement);
        auto upd = cfg.rule == update_rule::oc ? oc_update(rho, sens, cfg)
                                               : conlin_update(rho, sens, cfg);
        auto next = threshold(upd.rho, cfg.threshold_cutoff);

        double vol = 0.0;
        for (double r : rho)
            vol += r;
        double next_vol = 0.0;
        for (double r : next)
            next_vol += r;

        iteration_record rec;
        rec.compliance = c;
        rec.lambda = upd.lambda;
        rec.lagrangian = c + upd.lambda * (next_vol - target);
        rec.volume = vol;
        rec.inner_iterations = res.report.iterations;
        cumulative += res.report.iterations;
        rec.cumulative_inner_iterations = cumulative;
        rec.solver_status = res.report.status;
        rec.density = rho;
        hist.iterations.push_back(std::move(rec));

        hist.final_density = rho;
        hist.final_displacement = std::move(res.displacement);

        const double l = hist.iterations.back().lagrangian;
        if (previous_lagrangian && std::abs(l - *previous_lagrangian) < cfg.lagrangian_tolerance) {
            hist.status = optimization_status::converged;
            return hist;
        }
        previous_lagrangian = l;
        rho = std::move(next);
    }
    hist.status = optimization_status::max_iterations;
    return hist;
}

} // namespace topokry
