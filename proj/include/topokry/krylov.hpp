#pragma once

// Conjugate Gradient and Conjugate Residual solvers for symmetric positive
// semidefinite systems. Both keep iterating on singular matrices; a collapse
// of the step-length denominator ends the run with the current iterate
// instead of an error.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "linalg.hpp"

namespace topokry {

enum class krylov_method { cg, cr };
/// Jacobi preconditioning is applied as symmetric diagonal scaling: the
/// solvers iterate on D^{-1/2} A D^{-1/2} y = D^{-1/2} b and return
/// x = D^{-1/2} y, with D⁻¹ the Jacobi scaling values.
enum class preconditioning { none, jacobi };
enum class solve_status { converged, max_iterations, stagnated_least_squares };

inline const char* to_string(krylov_method m) { return m == krylov_method::cg ? "cg" : "cr"; }
inline const char* to_string(preconditioning p)
{
    return p == preconditioning::none ? "none" : "jacobi";
}
inline const char* to_string(solve_status s)
{
    switch (s) {
    case solve_status::converged: return "converged";
    case solve_status::max_iterations: return "max_iterations";
    case solve_status::stagnated_least_squares: return "stagnated_least_squares";
    }
    return "unknown";
}

struct solver_config {
    krylov_method method = krylov_method::cg;
    double rel_tolerance = 1e-8;
    std::size_t max_iterations = 1000;
    /// Relative threshold on the α denominator. CG stops when
    /// (p,Ap) <= tol·s·‖p‖², CR when (Ap,Ap) <= (tol·s·‖p‖)², where s is the
    /// largest diagonal magnitude of the (scaled) operator.
    double breakdown_tolerance = 1e-14;
    preconditioning precond = preconditioning::none;
    /// Keep every x_k and r_k in the report. Test-scale only.
    bool record_iterates = false;

    void validate() const
    {
        if (!(rel_tolerance > 0.0))
            throw std::invalid_argument("solver_config: rel_tolerance must be positive");
        if (max_iterations < 1)
            throw std::invalid_argument("solver_config: max_iterations must be at least 1");
        if (!(breakdown_tolerance > 0.0))
            throw std::invalid_argument("solver_config: breakdown_tolerance must be positive");
    }

    friend bool operator==(const solver_config&, const solver_config&) = default;
};

struct solve_report {
    real_vector x;
    solve_status status = solve_status::max_iterations;
    std::size_t iterations = 0;
    /// ‖r_k‖ of the unscaled system, k = 0..iterations.
    std::vector<double> residual_history;
    double final_relative_residual = 0.0;
    /// Filled only with solver_config::record_iterates.
    std::vector<real_vector> iterates;
    std::vector<real_vector> residuals;
};

/// Raised when an iteration produces NaN or Inf.
class numerical_failure : public std::runtime_error {
public:
    numerical_failure(const std::string& what, std::size_t iteration)
        : std::runtime_error(what + " at iteration " + std::to_string(iteration)),
          iteration_(iteration)
    {
    }
    std::size_t iteration() const { return iteration_; }

private:
    std::size_t iteration_;
};

class invalid_matrix_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Jacobi scaling values d_i = 1/A(i,i). DOFs whose diagonal is numerically
/// zero (void regions) get d_i = 1 and pass through unscaled.
struct jacobi_scaling {
    real_vector d;
};

inline jacobi_scaling make_jacobi(std::span<const double> diag,
                                         double breakdown_tolerance = 1e-14)
{
    double max_diag = 0.0;
    for (std::size_t i = 0; i < diag.size(); ++i) {
        if (diag[i] < 0.0)
            throw invalid_matrix_error("jacobi_preconditioner: negative diagonal entry at " +
                                       std::to_string(i));
        max_diag = std::max(max_diag, diag[i]);
    }
    jacobi_scaling pc{real_vector(diag.size(), 1.0)};
    for (std::size_t i = 0; i < diag.size(); ++i)
        if (diag[i] > breakdown_tolerance * max_diag && diag[i] > 0.0)
            pc.d[i] = 1.0 / diag[i];
    return pc;
}

template <linear_operator Op>
jacobi_scaling jacobi_preconditioner(const Op& a, double breakdown_tolerance = 1e-14)
{
    const real_vector diag = a.diagonal();
    return make_jacobi(diag, breakdown_tolerance);
}

namespace detail {

/// S A S with S = diag(s).
template <linear_operator Op>
class scaled_operator {
public:
    scaled_operator(const Op& a, std::span<const double> s) : a_(a), s_(s), tmp_(s.size()) {}

    std::size_t size() const { return a_.size(); }

    void apply(std::span<const double> x, std::span<double> y) const
    {
        for (std::size_t i = 0; i < x.size(); ++i)
            tmp_[i] = s_[i] * x[i];
        a_.apply(tmp_, y);
        for (std::size_t i = 0; i < y.size(); ++i)
            y[i] *= s_[i];
    }

    real_vector diagonal() const
    {
        real_vector d = a_.diagonal();
        for (std::size_t i = 0; i < d.size(); ++i)
            d[i] *= s_[i] * s_[i];
        return d;
    }

private:
    const Op& a_;
    std::span<const double> s_;
    mutable real_vector tmp_;
};

/// Maps the working variables back to the caller's system:
/// x = x_scale ∘ y and r = r̂ / r_scale (empty spans mean identity).
struct unscaler {
    std::span<const double> x_scale;
    std::span<const double> r_scale;

    real_vector x(std::span<const double> y) const
    {
        real_vector out(y.begin(), y.end());
        if (!x_scale.empty())
            for (std::size_t i = 0; i < out.size(); ++i)
                out[i] *= x_scale[i];
        return out;
    }

    double residual_norm(std::span<const double> r) const
    {
        if (r_scale.empty())
            return norm2(r);
        double acc = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i) {
            const double v = r[i] / r_scale[i];
            acc += v * v;
        }
        return std::sqrt(acc);
    }

    real_vector residual(std::span<const double> r) const
    {
        real_vector out(r.begin(), r.end());
        if (!r_scale.empty())
            for (std::size_t i = 0; i < out.size(); ++i)
                out[i] /= r_scale[i];
        return out;
    }
};

inline void require_finite(std::span<const double> v, const char* what, std::size_t k)
{
    for (double c : v)
        if (!std::isfinite(c))
            throw numerical_failure(std::string("non-finite ") + what, k);
}

/// Relative rounding level of an inner product (r, Ar) against ‖A‖‖r‖².
inline constexpr double roundoff_floor = 16.0 * std::numeric_limits<double>::epsilon();

inline double operator_scale(std::span<const double> diag)
{
    double s = 0.0;
    for (double d : diag)
        s = std::max(s, std::abs(d));
    return s > 0.0 ? s : 1.0;
}

class recorder {
public:
    recorder(solve_report& rep, const unscaler& u, bool keep) : rep_(rep), u_(u), keep_(keep) {}

    double push(std::span<const double> y, std::span<const double> r)
    {
        const double rn = u_.residual_norm(r);
        rep_.residual_history.push_back(rn);
        if (keep_) {
            rep_.iterates.push_back(u_.x(y));
            rep_.residuals.push_back(u_.residual(r));
        }
        return rn;
    }

private:
    solve_report& rep_;
    const unscaler& u_;
    bool keep_;
};

template <linear_operator Op>
solve_report cg_iterate(const Op& a, std::span<const double> b, real_vector y,
                        const solver_config& cfg, const unscaler& u, double b_norm)
{
    const std::size_t n = a.size();
    const double scale = operator_scale(a.diagonal());
    const double target = cfg.rel_tolerance * b_norm;

    solve_report rep;
    recorder rec(rep, u, cfg.record_iterates);

    real_vector r(n), ap(n);
    a.apply(y, r);
    for (std::size_t i = 0; i < n; ++i)
        r[i] = b[i] - r[i];
    real_vector p = r;
    double rn = rec.push(y, r);

    for (;;) {
        if (rn <= target) {
            rep.status = solve_status::converged;
            break;
        }
        if (rep.iterations >= cfg.max_iterations) {
            rep.status = solve_status::max_iterations;
            break;
        }
        a.apply(p, ap);
        const double pap = dot(p, ap);
        const double pp = dot(p, p);
        if (!std::isfinite(pap))
            throw numerical_failure("non-finite (p, Ap)", rep.iterations);
        if (!(pap > cfg.breakdown_tolerance * scale * pp)) {
            rep.status = solve_status::stagnated_least_squares;
            break;
        }
        const double alpha = dot(r, p) / pap;
        axpy(alpha, p, y);
        axpy(-alpha, ap, r);
        const double beta = -dot(r, ap) / pap;
        for (std::size_t i = 0; i < n; ++i)
            p[i] = r[i] + beta * p[i];

        ++rep.iterations;
        require_finite(y, "iterate", rep.iterations);
        require_finite(r, "residual", rep.iterations);
        rn = rec.push(y, r);
    }

    rep.x = u.x(y);
    rep.final_relative_residual = b_norm > 0.0 ? rn / b_norm : rn;
    return rep;
}

template <linear_operator Op>
solve_report cr_iterate(const Op& a, std::span<const double> b, real_vector y,
                        const solver_config& cfg, const unscaler& u, double b_norm)
{
    const std::size_t n = a.size();
    const double scale = operator_scale(a.diagonal());
    const double target = cfg.rel_tolerance * b_norm;
    const double floor = cfg.breakdown_tolerance * scale;

    solve_report rep;
    recorder rec(rep, u, cfg.record_iterates);

    real_vector r(n), ap(n), ar(n);
    a.apply(y, r);
    for (std::size_t i = 0; i < n; ++i)
        r[i] = b[i] - r[i];
    real_vector p = r;
    a.apply(p, ap);
    double rn = rec.push(y, r);
    // ‖A r‖ for the least-squares test; p0 = r0, so A r0 = A p0.
    ar = ap;
    double arn = norm2(ar);
    // Running lower bound on ‖A‖.
    double anorm = scale;

    for (;;) {
        if (rn <= target) {
            rep.status = solve_status::converged;
            break;
        }
        if (rep.iterations >= cfg.max_iterations) {
            rep.status = solve_status::max_iterations;
            break;
        }
        // b ∉ R(A): ‖r‖ cannot reach the target, but A r vanishes at the
        // least-squares point. Iterating past it only amplifies rounding.
        // (r, Ar) is the step numerator; once it drops to the rounding level
        // of its own evaluation the step direction is noise.
        const double rr = dot(r, r);
        if (arn <= cfg.rel_tolerance * anorm * std::sqrt(rr) ||
            dot(r, ar) <= roundoff_floor * anorm * rr) {
            rep.status = solve_status::stagnated_least_squares;
            break;
        }
        const double apap = dot(ap, ap);
        const double pp = dot(p, p);
        if (!std::isfinite(apap))
            throw numerical_failure("non-finite (Ap, Ap)", rep.iterations);
        if (!(apap > floor * floor * pp)) {
            rep.status = solve_status::stagnated_least_squares;
            break;
        }
        anorm = std::max(anorm, std::sqrt(apap / pp));
        const double alpha = dot(r, ap) / apap;
        axpy(alpha, p, y);
        axpy(-alpha, ap, r);
        a.apply(r, ar);
        arn = norm2(ar);
        const double beta = -dot(ar, ap) / apap;
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = r[i] + beta * p[i];
            ap[i] = ar[i] + beta * ap[i];
        }

        ++rep.iterations;
        require_finite(y, "iterate", rep.iterations);
        require_finite(r, "residual", rep.iterations);
        rn = rec.push(y, r);
    }

    rep.x = u.x(y);
    rep.final_relative_residual = b_norm > 0.0 ? rn / b_norm : rn;
    return rep;
}

template <linear_operator Op>
solve_report krylov_solve(const Op& a, std::span<const double> b, std::span<const double> x0,
                          const solver_config& cfg)
{
    cfg.validate();
    const std::size_t n = a.size();
    if (b.size() != n || x0.size() != n)
        throw std::invalid_argument("krylov solve: dimension mismatch");
    check_finite(b, "right-hand side");
    check_finite(x0, "initial guess");
    const double b_norm = norm2(b);

    auto run = [&](const auto& op, std::span<const double> rhs, real_vector y0,
                   const unscaler& u) {
        return cfg.method == krylov_method::cg ? cg_iterate(op, rhs, std::move(y0), cfg, u, b_norm)
                                               : cr_iterate(op, rhs, std::move(y0), cfg, u, b_norm);
    };

    if (cfg.precond == preconditioning::none)
        return run(a, b, real_vector(x0.begin(), x0.end()), unscaler{});

    const auto pc = jacobi_preconditioner(a, cfg.breakdown_tolerance);
    // Split scaling: (S A S) y = S b with S = D^{-1/2}, x = S y, r̂ = S r.
    real_vector s(n), sb(n), y0(n);
    for (std::size_t i = 0; i < n; ++i) {
        s[i] = std::sqrt(pc.d[i]);
        sb[i] = s[i] * b[i];
        y0[i] = x0[i] / s[i];
    }
    const scaled_operator<Op> scaled(a, s);
    return run(scaled, sb, std::move(y0), unscaler{s, s});
}

} // namespace detail

/// Conjugate Gradient. Ignores cfg.method.
template <linear_operator Op>
solve_report cg_solve(const Op& a, std::span<const double> b, std::span<const double> x0,
                      solver_config cfg)
{
    cfg.method = krylov_method::cg;
    return detail::krylov_solve(a, b, x0, cfg);
}

/// Conjugate Residual. Ignores cfg.method.
template <linear_operator Op>
solve_report cr_solve(const Op& a, std::span<const double> b, std::span<const double> x0,
                      solver_config cfg)
{
    cfg.method = krylov_method::cr;
    return detail::krylov_solve(a, b, x0, cfg);
}

/// Dispatches on cfg.method, starting from x0 = 0.
template <linear_operator Op>
solve_report solve(const Op& a, std::span<const double> b, const solver_config& cfg)
{
    const real_vector x0(a.size(), 0.0);
    return detail::krylov_solve(a, b, x0, cfg);
}

} // namespace topokry
