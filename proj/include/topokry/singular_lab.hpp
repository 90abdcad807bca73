#pragma once

// Instrumentation for singular symmetric systems: orthonormal bases of R(A)
// and N(A), the block ("standard") form QᵀAQ, per-iteration component traces
// of a Krylov run, and the CR residual-reduction bound.
//
// Everything here is dense and test-scale (n <= dense_oracle_limit).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "krylov.hpp"
#include "linalg.hpp"

namespace topokry {

class decomposition_inconsistency : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class precondition_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct range_decomposition {
    std::size_t rank = 0;
    /// n × r, orthonormal basis of R(A)
    dense_matrix q1;
    /// n × (n−r), orthonormal basis of R(A)⊥ (= N(A) for symmetric A)
    dense_matrix q2;
    /// Q1ᵀ A Q1
    dense_matrix a11;
    /// Eigenvalues matching the columns of [Q1 Q2].
    real_vector eigenvalues;

    std::size_t dimension() const { return q1.rows(); }

    /// [Q1 Q2]
    dense_matrix q() const
    {
        const std::size_t n = dimension();
        dense_matrix out(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < q1.cols(); ++k)
                out(i, k) = q1(i, k);
            for (std::size_t k = 0; k < q2.cols(); ++k)
                out(i, rank + k) = q2(i, k);
        }
        return out;
    }
};

inline double frobenius(const dense_matrix& a)
{
    double s = 0.0;
    for (double v : a.values())
        s += v * v;
    return std::sqrt(s);
}

/// Bases of R(A) and its complement from the symmetric eigendecomposition.
/// Eigenvectors with |λ| > rank_tol·|λ_max| span R(A); columns are ordered
/// by decreasing |λ|.
inline range_decomposition range_basis(const dense_matrix& a, double rank_tol = default_rank_tol)
{
    const auto eig = eigen_symmetric(a);
    const std::size_t n = a.rows();

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        return std::abs(eig.values[i]) > std::abs(eig.values[j]);
    });
    const double lmax = n > 0 ? std::abs(eig.values[order[0]]) : 0.0;

    range_decomposition dec;
    dec.rank = static_cast<std::size_t>(std::count_if(
        eig.values.begin(), eig.values.end(),
        [&](double l) { return std::abs(l) > rank_tol * lmax; }));
    dec.q1 = dense_matrix(n, dec.rank);
    dec.q2 = dense_matrix(n, n - dec.rank);
    dec.eigenvalues.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t src = order[k];
        dec.eigenvalues[k] = eig.values[src];
        for (std::size_t i = 0; i < n; ++i) {
            if (k < dec.rank)
                dec.q1(i, k) = eig.vectors(i, src);
            else
                dec.q2(i, k - dec.rank) = eig.vectors(i, src);
        }
    }
    dec.a11 = dec.q1.transpose() * a * dec.q1;
    return dec;
}

inline range_decomposition range_basis(const sparse_sym_matrix& a,
                                       double rank_tol = default_rank_tol)
{
    return range_basis(a.to_dense(), rank_tol);
}

/// Ã = QᵀAQ. For symmetric A the off-diagonal blocks and the trailing block
/// must vanish to 1e-10·‖A‖_F.
inline dense_matrix standard_form(const dense_matrix& a, const range_decomposition& dec)
{
    if (a.rows() != dec.dimension())
        throw std::invalid_argument("standard_form: dimension mismatch");
    const auto q = dec.q();
    const dense_matrix t = q.transpose() * a * q;

    const std::size_t n = a.rows();
    const std::size_t r = dec.rank;
    const double tol = 1e-10 * frobenius(a);
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i >= r || j >= r)
                off += t(i, j) * t(i, j);
    if (std::sqrt(off) > tol)
        throw decomposition_inconsistency("standard_form: off-diagonal or null blocks do not vanish");
    return t;
}

inline dense_matrix standard_form(const sparse_sym_matrix& a, const range_decomposition& dec)
{
    return standard_form(a.to_dense(), dec);
}

/// Q Qᵀ v for an orthonormal Q (n × k).
inline real_vector project(const dense_matrix& q, std::span<const double> v)
{
    if (v.size() != q.rows())
        throw std::invalid_argument("project: dimension mismatch");
    real_vector c(q.cols(), 0.0);
    for (std::size_t i = 0; i < q.rows(); ++i)
        for (std::size_t k = 0; k < q.cols(); ++k)
            c[k] += q(i, k) * v[i];
    real_vector out(q.rows(), 0.0);
    for (std::size_t i = 0; i < q.rows(); ++i)
        for (std::size_t k = 0; k < q.cols(); ++k)
            out[i] += q(i, k) * c[k];
    return out;
}

inline real_vector project_range(const range_decomposition& dec, std::span<const double> v)
{
    return project(dec.q1, v);
}

inline real_vector project_null(const range_decomposition& dec, std::span<const double> v)
{
    return project(dec.q2, v);
}

/// Per-iteration norms of the R(A) (∥) and R(A)⊥ (⊥) components.
struct component_traces {
    std::vector<double> residual_range;
    std::vector<double> residual_null;
    std::vector<double> iterate_range;
    std::vector<double> iterate_null;
};

inline component_traces decompose_history(const solve_report& rep, const range_decomposition& dec)
{
    if (rep.iterates.empty() || rep.residuals.size() != rep.iterates.size())
        throw std::invalid_argument("decompose_history: report has no recorded iterates");
    component_traces out;
    for (std::size_t k = 0; k < rep.iterates.size(); ++k) {
        const auto& x = rep.iterates[k];
        const auto& r = rep.residuals[k];
        if (x.size() != dec.dimension() || r.size() != dec.dimension())
            throw std::invalid_argument("decompose_history: dimension mismatch");
        out.residual_range.push_back(norm2(project_range(dec, r)));
        out.residual_null.push_back(norm2(project_null(dec, r)));
        out.iterate_range.push_back(norm2(project_range(dec, x)));
        out.iterate_null.push_back(norm2(project_null(dec, x)));
    }
    return out;
}

/// 1 − λ_min(M)² / λ_max(AᵀA) with M = (A + Aᵀ)/2, which must be positive
/// definite.
inline double cr_rate_bound(const dense_matrix& a)
{
    if (a.rows() != a.cols())
        throw std::invalid_argument("cr_rate_bound: matrix is not square");
    const std::size_t n = a.rows();
    dense_matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            m(i, j) = 0.5 * (a(i, j) + a(j, i));
    const auto em = eigen_symmetric(m);
    const double lmin = em.values.front();
    if (!(lmin > 0.0))
        throw precondition_error("cr_rate_bound: symmetric part is not positive definite");

    dense_matrix ata = a.transpose() * a;
    // Symmetrize against rounding in the product.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = 0.5 * (ata(i, j) + ata(j, i));
            ata(i, j) = v;
            ata(j, i) = v;
        }
    const double lmax = eigen_symmetric(ata).values.back();
    return 1.0 - lmin * lmin / lmax;
}

/// True iff ‖r_{k+1}‖²/‖r_k‖² <= bound + 1e-10 for every consecutive pair.
inline bool cr_bound_check(const dense_matrix& a, std::span<const double> residual_history)
{
    const double bound = cr_rate_bound(a);
    for (std::size_t k = 0; k + 1 < residual_history.size(); ++k) {
        const double rk = residual_history[k];
        if (rk == 0.0)
            continue;
        const double ratio = (residual_history[k + 1] * residual_history[k + 1]) / (rk * rk);
        if (ratio > bound + 1e-10)
            return false;
    }
    return true;
}

} // namespace topokry
