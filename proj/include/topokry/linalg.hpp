#pragma once

// Sparse symmetric matrices, dense vectors and the small dense solvers the
// test suites use as oracles.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace topokry {

using real_vector = std::vector<double>;

/// Dense oracles are test machinery; larger systems are rejected.
inline constexpr std::size_t dense_oracle_limit = 2000;

/// Default relative rank cutoff shared by pseudo_solve and range_basis.
inline constexpr double default_rank_tol = 1e-10;

class singular_matrix_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Throws std::invalid_argument when any component is NaN or infinite.
inline void check_finite(std::span<const double> v, const char* what = "vector")
{
    for (double c : v)
        if (!std::isfinite(c))
            throw std::invalid_argument(std::string(what) + " has non-finite components");
}

inline double dot(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size())
        throw std::invalid_argument("dot: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        s += x[i] * y[i];
    return s;
}

inline double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y)
{
    for (std::size_t i = 0; i < x.size(); ++i)
        y[i] += alpha * x[i];
}

/// Anything the Krylov solvers can iterate on.
template <class Op>
concept linear_operator = requires(const Op& op, std::span<const double> x, std::span<double> y) {
    { op.size() } -> std::convertible_to<std::size_t>;
    op.apply(x, y);
    { op.diagonal() } -> std::convertible_to<real_vector>;
};

// --------------------------------------------------------------------------

class dense_matrix {
public:
    dense_matrix() = default;
    dense_matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), values_(rows * cols, fill)
    {
    }
    dense_matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
        : rows_(rows), cols_(cols), values_(std::move(values))
    {
        if (values_.size() != rows_ * cols_)
            throw std::invalid_argument("dense_matrix: value count does not match shape");
    }

    static dense_matrix identity(std::size_t n)
    {
        dense_matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i)
            m(i, i) = 1.0;
        return m;
    }

    static dense_matrix diagonal_matrix(std::span<const double> d)
    {
        dense_matrix m(d.size(), d.size());
        for (std::size_t i = 0; i < d.size(); ++i)
            m(i, i) = d[i];
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return rows_; }

    double& operator()(std::size_t i, std::size_t j) { return values_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return values_[i * cols_ + j]; }

    std::span<const double> values() const { return values_; }

    void apply(std::span<const double> x, std::span<double> y) const
    {
        if (x.size() != cols_ || y.size() != rows_)
            throw std::invalid_argument("dense_matrix::apply: dimension mismatch");
        for (std::size_t i = 0; i < rows_; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < cols_; ++j)
                s += (*this)(i, j) * x[j];
            y[i] = s;
        }
    }

    real_vector operator*(std::span<const double> x) const
    {
        real_vector y(rows_);
        apply(x, y);
        return y;
    }

    real_vector diagonal() const
    {
        real_vector d(std::min(rows_, cols_));
        for (std::size_t i = 0; i < d.size(); ++i)
            d[i] = (*this)(i, i);
        return d;
    }

    dense_matrix transpose() const
    {
        dense_matrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j)
                t(j, i) = (*this)(i, j);
        return t;
    }

    double max_abs() const
    {
        double m = 0.0;
        for (double v : values_)
            m = std::max(m, std::abs(v));
        return m;
    }

    bool is_symmetric(double rel_tol = 1e-12) const
    {
        if (rows_ != cols_)
            return false;
        const double tol = rel_tol * max_abs();
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = i + 1; j < cols_; ++j)
                if (std::abs((*this)(i, j) - (*this)(j, i)) > tol)
                    return false;
        return true;
    }

    friend bool operator==(const dense_matrix&, const dense_matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

inline dense_matrix operator*(const dense_matrix& a, const dense_matrix& b)
{
    if (a.cols() != b.rows())
        throw std::invalid_argument("dense_matrix product: dimension mismatch");
    dense_matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0)
                continue;
            for (std::size_t j = 0; j < b.cols(); ++j)
                c(i, j) += aik * b(k, j);
        }
    return c;
}

// --------------------------------------------------------------------------

struct triplet {
    std::size_t row;
    std::size_t col;
    double value;
};

/// Symmetric sparse matrix in compressed row storage. The full pattern is
/// stored (both triangles); symmetry is checked on construction.
///
/// A dimension of zero is accepted: it is what remains after every DOF of a
/// structure has been constrained.
class sparse_sym_matrix {
public:
    sparse_sym_matrix() = default;

    /// Duplicate (row, col) entries are summed in input order, so a fixed
    /// triplet sequence gives bit-identical values.
    static sparse_sym_matrix from_triplets(std::size_t n, std::span<const triplet> entries,
                                           double symmetry_tol = 1e-12)
    {
        std::vector<std::size_t> counts(n + 1, 0);
        for (const auto& t : entries) {
            if (t.row >= n || t.col >= n)
                throw std::invalid_argument("sparse_sym_matrix: entry index out of range");
            ++counts[t.row + 1];
        }
        for (std::size_t i = 0; i < n; ++i)
            counts[i + 1] += counts[i];

        // Bucket by row keeping input order, then stable-sort each row by column.
        std::vector<std::size_t> order(entries.size());
        {
            auto next = counts;
            for (std::size_t k = 0; k < entries.size(); ++k)
                order[next[entries[k].row]++] = k;
        }

        sparse_sym_matrix m;
        m.n_ = n;
        m.row_ptr_.assign(n + 1, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto first = order.begin() + static_cast<std::ptrdiff_t>(counts[i]);
            auto last = order.begin() + static_cast<std::ptrdiff_t>(counts[i + 1]);
            std::stable_sort(first, last, [&](std::size_t a, std::size_t b) {
                return entries[a].col < entries[b].col;
            });
            for (auto it = first; it != last; ++it) {
                const auto& t = entries[*it];
                if (!m.col_idx_.empty() && m.col_idx_.size() > m.row_ptr_[i] &&
                    m.col_idx_.back() == t.col)
                    m.values_.back() += t.value;
                else {
                    m.col_idx_.push_back(t.col);
                    m.values_.push_back(t.value);
                }
            }
            m.row_ptr_[i + 1] = m.col_idx_.size();
        }
        check_finite(m.values_, "sparse_sym_matrix values");
        if (!m.symmetric(symmetry_tol))
            throw std::invalid_argument("sparse_sym_matrix: input is not symmetric");
        return m;
    }

    static sparse_sym_matrix from_dense(const dense_matrix& a, double symmetry_tol = 1e-12)
    {
        if (a.rows() != a.cols())
            throw std::invalid_argument("sparse_sym_matrix: dense input is not square");
        std::vector<triplet> t;
        for (std::size_t i = 0; i < a.rows(); ++i)
            for (std::size_t j = 0; j < a.cols(); ++j)
                if (a(i, j) != 0.0)
                    t.push_back({i, j, a(i, j)});
        return from_triplets(a.rows(), t, symmetry_tol);
    }

    static sparse_sym_matrix identity(std::size_t n)
    {
        std::vector<triplet> t;
        for (std::size_t i = 0; i < n; ++i)
            t.push_back({i, i, 1.0});
        return from_triplets(n, t);
    }

    std::size_t size() const { return n_; }
    std::size_t nonzeros() const { return values_.size(); }

    std::span<const std::size_t> row_ptr() const { return row_ptr_; }
    std::span<const std::size_t> col_idx() const { return col_idx_; }
    std::span<const double> values() const { return values_; }

    /// Stored value at (i, j), zero when the entry is not in the pattern.
    double at(std::size_t i, std::size_t j) const
    {
        auto first = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i]);
        auto last = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i + 1]);
        auto it = std::lower_bound(first, last, j);
        if (it == last || *it != j)
            return 0.0;
        return values_[static_cast<std::size_t>(it - col_idx_.begin())];
    }

    void apply(std::span<const double> x, std::span<double> y) const
    {
        if (x.size() != n_ || y.size() != n_)
            throw std::invalid_argument("spmv: dimension mismatch");
        for (std::size_t i = 0; i < n_; ++i) {
            double s = 0.0;
            for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
                s += values_[k] * x[col_idx_[k]];
            y[i] = s;
        }
    }

    real_vector diagonal() const
    {
        real_vector d(n_, 0.0);
        for (std::size_t i = 0; i < n_; ++i)
            d[i] = at(i, i);
        return d;
    }

    /// True when row i holds no nonzero value.
    bool row_is_zero(std::size_t i) const
    {
        for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
            if (values_[k] != 0.0)
                return false;
        return true;
    }

    double max_abs() const
    {
        double m = 0.0;
        for (double v : values_)
            m = std::max(m, std::abs(v));
        return m;
    }

    dense_matrix to_dense() const
    {
        dense_matrix d(n_, n_);
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
                d(i, col_idx_[k]) = values_[k];
        return d;
    }

private:
    bool symmetric(double rel_tol) const
    {
        const double tol = rel_tol * max_abs();
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
                if (std::abs(values_[k] - at(col_idx_[k], i)) > tol)
                    return false;
        return true;
    }

    std::size_t n_ = 0;
    std::vector<std::size_t> row_ptr_{0};
    std::vector<std::size_t> col_idx_;
    std::vector<double> values_;
};

/// y = A x
inline real_vector spmv(const sparse_sym_matrix& a, std::span<const double> x)
{
    if (x.size() != a.size())
        throw std::invalid_argument("spmv: dimension mismatch");
    real_vector y(a.size());
    a.apply(x, y);
    return y;
}

// --------------------------------------------------------------------------
// Dense oracles

/// Gaussian elimination with partial pivoting.
inline real_vector dense_solve(dense_matrix a, real_vector b)
{
    const std::size_t n = a.rows();
    if (a.cols() != n)
        throw std::invalid_argument("dense_solve: matrix is not square");
    if (b.size() != n)
        throw std::invalid_argument("dense_solve: dimension mismatch");
    if (n > dense_oracle_limit)
        throw std::invalid_argument("dense_solve: system exceeds the oracle size limit");

    const double pivot_floor = 1e-14 * a.max_abs();
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::abs(a(i, k)) > std::abs(a(piv, k)))
                piv = i;
        if (!(std::abs(a(piv, k)) > pivot_floor))
            throw singular_matrix_error("dense_solve: matrix is numerically singular");
        if (piv != k) {
            for (std::size_t j = 0; j < n; ++j)
                std::swap(a(k, j), a(piv, j));
            std::swap(b[k], b[piv]);
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            const double f = a(i, k) / a(k, k);
            if (f == 0.0)
                continue;
            for (std::size_t j = k; j < n; ++j)
                a(i, j) -= f * a(k, j);
            b[i] -= f * b[k];
        }
    }
    real_vector x(n);
    for (std::size_t ii = n; ii-- > 0;) {
        double s = b[ii];
        for (std::size_t j = ii + 1; j < n; ++j)
            s -= a(ii, j) * x[j];
        x[ii] = s / a(ii, ii);
    }
    return x;
}

/// Eigenpairs of a symmetric matrix, eigenvalues ascending; column k of
/// `vectors` belongs to `values[k]`.
struct symmetric_eigen {
    real_vector values;
    dense_matrix vectors;
};

inline symmetric_eigen eigen_symmetric(const dense_matrix& a)
{
    if (!a.is_symmetric())
        throw std::invalid_argument("symmetric eigendecomposition: matrix is not symmetric");
    if (a.rows() > dense_oracle_limit)
        throw std::invalid_argument("symmetric eigendecomposition: exceeds the oracle size limit");
    const auto n = static_cast<Eigen::Index>(a.rows());
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            m(i, j) = a(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("symmetric eigendecomposition did not converge");

    symmetric_eigen out{real_vector(a.rows()), dense_matrix(a.rows(), a.rows())};
    for (Eigen::Index k = 0; k < n; ++k) {
        out.values[static_cast<std::size_t>(k)] = es.eigenvalues()(k);
        for (Eigen::Index i = 0; i < n; ++i)
            out.vectors(static_cast<std::size_t>(i), static_cast<std::size_t>(k)) =
                es.eigenvectors()(i, k);
    }
    return out;
}

/// Minimum-norm least-squares solution A⁺b of a symmetric system.
/// Eigenvalues with |λ| <= rank_tol·|λ_max| are treated as zero.
inline real_vector pseudo_solve(const dense_matrix& a, std::span<const double> b,
                                double rank_tol = default_rank_tol)
{
    if (b.size() != a.rows())
        throw std::invalid_argument("pseudo_solve: dimension mismatch");
    const auto eig = eigen_symmetric(a);
    const std::size_t n = a.rows();
    double lmax = 0.0;
    for (double l : eig.values)
        lmax = std::max(lmax, std::abs(l));

    real_vector x(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        const double l = eig.values[k];
        if (!(std::abs(l) > rank_tol * lmax))
            continue;
        double c = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            c += eig.vectors(i, k) * b[i];
        c /= l;
        for (std::size_t i = 0; i < n; ++i)
            x[i] += c * eig.vectors(i, k);
    }
    return x;
}

} // namespace topokry
