#pragma once

// Random instances and small helpers shared by the test binaries.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include <topokry/linalg.hpp>

namespace testing_support {

using topokry::dense_matrix;
using topokry::real_vector;
using topokry::sparse_sym_matrix;

inline real_vector random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0,
                                 double hi = 1.0)
{
    std::uniform_real_distribution<double> u(lo, hi);
    real_vector v(n);
    for (auto& x : v)
        x = u(rng);
    return v;
}

/// Haar-ish orthogonal matrix from the QR of a Gaussian matrix.
inline dense_matrix random_orthogonal(std::size_t n, std::mt19937_64& rng)
{
    std::normal_distribution<double> g;
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            m(i, j) = g(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    Eigen::MatrixXd q = qr.householderQ();
    dense_matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            out(i, j) = q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    return out;
}

/// Q diag(lambda) Qᵀ, symmetrized exactly.
inline dense_matrix from_spectrum(const dense_matrix& q, const std::vector<double>& lambda)
{
    const std::size_t n = q.rows();
    dense_matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k)
                s += q(i, k) * lambda[k] * q(j, k);
            a(i, j) = s;
            a(j, i) = s;
        }
    return a;
}

struct planted {
    dense_matrix a;
    dense_matrix q;
    std::vector<double> lambda;
    std::size_t rank = 0;

    /// Columns 0..rank-1 of q span R(A).
    real_vector range_part(std::span<const double> v) const { return project(v, 0, rank); }
    real_vector null_part(std::span<const double> v) const { return project(v, rank, q.cols()); }

    real_vector project(std::span<const double> v, std::size_t c0, std::size_t c1) const
    {
        real_vector out(v.size(), 0.0);
        for (std::size_t k = c0; k < c1; ++k) {
            double c = 0.0;
            for (std::size_t i = 0; i < v.size(); ++i)
                c += q(i, k) * v[i];
            for (std::size_t i = 0; i < v.size(); ++i)
                out[i] += c * q(i, k);
        }
        return out;
    }
};

/// Symmetric PSD with `nullity` planted zero eigenvalues and the rest in [lo, hi].
/// Q Λ Qᵀ is formed in floating point, so the planted zeros come out near
/// 1e-14 rather than exactly zero.
inline planted random_psd(std::size_t n, std::size_t nullity, std::mt19937_64& rng,
                          double lo = 1.0, double hi = 100.0)
{
    planted p;
    p.q = random_orthogonal(n, rng);
    p.rank = n - nullity;
    std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
    p.lambda.assign(n, 0.0);
    for (std::size_t k = 0; k < p.rank; ++k)
        p.lambda[k] = std::exp(u(rng));
    p.a = from_spectrum(p.q, p.lambda);
    return p;
}

/// GᵀG for a random (n − nullity) × n integer G with entries in [-2, 2].
/// Every entry is an exact integer, so A is singular in floating point too,
/// with a null space in general position.
inline dense_matrix integer_gram(std::size_t n, std::size_t nullity, std::mt19937_64& rng)
{
    std::uniform_int_distribution<int> u(-2, 2);
    const std::size_t r = n - nullity;
    std::vector<int> g(r * n);
    for (auto& v : g)
        v = u(rng);
    dense_matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            long s = 0;
            for (std::size_t k = 0; k < r; ++k)
                s += g[k * n + i] * g[k * n + j];
            a(i, j) = static_cast<double>(s);
        }
    return a;
}

inline planted random_spd(std::size_t n, std::mt19937_64& rng, double lo = 1.0, double hi = 100.0)
{
    return random_psd(n, 0, rng, lo, hi);
}

inline real_vector sub(std::span<const double> a, std::span<const double> b)
{
    real_vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        out[i] = a[i] - b[i];
    return out;
}

inline double rel_diff(std::span<const double> a, std::span<const double> b)
{
    const double nb = topokry::norm2(b);
    const double d = topokry::norm2(sub(a, b));
    return nb > 0.0 ? d / nb : d;
}

/// Sparse symmetric matrix with roughly `density` off-diagonal fill.
inline sparse_sym_matrix random_sparse_symmetric(std::size_t n, double density,
                                                 std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::bernoulli_distribution keep(density);
    std::vector<topokry::triplet> t;
    for (std::size_t i = 0; i < n; ++i) {
        t.push_back({i, i, u(rng)});
        for (std::size_t j = i + 1; j < n; ++j)
            if (keep(rng)) {
                const double v = u(rng);
                t.push_back({i, j, v});
                t.push_back({j, i, v});
            }
    }
    return sparse_sym_matrix::from_triplets(n, t);
}

} // namespace testing_support
