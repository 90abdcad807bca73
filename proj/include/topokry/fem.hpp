#pragma once

// Uniform quadrilateral mesh, bilinear plane-strain element and SIMP-scaled
// global assembly.
//
// Numbering: node (i, j) with i along x and j along y has index
// j·(nx+1) + i; element (ex, ey) has index ey·nx + ex. Each node carries the
// DOFs (2·node, 2·node+1) = (ux, uy). Element corner nodes run
// counterclockwise from the lower-left corner.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "linalg.hpp"

namespace topokry {

class mesh {
public:
    mesh(std::size_t nx, std::size_t ny, double width, double height)
        : nx_(nx), ny_(ny), width_(width), height_(height)
    {
        if (nx < 1 || ny < 1)
            throw std::invalid_argument("mesh: element counts must be at least 1");
        if (!(width > 0.0) || !(height > 0.0))
            throw std::invalid_argument("mesh: domain dimensions must be positive");
    }

    std::size_t nx() const { return nx_; }
    std::size_t ny() const { return ny_; }
    double width() const { return width_; }
    double height() const { return height_; }
    double element_width() const { return width_ / static_cast<double>(nx_); }
    double element_height() const { return height_ / static_cast<double>(ny_); }

    std::size_t element_count() const { return nx_ * ny_; }
    std::size_t node_count() const { return (nx_ + 1) * (ny_ + 1); }
    std::size_t dof_count() const { return 2 * node_count(); }

    std::size_t node(std::size_t i, std::size_t j) const { return j * (nx_ + 1) + i; }
    std::size_t element(std::size_t ex, std::size_t ey) const { return ey * nx_ + ex; }

    std::array<std::size_t, 4> element_nodes(std::size_t e) const
    {
        const std::size_t ex = e % nx_;
        const std::size_t ey = e / nx_;
        return {node(ex, ey), node(ex + 1, ey), node(ex + 1, ey + 1), node(ex, ey + 1)};
    }

    std::array<std::size_t, 8> element_dofs(std::size_t e) const
    {
        const auto n = element_nodes(e);
        std::array<std::size_t, 8> d{};
        for (std::size_t k = 0; k < 4; ++k) {
            d[2 * k] = 2 * n[k];
            d[2 * k + 1] = 2 * n[k] + 1;
        }
        return d;
    }

    /// Elements sharing node n (one to four of them).
    std::vector<std::size_t> elements_adjacent_to(std::size_t n) const
    {
        const std::size_t i = n % (nx_ + 1);
        const std::size_t j = n / (nx_ + 1);
        std::vector<std::size_t> out;
        for (std::size_t ey = (j > 0 ? j - 1 : 0); ey <= std::min(j, ny_ - 1); ++ey)
            for (std::size_t ex = (i > 0 ? i - 1 : 0); ex <= std::min(i, nx_ - 1); ++ex)
                out.push_back(element(ex, ey));
        return out;
    }

    std::pair<double, double> node_position(std::size_t n) const
    {
        const std::size_t i = n % (nx_ + 1);
        const std::size_t j = n / (nx_ + 1);
        return {static_cast<double>(i) * element_width(), static_cast<double>(j) * element_height()};
    }

    /// Nearest node to (x, y); halfway positions round up.
    std::size_t nearest_node(double x, double y) const
    {
        auto snap = [](double t, std::size_t count) {
            const double k = std::floor(t + 0.5);
            return static_cast<std::size_t>(std::clamp(k, 0.0, static_cast<double>(count)));
        };
        return node(snap(x / element_width(), nx_), snap(y / element_height(), ny_));
    }

    friend bool operator==(const mesh&, const mesh&) = default;

private:
    std::size_t nx_;
    std::size_t ny_;
    double width_;
    double height_;
};

struct material {
    double young_modulus = 1.0;
    double poisson_ratio = 0.3;
    double penal = 3.0;

    void validate() const
    {
        if (!(young_modulus > 0.0))
            throw std::invalid_argument("material: young_modulus must be positive");
        if (!(poisson_ratio >= 0.0 && poisson_ratio < 0.5))
            throw std::invalid_argument("material: poisson_ratio must lie in [0, 0.5)");
        if (!(penal >= 1.0))
            throw std::invalid_argument("material: penal must be at least 1");
    }

    friend bool operator==(const material&, const material&) = default;
};

using density_field = std::vector<double>;

inline void check_density(std::span<const double> rho, std::size_t element_count)
{
    if (rho.size() != element_count)
        throw std::invalid_argument("density field size does not match the mesh");
    for (double r : rho)
        if (!(r >= 0.0 && r <= 1.0))
            throw std::invalid_argument("density outside [0, 1]");
}

struct point_load {
    std::size_t dof;
    double value;
    friend bool operator==(const point_load&, const point_load&) = default;
};

struct boundary_conditions {
    std::vector<std::size_t> fixed_dofs;
    std::vector<point_load> loads;

    void validate(std::size_t dof_count) const
    {
        for (auto d : fixed_dofs)
            if (d >= dof_count)
                throw std::invalid_argument("boundary conditions: fixed DOF out of range");
        for (const auto& l : loads) {
            if (l.dof >= dof_count)
                throw std::invalid_argument("boundary conditions: load DOF out of range");
            if (std::find(fixed_dofs.begin(), fixed_dofs.end(), l.dof) != fixed_dofs.end())
                throw std::invalid_argument("boundary conditions: load applied to a fixed DOF");
        }
    }

    friend bool operator==(const boundary_conditions&, const boundary_conditions&) = default;
};

/// Plane-strain constitutive matrix (Voigt order xx, yy, xy).
inline std::array<std::array<double, 3>, 3> plane_strain_matrix(const material& mat)
{
    const double e = mat.young_modulus;
    const double nu = mat.poisson_ratio;
    const double f = e / ((1.0 + nu) * (1.0 - 2.0 * nu));
    return {{{f * (1.0 - nu), f * nu, 0.0},
             {f * nu, f * (1.0 - nu), 0.0},
             {0.0, 0.0, f * (1.0 - 2.0 * nu) / 2.0}}};
}

/// 8×8 stiffness D_j of a w × h bilinear quadrilateral in plane strain,
/// 2×2 Gauss quadrature of BᵀCB. Rank 5.
inline dense_matrix element_stiffness(const material& mat, double w, double h)
{
    mat.validate();
    if (!(w > 0.0) || !(h > 0.0))
        throw std::invalid_argument("element_stiffness: dimensions must be positive");

    static constexpr std::array<double, 4> xi_n{-1.0, 1.0, 1.0, -1.0};
    static constexpr std::array<double, 4> eta_n{-1.0, -1.0, 1.0, 1.0};
    const double g = 1.0 / std::sqrt(3.0);
    const auto c = plane_strain_matrix(mat);
    const double det_j = w * h / 4.0;

    dense_matrix k(8, 8);
    for (double xi : {-g, g})
        for (double eta : {-g, g}) {
            std::array<std::array<double, 8>, 3> b{};
            for (std::size_t a = 0; a < 4; ++a) {
                const double dx = 0.25 * xi_n[a] * (1.0 + eta * eta_n[a]) * 2.0 / w;
                const double dy = 0.25 * eta_n[a] * (1.0 + xi * xi_n[a]) * 2.0 / h;
                b[0][2 * a] = dx;
                b[1][2 * a + 1] = dy;
                b[2][2 * a] = dy;
                b[2][2 * a + 1] = dx;
            }
            for (std::size_t i = 0; i < 8; ++i)
                for (std::size_t j = 0; j < 8; ++j) {
                    double s = 0.0;
                    for (std::size_t p = 0; p < 3; ++p)
                        for (std::size_t q = 0; q < 3; ++q)
                            s += b[p][i] * c[p][q] * b[q][j];
                    k(i, j) += s * det_j;
                }
        }
    // Exact symmetry keeps the assembled matrix bitwise symmetric.
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = i + 1; j < 8; ++j) {
            const double m = 0.5 * (k(i, j) + k(j, i));
            k(i, j) = m;
            k(j, i) = m;
        }
    return k;
}

/// A = Σ_j ρ_j^p · scatter(D_j). Void elements add nothing, so nodes
/// surrounded by void keep all-zero rows. Supports are not applied here.
inline sparse_sym_matrix assemble(const mesh& m, const material& mat, std::span<const double> rho)
{
    check_density(rho, m.element_count());
    const auto ke = element_stiffness(mat, m.element_width(), m.element_height());

    std::vector<triplet> t;
    t.reserve(m.element_count() * 64);
    for (std::size_t e = 0; e < m.element_count(); ++e) {
        if (rho[e] == 0.0)
            continue;
        const double f = std::pow(rho[e], mat.penal);
        const auto dofs = m.element_dofs(e);
        for (std::size_t i = 0; i < 8; ++i)
            for (std::size_t j = 0; j < 8; ++j)
                t.push_back({dofs[i], dofs[j], f * ke(i, j)});
    }
    return sparse_sym_matrix::from_triplets(m.dof_count(), t);
}

/// Nodal force vector; repeated DOFs accumulate.
inline real_vector build_load(const mesh& m, const boundary_conditions& bc)
{
    real_vector b(m.dof_count(), 0.0);
    for (const auto& l : bc.loads) {
        if (l.dof >= b.size())
            throw std::invalid_argument("build_load: load DOF out of range");
        b[l.dof] += l.value;
    }
    return b;
}

struct reduced_system {
    sparse_sym_matrix matrix;
    real_vector rhs;
    /// reduced index -> full DOF index
    std::vector<std::size_t> dof_map;
};

/// Eliminates the fixed DOFs (rows and columns removed).
inline reduced_system apply_dirichlet(const sparse_sym_matrix& a, std::span<const double> b,
                                      const boundary_conditions& bc)
{
    const std::size_t n = a.size();
    if (b.size() != n)
        throw std::invalid_argument("apply_dirichlet: dimension mismatch");

    constexpr std::size_t removed = static_cast<std::size_t>(-1);
    std::vector<std::size_t> full_to_reduced(n, 0);
    for (auto d : bc.fixed_dofs) {
        if (d >= n)
            throw std::invalid_argument("apply_dirichlet: fixed DOF out of range");
        full_to_reduced[d] = removed;
    }
    reduced_system out;
    for (std::size_t i = 0; i < n; ++i)
        if (full_to_reduced[i] != removed) {
            full_to_reduced[i] = out.dof_map.size();
            out.dof_map.push_back(i);
        }

    std::vector<triplet> t;
    const auto rp = a.row_ptr();
    const auto ci = a.col_idx();
    const auto v = a.values();
    for (std::size_t ri = 0; ri < out.dof_map.size(); ++ri) {
        const std::size_t i = out.dof_map[ri];
        for (std::size_t k = rp[i]; k < rp[i + 1]; ++k) {
            const std::size_t rj = full_to_reduced[ci[k]];
            if (rj != removed)
                t.push_back({ri, rj, v[k]});
        }
    }
    out.matrix = sparse_sym_matrix::from_triplets(out.dof_map.size(), t);
    out.rhs.reserve(out.dof_map.size());
    for (auto i : out.dof_map)
        out.rhs.push_back(b[i]);
    return out;
}

/// Full-length displacement from a reduced solution; fixed DOFs get zero.
inline real_vector scatter_solution(const reduced_system& sys, std::span<const double> reduced,
                                    std::size_t dof_count)
{
    if (reduced.size() != sys.dof_map.size())
        throw std::invalid_argument("scatter_solution: dimension mismatch");
    real_vector x(dof_count, 0.0);
    for (std::size_t k = 0; k < reduced.size(); ++k)
        x[sys.dof_map[k]] = reduced[k];
    return x;
}

/// Nodes whose adjacent elements are all void.
inline std::vector<std::size_t> void_nodes(const mesh& m, std::span<const double> rho)
{
    std::vector<std::size_t> out;
    for (std::size_t n = 0; n < m.node_count(); ++n) {
        const auto adj = m.elements_adjacent_to(n);
        if (std::all_of(adj.begin(), adj.end(), [&](std::size_t e) { return rho[e] == 0.0; }))
            out.push_back(n);
    }
    return out;
}

} // namespace topokry
