#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "pmelab/field.hpp"
#include "pmelab/grid.hpp"

namespace pmelab {

/// 3-point / 5-point Laplacian of one time slice at a single node.
/// `slice` holds all nodes of the level, boundary values included.
inline double laplacian_at(const Grid& g, std::span<const double> slice, int node) {
    const double inv_h2 = 1.0 / (g.h * g.h);
    const int ix = g.node_ix(node);
    if (g.dim == 1) {
        return (slice[static_cast<std::size_t>(node - 1)] - 2.0 * slice[static_cast<std::size_t>(node)] +
                slice[static_cast<std::size_t>(node + 1)]) * inv_h2;
    }
    const int iy = g.node_iy(node);
    const double c = slice[static_cast<std::size_t>(node)];
    return (slice[static_cast<std::size_t>(g.node_index(ix - 1, iy))] +
            slice[static_cast<std::size_t>(g.node_index(ix + 1, iy))] +
            slice[static_cast<std::size_t>(g.node_index(ix, iy - 1))] +
            slice[static_cast<std::size_t>(g.node_index(ix, iy + 1))] - 4.0 * c) * inv_h2;
}

/// Discrete Laplacian of a field slice over the interior nodes, indexed by
/// interior rank. Second-order consistent on smooth fields; boundary values
/// are read from the slice (Dirichlet data must be present there).
inline std::vector<double> discrete_laplacian(const Field& f, int level) {
    const Grid& g = f.grid();
    if (level < 0 || level >= g.nt) throw std::out_of_range("discrete_laplacian: level out of range");
    const auto slice = f.level(level);
    std::vector<double> out(static_cast<std::size_t>(g.interior_count()));
    for (int r = 0; r < g.interior_count(); ++r)
        out[static_cast<std::size_t>(r)] = laplacian_at(g, slice, g.interior_node(r));
    return out;
}

/// Pointwise power with the convention 0^p = 0 for p > 0; negative inputs
/// are clamped to zero (solver iterates are projected, so this only absorbs
/// roundoff).
inline double upow(double u, double p) {
    return u <= 0.0 ? 0.0 : std::pow(u, p);
}

inline std::vector<double> power_slice(std::span<const double> slice, double m) {
    std::vector<double> out(slice.size());
    for (std::size_t i = 0; i < slice.size(); ++i) out[i] = upow(slice[i], m);
    return out;
}

/// Sum of (grad a . grad b) h^d over the spatial edges of one level,
/// with both one-sided differences per edge. Used by the weak-form pairing
/// and the energy estimates; summation by parts against -laplacian_at is
/// exact when one factor vanishes on the boundary nodes.
inline double gradient_pairing(const Grid& g, std::span<const double> a, std::span<const double> b) {
    const double hd = g.dim == 1 ? g.h : g.h * g.h;
    const double inv_h2 = 1.0 / (g.h * g.h);
    double sum = 0.0;
    if (g.dim == 1) {
        for (int ix = 0; ix < g.nx; ++ix)
            sum += (a[static_cast<std::size_t>(ix + 1)] - a[static_cast<std::size_t>(ix)]) *
                   (b[static_cast<std::size_t>(ix + 1)] - b[static_cast<std::size_t>(ix)]);
        return sum * inv_h2 * hd;
    }
    for (int iy = 0; iy <= g.ny; ++iy)
        for (int ix = 0; ix < g.nx; ++ix) {
            const int p = g.node_index(ix, iy), q = g.node_index(ix + 1, iy);
            sum += (a[static_cast<std::size_t>(q)] - a[static_cast<std::size_t>(p)]) *
                   (b[static_cast<std::size_t>(q)] - b[static_cast<std::size_t>(p)]);
        }
    for (int iy = 0; iy < g.ny; ++iy)
        for (int ix = 0; ix <= g.nx; ++ix) {
            const int p = g.node_index(ix, iy), q = g.node_index(ix, iy + 1);
            sum += (a[static_cast<std::size_t>(q)] - a[static_cast<std::size_t>(p)]) *
                   (b[static_cast<std::size_t>(q)] - b[static_cast<std::size_t>(p)]);
        }
    return sum * inv_h2 * hd;
}

/// Squared-gradient energy of one level weighted by a nodal cutoff eta^2
/// (eta evaluated at the left/lower node of each edge).
inline double weighted_gradient_energy(const Grid& g, std::span<const double> a,
                                       std::span<const double> eta) {
    const double hd = g.dim == 1 ? g.h : g.h * g.h;
    const double inv_h2 = 1.0 / (g.h * g.h);
    double sum = 0.0;
    auto edge = [&](int p, int q) {
        const double d = a[static_cast<std::size_t>(q)] - a[static_cast<std::size_t>(p)];
        const double e = eta[static_cast<std::size_t>(p)];
        sum += e * e * d * d;
    };
    if (g.dim == 1) {
        for (int ix = 0; ix < g.nx; ++ix) edge(ix, ix + 1);
    } else {
        for (int iy = 0; iy <= g.ny; ++iy)
            for (int ix = 0; ix < g.nx; ++ix) edge(g.node_index(ix, iy), g.node_index(ix + 1, iy));
        for (int iy = 0; iy < g.ny; ++iy)
            for (int ix = 0; ix <= g.nx; ++ix) edge(g.node_index(ix, iy), g.node_index(ix, iy + 1));
    }
    return sum * inv_h2 * hd;
}

/// Backward-difference PME residual (u_t - lap u^m) of one time slab,
/// evaluated at interior nodes and indexed by interior rank. This is the
/// same stencil and time difference the implicit solver zeroes out, so a
/// converged solution has residual at the Newton tolerance, and measure
/// extraction built on it round-trips exactly.
inline std::vector<double> pme_residual_slice(const Field& u, double m, int level) {
    const Grid& g = u.grid();
    if (level < 1 || level >= g.nt) throw std::out_of_range("pme_residual_slice: level out of range");
    const auto um = power_slice(u.level(level), m);
    std::vector<double> out(static_cast<std::size_t>(g.interior_count()));
    for (int r = 0; r < g.interior_count(); ++r) {
        const int node = g.interior_node(r);
        out[static_cast<std::size_t>(r)] =
            (u.at(level, node) - u.at(level - 1, node)) / g.dt - laplacian_at(g, um, node);
    }
    return out;
}

/// Total mass of one level, sum u h^d over all nodes.
inline double level_mass(const Grid& g, std::span<const double> slice) {
    const double hd = g.dim == 1 ? g.h : g.h * g.h;
    double s = 0.0;
    for (double v : slice) s += v;
    return s * hd;
}

} // namespace pmelab
