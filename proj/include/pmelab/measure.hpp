#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pmelab/field.hpp"
#include "pmelab/grid.hpp"
#include "pmelab/operators.hpp"

namespace pmelab {

/// Nonnegative weights over space-time cells: a discrete Radon measure.
/// Weights carry mass units (u times cell volume). Small negative weights
/// up to neg_tol = 1e-8 * total variation are tolerated as discretization
/// noise when the measure comes from an extraction.
struct DiscreteMeasure {
    Grid grid;
    std::vector<double> weights;  // size grid.cell_count()

    static DiscreteMeasure zero(const Grid& g) {
        DiscreteMeasure mu;
        mu.grid = g;
        mu.weights.assign(static_cast<std::size_t>(g.cell_count()), 0.0);
        return mu;
    }

    double total() const {
        double s = 0.0;
        for (double w : weights) s += w;
        return s;
    }

    double total_variation() const {
        double s = 0.0;
        for (double w : weights) s += std::abs(w);
        return s;
    }

    double neg_tol() const { return 1e-8 * total_variation(); }

    double most_negative() const {
        double m = 0.0;
        for (double w : weights) m = std::min(m, w);
        return m;
    }

    bool effectively_nonnegative() const { return most_negative() >= -neg_tol(); }

    DiscreteMeasure scaled(double c) const {
        DiscreteMeasure out = *this;
        for (double& w : out.weights) w *= c;
        return out;
    }

    DiscreteMeasure restricted_to(const CellSet& s) const {
        if (!(s.grid == grid)) throw std::invalid_argument("DiscreteMeasure: grid mismatch");
        DiscreteMeasure out = zero(grid);
        for (std::size_t c = 0; c < weights.size(); ++c)
            if (s.mask[c]) out.weights[c] = weights[c];
        return out;
    }

    /// Same weights re-indexed on a time-extended grid.
    DiscreteMeasure on_extended_grid(const Grid& g2) const {
        if (g2.dim != grid.dim || g2.nx != grid.nx || g2.ny != grid.ny ||
            g2.h != grid.h || g2.dt != grid.dt || g2.nt < grid.nt)
            throw std::invalid_argument("DiscreteMeasure: incompatible extension grid");
        DiscreteMeasure out = zero(g2);
        for (int c = 0; c < grid.cell_count(); ++c)
            out.weights[static_cast<std::size_t>(g2.cell_index(grid.cell_rank(c), grid.cell_level(c)))] =
                weights[static_cast<std::size_t>(c)];
        return out;
    }
};

/// Riesz measure of a field: cell weight = slab residual (u_t - lap u^m)
/// times the cell volume h^d dt. For a converged source-free solve the
/// weights sit at the Newton tolerance; for the solution of a measure-data
/// problem they reproduce the data exactly (same stencil, same time
/// difference).
inline DiscreteMeasure extract_riesz(const Field& u, double m) {
    const Grid& g = u.grid();
    if (!u.all_finite()) throw std::invalid_argument("extract_riesz: field has non-finite values");
    DiscreteMeasure mu = DiscreteMeasure::zero(g);
    const double vol = g.cell_volume();
    for (int n = 1; n < g.nt; ++n) {
        const auto res = pme_residual_slice(u, m, n);
        for (int r = 0; r < g.interior_count(); ++r)
            mu.weights[static_cast<std::size_t>(g.cell_index(r, n))] = res[static_cast<std::size_t>(r)] * vol;
    }
    return mu;
}

/// Sum of weights over a cell set.
inline double measure_of_set(const DiscreteMeasure& mu, const CellSet& s) {
    if (!(s.grid == mu.grid)) throw std::invalid_argument("measure_of_set: grid mismatch");
    double sum = 0.0;
    for (std::size_t c = 0; c < mu.weights.size(); ++c)
        if (s.mask[c]) sum += mu.weights[c];
    return sum;
}

inline double measure_of_set(const DiscreteMeasure& mu, const CompactSet& k) {
    return measure_of_set(mu, k.as_cellset());
}

/// mu_a dominates mu_b: every cell weight of b below a's plus roundoff.
inline bool dominates(const DiscreteMeasure& mu_a, const DiscreteMeasure& mu_b) {
    if (!(mu_a.grid == mu_b.grid)) throw std::invalid_argument("dominates: grid mismatch");
    double scale = 1.0;
    for (double w : mu_a.weights) scale = std::max(scale, std::abs(w));
    for (double w : mu_b.weights) scale = std::max(scale, std::abs(w));
    for (std::size_t c = 0; c < mu_a.weights.size(); ++c)
        if (mu_b.weights[c] > mu_a.weights[c] + 1e-12 * scale) return false;
    return true;
}

/// One margin row of a weak-convergence check.
struct WeakConvergenceMargin {
    std::string kind;   // "compact" or "open"
    int set_index = 0;
    double margin = 0.0;  // positive = violation before tolerance
};

struct WeakConvergenceReport {
    double tol = 0.0;
    double worst_compact_margin = 0.0;  // max over compacts of limsup mu_k(K) - mu(K)
    double worst_open_margin = 0.0;     // max over opens of mu(U) - liminf mu_k(U)
    std::vector<WeakConvergenceMargin> margins;
    bool pass = false;
};

/// Finite-sequence check of the two measure-convergence criteria:
/// on compacts, limsup_k mu_k(K) <= mu(K); on opens, mu(U) <= liminf_k mu_k(U).
/// The limsup/liminf are approximated by extrema over the tail half of the
/// supplied sequence, which is the content available at finite length.
inline WeakConvergenceReport weak_convergence_check(const std::vector<DiscreteMeasure>& mus,
                                                    const DiscreteMeasure& mu_limit,
                                                    const std::vector<CellSet>& opens,
                                                    const std::vector<CompactSet>& compacts) {
    if (mus.empty()) throw std::invalid_argument("weak_convergence_check: empty sequence");
    for (const auto& mu : mus)
        if (!(mu.grid == mu_limit.grid))
            throw std::invalid_argument("weak_convergence_check: grid mismatch");

    double scale = std::max(1e-300, mu_limit.total_variation());
    for (const auto& mu : mus) scale = std::max(scale, mu.total_variation());

    WeakConvergenceReport rep;
    rep.tol = 1e-6 * scale;
    const std::size_t tail_begin = mus.size() / 2;

    int idx = 0;
    for (const auto& K : compacts) {
        const double limit_val = measure_of_set(mu_limit, K);
        double limsup = -1e300;
        for (std::size_t k = tail_begin; k < mus.size(); ++k)
            limsup = std::max(limsup, measure_of_set(mus[k], K));
        const double margin = limsup - limit_val;
        rep.margins.push_back({"compact", idx++, margin});
        rep.worst_compact_margin = std::max(rep.worst_compact_margin, margin);
    }
    idx = 0;
    for (const auto& U : opens) {
        const double limit_val = measure_of_set(mu_limit, U);
        double liminf = 1e300;
        for (std::size_t k = tail_begin; k < mus.size(); ++k)
            liminf = std::min(liminf, measure_of_set(mus[k], U));
        const double margin = limit_val - liminf;
        rep.margins.push_back({"open", idx++, margin});
        rep.worst_open_margin = std::max(rep.worst_open_margin, margin);
    }
    rep.pass = rep.worst_compact_margin <= rep.tol && rep.worst_open_margin <= rep.tol;
    return rep;
}

} // namespace pmelab
