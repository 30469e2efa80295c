#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pmelab/capacity.hpp"
#include "pmelab/field.hpp"
#include "pmelab/grid.hpp"
#include "pmelab/measure.hpp"
#include "pmelab/obstacle.hpp"
#include "pmelab/operators.hpp"
#include "pmelab/rng.hpp"
#include "pmelab/solver.hpp"

namespace pmelab {

/// Outcome of one comparison check. A rejected instance (hypotheses_ok
/// false) is not a counterexample; it never counts as a failure.
struct ComparisonReport {
    std::string geometry;
    bool hypotheses_ok = false;
    std::string rejected_hypothesis;
    bool pass = false;
    double worst_violation = 0.0;  // max(u - v) over the conclusion region
    int worst_node = -1;
    int worst_level = -1;
    double comp_tol = 0.0;
};

inline double comparison_scale(const Field& u, const Field& v) {
    return std::max({1.0, u.max_abs(), v.max_abs()});
}

namespace detail {

/// Equation defect in solution units: residual times dt (the quantity the
/// Newton iteration drives to zero).
inline double solution_defect(const Field& u, double m, int level, int rank) {
    const Grid& g = u.grid();
    const auto um = power_slice(u.level(level), m);
    const int node = g.interior_node(rank);
    return u.at(level, node) - u.at(level - 1, node) - g.dt * laplacian_at(g, um, node);
}

struct DefectRange {
    double min = 0.0;
    double max = 0.0;
};

template <typename CellFilter>
DefectRange defect_range(const Field& u, double m, CellFilter&& include) {
    const Grid& g = u.grid();
    DefectRange out;
    for (int n = 1; n < g.nt; ++n) {
        const auto res = pme_residual_slice(u, m, n);
        for (int r = 0; r < g.interior_count(); ++r) {
            if (!include(r, n)) continue;
            const double f = res[static_cast<std::size_t>(r)] * g.dt;
            out.min = std::min(out.min, f);
            out.max = std::max(out.max, f);
        }
    }
    return out;
}

} // namespace detail

/// Parabolic comparison on a cylinder: u a discrete solution, v a discrete
/// supersolution, u <= v on the parabolic boundary implies u <= v inside.
/// The grid itself is the cylinder; proper sub-cylinders route through
/// compare_general_open with a single box.
inline ComparisonReport compare_cylinder(const Field& u, const Field& v, double m) {
    const Grid& g = u.grid();
    ComparisonReport rep;
    rep.geometry = "cylinder";
    rep.comp_tol = 1e-6 * comparison_scale(u, v);
    const double hyp_tol = rep.comp_tol;

    const auto all = [](int, int) { return true; };
    const auto range_u = detail::defect_range(u, m, all);
    if (std::abs(range_u.max) > hyp_tol || std::abs(range_u.min) > hyp_tol) {
        rep.rejected_hypothesis = "u is not a discrete solution";
        return rep;
    }
    if (detail::defect_range(v, m, all).min < -hyp_tol) {
        rep.rejected_hypothesis = "v is not a discrete supersolution";
        return rep;
    }
    for (const auto& nd : boundary_nodes(g, BoundaryPiece::Parabolic))
        if (u.at(nd.level, nd.node) > v.at(nd.level, nd.node) + hyp_tol) {
            rep.rejected_hypothesis = "ordering fails on the parabolic boundary";
            return rep;
        }

    rep.hypotheses_ok = true;
    for (int n = 0; n < g.nt; ++n)
        for (int j = 0; j < g.nodes_per_level(); ++j) {
            const double gap = u.at(n, j) - v.at(n, j);
            if (gap > rep.worst_violation) {
                rep.worst_violation = gap;
                rep.worst_node = j;
                rep.worst_level = n;
            }
        }
    rep.pass = rep.worst_violation <= rep.comp_tol;
    return rep;
}

/// Comparison on the punctured domain Omega_T minus K: u solves off K,
/// v is a supersolution off K with v > 0 on K, and u <= v on K and on the
/// parabolic boundary; then u <= v everywhere.
inline ComparisonReport compare_punctured(const Field& u, const Field& v, const CompactSet& K,
                                          double m) {
    const Grid& g = u.grid();
    ComparisonReport rep;
    rep.geometry = "punctured";
    rep.comp_tol = 1e-6 * comparison_scale(u, v);
    const double hyp_tol = rep.comp_tol;

    // ordering and positivity first: the cheap hypotheses give the most
    // precise rejection reasons for deliberately broken probes
    double v_min_on_k = std::numeric_limits<double>::infinity();
    for (int c : K.as_cellset().cells()) {
        const int node = g.interior_node(g.cell_rank(c));
        const int level = g.cell_level(c);
        v_min_on_k = std::min(v_min_on_k, v.at(level, node));
        if (u.at(level, node) > v.at(level, node) + hyp_tol) {
            rep.rejected_hypothesis = "ordering fails on K";
            return rep;
        }
    }
    if (!(v_min_on_k > 0.0)) {
        rep.rejected_hypothesis = "v is not strictly positive on K";
        return rep;
    }
    for (const auto& nd : boundary_nodes(g, BoundaryPiece::Parabolic))
        if (u.at(nd.level, nd.node) > v.at(nd.level, nd.node) + hyp_tol) {
            rep.rejected_hypothesis = "ordering fails on the parabolic boundary";
            return rep;
        }
    const auto off_k = [&K, &g](int rank, int level) {
        return !K.contains(g.cell_index(rank, level));
    };
    const auto range_u = detail::defect_range(u, m, off_k);
    if (std::abs(range_u.max) > hyp_tol || std::abs(range_u.min) > hyp_tol) {
        rep.rejected_hypothesis = "u does not solve the equation off K";
        return rep;
    }
    if (detail::defect_range(v, m, off_k).min < -hyp_tol) {
        rep.rejected_hypothesis = "v is not a supersolution off K";
        return rep;
    }

    rep.hypotheses_ok = true;
    for (int n = 0; n < g.nt; ++n)
        for (int j = 0; j < g.nodes_per_level(); ++j) {
            const double gap = u.at(n, j) - v.at(n, j);
            if (gap > rep.worst_violation) {
                rep.worst_violation = gap;
                rep.worst_node = j;
                rep.worst_level = n;
            }
        }
    rep.pass = rep.worst_violation <= rep.comp_tol;
    return rep;
}

/// Elliptic-type comparison on a finite union of space-time boxes: u a
/// solution inside E, v a supersolution inside E, u <= v on all of the
/// boundary (lateral, tops, bottoms). The positivity of v on the boundary
/// is only required when the boundary is not a union-of-boxes boundary.
inline ComparisonReport compare_general_open(const Field& u, const Field& v,
                                             const SpaceTimeUnion& E, double m,
                                             bool boundary_is_box_union = true) {
    const Grid& g = u.grid();
    ComparisonReport rep;
    rep.geometry = "union-of-boxes";
    rep.comp_tol = 1e-6 * comparison_scale(u, v);
    const double hyp_tol = rep.comp_tol;

    const auto inside = [&E, &g](int rank, int level) {
        return E.inside(g.interior_node(rank), level) && level >= 1 &&
               E.inside(g.interior_node(rank), level - 1);
    };
    const auto range_u = detail::defect_range(u, m, inside);
    if (std::abs(range_u.max) > hyp_tol || std::abs(range_u.min) > hyp_tol) {
        rep.rejected_hypothesis = "u does not solve the equation in E";
        return rep;
    }
    if (detail::defect_range(v, m, inside).min < -hyp_tol) {
        rep.rejected_hypothesis = "v is not a supersolution in E";
        return rep;
    }

    auto check_boundary = [&](const std::vector<SpaceTimeNode>& nodes, const char* label) {
        for (const auto& nd : nodes) {
            if (u.at(nd.level, nd.node) > v.at(nd.level, nd.node) + hyp_tol) {
                rep.rejected_hypothesis = std::string("ordering fails on the ") + label;
                return false;
            }
            if (!boundary_is_box_union && !(v.at(nd.level, nd.node) > 0.0)) {
                rep.rejected_hypothesis = std::string("v is not positive on the ") + label;
                return false;
            }
        }
        return true;
    };
    if (!check_boundary(E.lateral(), "lateral boundary")) return rep;
    if (!check_boundary(E.tops(), "top boundary")) return rep;
    if (!check_boundary(E.bottoms(), "bottom boundary")) return rep;

    rep.hypotheses_ok = true;
    for (const auto& nd : E.interior_nodes()) {
        const double gap = u.at(nd.level, nd.node) - v.at(nd.level, nd.node);
        if (gap > rep.worst_violation) {
            rep.worst_violation = gap;
            rep.worst_node = nd.node;
            rep.worst_level = nd.level;
        }
    }
    rep.pass = rep.worst_violation <= rep.comp_tol;
    return rep;
}

struct ScalingCheckReport {
    bool pass = false;
    double worst_identity_gap = 0.0;  // cellwise |residual - predicted|
    double tol = 0.0;
    std::vector<double> eps;
    std::vector<double> predicted_sup;  // sup |f| per eps
    bool ratio_checked = false;
    double ratio = 0.0;  // f(0.1) / f(0.01) in sup norm when both present
    bool ratio_pass = true;
};

/// Algebraic identity behind the elliptic comparison proof: the residual of
/// u/(1+eps) equals ((1+eps)^(m-1)-1)/(1+eps)^m lap u^m cellwise, and the
/// error term vanishes linearly in eps.
inline ScalingCheckReport scaling_residual_check(const Field& u, double m,
                                                 const std::vector<double>& eps_list) {
    const Grid& g = u.grid();
    ScalingCheckReport rep;
    rep.eps = eps_list;
    const double scale = std::max(1.0, u.max_abs());
    rep.tol = 1e-9 * scale;

    for (double eps : eps_list) {
        Field scaled = u;
        for (int n = 0; n < g.nt; ++n)
            for (int j = 0; j < g.nodes_per_level(); ++j) scaled.at(n, j) = u.at(n, j) / (1.0 + eps);
        const double factor = (std::pow(1.0 + eps, m - 1.0) - 1.0) / std::pow(1.0 + eps, m);

        double sup_f = 0.0;
        for (int n = 1; n < g.nt; ++n) {
            const auto res = pme_residual_slice(scaled, m, n);
            const auto um = power_slice(u.level(n), m);
            for (int r = 0; r < g.interior_count(); ++r) {
                const double predicted = factor * laplacian_at(g, um, g.interior_node(r));
                rep.worst_identity_gap = std::max(
                    rep.worst_identity_gap, std::abs(res[static_cast<std::size_t>(r)] - predicted));
                sup_f = std::max(sup_f, std::abs(predicted));
            }
        }
        rep.predicted_sup.push_back(sup_f);
    }
    rep.pass = rep.worst_identity_gap <= rep.tol;

    for (std::size_t a = 0; a < eps_list.size(); ++a)
        for (std::size_t b = 0; b < eps_list.size(); ++b)
            if (std::abs(eps_list[a] - 0.1) < 1e-12 && std::abs(eps_list[b] - 0.01) < 1e-12 &&
                rep.predicted_sup[b] > 0.0) {
                rep.ratio = rep.predicted_sup[a] / rep.predicted_sup[b];
                rep.ratio_checked = true;
                rep.ratio_pass = rep.ratio >= 8.0 && rep.ratio <= 12.0;
            }
    rep.pass = rep.pass && rep.ratio_pass;
    return rep;
}

/// Measure domination transfers to the solutions: mu_v <= mu_u implies
/// u_v <= u_u for the zero-data measure problems.
inline ComparisonReport measure_domination(const DiscreteMeasure& mu_u, const DiscreteMeasure& mu_v,
                                           double m) {
    ComparisonReport rep;
    rep.geometry = "measure-domination";
    if (!dominates(mu_u, mu_v)) {
        rep.rejected_hypothesis = "mu_u does not dominate mu_v";
        return rep;
    }
    const Field u = solve_measure_data(mu_u.grid, m, mu_u);
    const Field v = solve_measure_data(mu_v.grid, m, mu_v);
    rep.comp_tol = 1e-6 * comparison_scale(u, v);
    rep.hypotheses_ok = true;

    const Grid& g = mu_u.grid;
    for (int n = 0; n < g.nt; ++n)
        for (int j = 0; j < g.nodes_per_level(); ++j) {
            const double gap = v.at(n, j) - u.at(n, j);
            if (gap > rep.worst_violation) {
                rep.worst_violation = gap;
                rep.worst_node = j;
                rep.worst_level = n;
            }
        }
    rep.pass = rep.worst_violation <= rep.comp_tol;
    return rep;
}

/// Solve the PME inside a union of boxes, reading lateral/bottom/top data
/// from the given field. Levels march through the union; nodes outside the
/// interior keep the data values.
inline Field solve_on_union(const SpaceTimeUnion& E, double m, const Field& data) {
    const Grid& g = E.grid;
    Field u = data;
    u.set_name("u_union");

    const int npl = g.nodes_per_level();
    std::vector<double> fixed(static_cast<std::size_t>(npl));
    std::vector<std::uint8_t> is_fixed(static_cast<std::size_t>(npl));
    std::vector<double> out(static_cast<std::size_t>(npl));

    for (int n = std::max(E.min_inside_level(), 1); n <= E.max_inside_level(); ++n) {
        bool any = false;
        for (int j = 0; j < npl; ++j) {
            const bool active = E.inside(j, n) && !g.is_boundary_node(j);
            is_fixed[static_cast<std::size_t>(j)] = active ? 0 : 1;
            fixed[static_cast<std::size_t>(j)] = u.at(n, j);
            any = any || active;
        }
        if (!any) continue;
        pmelab::detail::ImplicitStep step{g, m, g.dt, 1e-8, u.level(n - 1), fixed, is_fixed,
                                          {},  nullptr, {}};
        const StepStats st = step.run(out, newton_tolerance(u.level(n - 1)));
        if (!st.converged)
            throw SolverError("solve_on_union: Newton did not converge", n, st.residual,
                              st.iterations);
        auto dst = u.level(n);
        std::copy(out.begin(), out.end(), dst.begin());
    }
    return u;
}

} // namespace pmelab
