#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pmelab/field.hpp"
#include "pmelab/grid.hpp"
#include "pmelab/measure.hpp"
#include "pmelab/operators.hpp"
#include "pmelab/parallel.hpp"
#include "pmelab/solver.hpp"

namespace pmelab {

struct ObstacleAdmissibility {
    double psi_sup = 0.0;         // sup |d_t psi - lap psi^m|
    double psi_m_l2 = 0.0;        // discrete L2 norm of psi^m
    double grad_psi_m_l2 = 0.0;   // discrete L2 norm of grad psi^m
    bool positive_everywhere = false;
    double boundary_level = 0.0;  // Dirichlet/initial value for the obstacle problem
};

/// Obstacle psi >= 0 with its admissibility record. Plain obstacles are
/// compactly supported: zero on the parabolic boundary and on a one-cell
/// margin inside it, and zero at the final level. The eps-smoothed family
/// deliberately breaks compact support; those specs carry
/// positive_everywhere and use eps as lateral/initial data instead.
class ObstacleSpec {
public:
    static ObstacleSpec make(Field psi, double m) {
        if (!(m > 1.0)) throw std::invalid_argument("ObstacleSpec: requires m > 1");
        const Grid& g = psi.grid();
        if (psi.min_value() < 0.0) throw std::invalid_argument("ObstacleSpec: psi must be nonnegative");
        for (int n = 0; n < g.nt; ++n)
            for (int node = 0; node < g.nodes_per_level(); ++node)
                if (on_support_margin(g, node, n) && psi.at(n, node) != 0.0)
                    throw std::invalid_argument(
                        "ObstacleSpec: psi must vanish on the parabolic boundary and margin");
        ObstacleSpec spec(std::move(psi), m);
        spec.compute_admissibility();
        return spec;
    }

    /// eps-smoothed spec: psi >= floor everywhere, margin rule waived.
    static ObstacleSpec make_positive(Field psi, double m, double floor) {
        if (!(m > 1.0)) throw std::invalid_argument("ObstacleSpec: requires m > 1");
        if (psi.min_value() < floor * (1.0 - 1e-12))
            throw std::invalid_argument("ObstacleSpec: positive spec below its floor");
        ObstacleSpec spec(std::move(psi), m);
        spec.adm_.positive_everywhere = true;
        spec.adm_.boundary_level = floor;
        spec.compute_admissibility();
        return spec;
    }

    static bool on_support_margin(const Grid& g, int node, int level) {
        const int ix = g.node_ix(node);
        if (ix <= 1 || ix >= g.nx - 1) return true;
        if (g.dim == 2) {
            const int iy = g.node_iy(node);
            if (iy <= 1 || iy >= g.ny - 1) return true;
        }
        return level <= 1 || level == g.nt - 1;
    }

    const Field& psi() const { return psi_; }
    double m() const { return m_; }
    const ObstacleAdmissibility& admissibility() const { return adm_; }
    const Grid& grid() const { return psi_.grid(); }

    double scale() const { return std::max(1.0, psi_.max_abs()); }
    double contact_tol() const { return 1e-7 * scale(); }

    /// (d_t psi - lap psi^m)_+ per level, backward difference in time;
    /// zero at level 0 and on boundary nodes.
    Field penalty_source() const {
        const Grid& g = psi_.grid();
        Field p(g, 0.0, "penalty_source");
        for (int n = 1; n < g.nt; ++n) {
            const auto psim = power_slice(psi_.level(n), m_);
            for (int r = 0; r < g.interior_count(); ++r) {
                const int node = g.interior_node(r);
                const double v = (psi_.at(n, node) - psi_.at(n - 1, node)) / g.dt -
                                 laplacian_at(g, psim, node);
                p.at(n, node) = std::max(v, 0.0);
            }
        }
        return p;
    }

private:
    ObstacleSpec(Field psi, double m) : psi_(std::move(psi)), m_(m) {}

    void compute_admissibility() {
        const Grid& g = psi_.grid();
        const double hd = g.dim == 1 ? g.h : g.h * g.h;
        double sup = 0.0, l2 = 0.0, grad_l2 = 0.0;
        for (int n = 1; n < g.nt; ++n) {
            const auto psim = power_slice(psi_.level(n), m_);
            for (int r = 0; r < g.interior_count(); ++r) {
                const int node = g.interior_node(r);
                const double v = (psi_.at(n, node) - psi_.at(n - 1, node)) / g.dt -
                                 laplacian_at(g, psim, node);
                sup = std::max(sup, std::abs(v));
            }
            for (double v : psim) l2 += v * v * hd * g.dt;
            grad_l2 += gradient_pairing(g, psim, psim) * g.dt;
        }
        adm_.psi_sup = sup;
        adm_.psi_m_l2 = std::sqrt(l2);
        adm_.grad_psi_m_l2 = std::sqrt(grad_l2);
    }

    Field psi_;
    double m_;
    ObstacleAdmissibility adm_;
};

enum class ObstacleBackend { Penalized, Projected };

struct ObstacleSolution {
    Field u;
    ObstacleBackend backend = ObstacleBackend::Penalized;
    CellSet contact;       // cells with u - psi <= contact_tol
    double delta = 0.0;    // final penalization parameter (penalized only)
    double contact_tol = 0.0;
    SolverReport report;
};

inline std::vector<double> default_delta_sequence(int count = 15) {
    std::vector<double> d(static_cast<std::size_t>(count));
    double v = 1.0;
    for (int k = 0; k < count; ++k) {
        v *= 0.25;
        d[static_cast<std::size_t>(k)] = v;
    }
    return d;
}

namespace detail {

inline CellSet contact_cells(const Field& u, const Field& psi, double tol) {
    const Grid& g = u.grid();
    CellSet s = CellSet::empty(g);
    for (int c = 0; c < g.cell_count(); ++c) {
        const int node = g.interior_node(g.cell_rank(c));
        const int n = g.cell_level(c);
        if (u.at(n, node) - psi.at(n, node) <= tol) s.mask[static_cast<std::size_t>(c)] = 1;
    }
    return s;
}

/// Time-march the semilinear penalized equation for one fixed delta. Warm
/// starting from the previous delta's field keeps the Newton iterates next
/// to the solution as the penalty switch steepens.
inline Field penalized_sweep(const ObstacleSpec& spec, const Field& pos_part, double delta,
                             SolverReport& rep, const Field* warm = nullptr) {
    const Grid& g = spec.grid();
    const int npl = g.nodes_per_level();
    const double bval = spec.admissibility().boundary_level;

    Field u(g, 0.0, "u_delta");
    auto lvl0 = u.level(0);
    for (int j = 0; j < npl; ++j) lvl0[static_cast<std::size_t>(j)] = bval;

    std::vector<double> fixed(static_cast<std::size_t>(npl), 0.0);
    std::vector<std::uint8_t> is_fixed(static_cast<std::size_t>(npl), 0);
    for (int j = 0; j < npl; ++j)
        if (g.is_boundary_node(j)) fixed[static_cast<std::size_t>(j)] = bval;

    std::vector<double> out(static_cast<std::size_t>(npl));
    for (int n = 1; n < g.nt; ++n) {
        const auto psim = power_slice(spec.psi().level(n), spec.m());
        PenaltyTerm pen{psim, pos_part.level(n), delta};
        pmelab::detail::ImplicitStep step{g, spec.m(), g.dt, 1e-8, u.level(n - 1),
                                          fixed, is_fixed, {}, &pen,
                                          warm ? warm->level(n) : std::span<const double>{}};
        step.max_iter = 150;
        step.nonmonotone_budget = 10;
        const StepStats st = step.run(out, newton_tolerance(u.level(n - 1)));
        rep.newton_iterations.push_back(st.iterations);
        rep.max_residual.push_back(st.residual);
        rep.clamped_magnitude += st.clamped;
        if (!st.converged)
            throw SolverError("solve_penalized: Newton did not converge", n, st.residual,
                              st.iterations);
        auto dst = u.level(n);
        std::copy(out.begin(), out.end(), dst.begin());
    }
    return u;
}

} // namespace detail

namespace detail {

/// Sup distance of the m-th power fields. The penalization controls u^m
/// (contact pins u^m inside a band of width delta), so the continuation is
/// measured where it converges linearly; near the support edge the plain
/// field gap scales only like delta^(1/m).
inline double power_sup_diff(const Field& a, const Field& b, double m) {
    const Grid& g = a.grid();
    double worst = 0.0;
    for (int n = 0; n < g.nt; ++n)
        for (int j = 0; j < g.nodes_per_level(); ++j)
            worst = std::max(worst, std::abs(upow(a.at(n, j), m) - upow(b.at(n, j), m)));
    return worst;
}

} // namespace detail

/// Obstacle problem by penalization: solve the semilinear approximations
/// down the delta sequence and return the settled iterate. Successive
/// iterates must approach each other to penal_stop_tol = 1e-6 * scale,
/// measured on the u^m fields; the walk stops early once settled or once
/// the stage differences hit their roundoff floor and start to bounce.
inline ObstacleSolution solve_penalized(const ObstacleSpec& spec,
                                        std::vector<double> delta_sequence = default_delta_sequence()) {
    if (delta_sequence.empty())
        throw std::invalid_argument("solve_penalized: empty delta sequence");
    const Field pos_part = spec.penalty_source();
    const double scale_m = std::max(1.0, std::pow(spec.psi().max_abs(), spec.m()));
    const double stop_tol = 1e-6 * scale_m;

    ObstacleSolution sol;
    sol.backend = ObstacleBackend::Penalized;
    sol.contact_tol = spec.contact_tol();

    auto finish = [&](Field u, double delta) {
        sol.delta = delta;
        sol.u = std::move(u);
        sol.u.set_name("u_obstacle");
        sol.contact = detail::contact_cells(sol.u, spec.psi(), sol.contact_tol);
        sol.report.converged = true;
        return sol;
    };

    Field prev;
    double prev_diff = std::numeric_limits<double>::infinity();
    double prev_delta = delta_sequence.front();
    for (std::size_t k = 0; k < delta_sequence.size(); ++k) {
        const double delta = delta_sequence[k];
        Field u = detail::penalized_sweep(spec, pos_part, delta, sol.report,
                                          k > 0 ? &prev : nullptr);
        if (k > 0) {
            const double diff = detail::power_sup_diff(u, prev, spec.m());
            if (diff <= 1e-2 * stop_tol) return finish(std::move(u), delta);
            if (diff > prev_diff && prev_diff <= stop_tol)
                return finish(std::move(prev), prev_delta);  // roundoff floor reached
            prev_diff = diff;
        }
        prev_delta = delta;
        prev = std::move(u);
    }
    if (!(prev_diff <= stop_tol))
        throw SolverError("solve_penalized: delta sequence did not settle", -1, prev_diff, 0);
    return finish(std::move(prev), prev_delta);
}

/// Independent oracle: per time level, the discrete complementarity system
///   min(U - psi, U - dt lap U^m - U_prev) = 0
/// by a primal-dual active-set (semismooth Newton) iteration.
inline ObstacleSolution solve_projected(const ObstacleSpec& spec, int max_outer = 200) {
    const Grid& g = spec.grid();
    const int npl = g.nodes_per_level();
    const double bval = spec.admissibility().boundary_level;
    const double scale = spec.scale();
    const double comp_tol = 1e-10 * scale;

    ObstacleSolution sol;
    sol.backend = ObstacleBackend::Projected;
    sol.contact_tol = spec.contact_tol();
    sol.u = Field(g, 0.0, "u_proj");
    auto lvl0 = sol.u.level(0);
    for (int j = 0; j < npl; ++j) lvl0[static_cast<std::size_t>(j)] = bval;

    std::vector<double> fixed(static_cast<std::size_t>(npl), 0.0);
    std::vector<std::uint8_t> is_fixed(static_cast<std::size_t>(npl), 0);
    std::vector<std::uint8_t> active(static_cast<std::size_t>(npl), 0);
    std::vector<double> lambda(static_cast<std::size_t>(npl), 0.0);
    std::vector<double> out(static_cast<std::size_t>(npl));

    for (int n = 1; n < g.nt; ++n) {
        const auto u_prev = sol.u.level(n - 1);
        const auto psi_n = spec.psi().level(n);

        std::fill(active.begin(), active.end(), 0);
        std::fill(lambda.begin(), lambda.end(), 0.0);
        // Feasible warm start biases the first active set toward contact.
        for (int j = 0; j < npl; ++j)
            out[static_cast<std::size_t>(j)] =
                std::max(u_prev[static_cast<std::size_t>(j)], psi_n[static_cast<std::size_t>(j)]);

        bool done = false;
        int outer = 0;
        for (; outer < max_outer; ++outer) {
            std::vector<std::uint8_t> next_active(static_cast<std::size_t>(npl), 0);
            for (int j = 0; j < npl; ++j) {
                if (g.is_boundary_node(j)) continue;
                if (lambda[static_cast<std::size_t>(j)] +
                        (psi_n[static_cast<std::size_t>(j)] - out[static_cast<std::size_t>(j)]) > 0.0)
                    next_active[static_cast<std::size_t>(j)] = 1;
            }
            const bool set_changed = next_active != active;
            active = std::move(next_active);

            for (int j = 0; j < npl; ++j) {
                is_fixed[static_cast<std::size_t>(j)] = active[static_cast<std::size_t>(j)];
                fixed[static_cast<std::size_t>(j)] =
                    g.is_boundary_node(j) ? bval : psi_n[static_cast<std::size_t>(j)];
            }

            pmelab::detail::ImplicitStep step{g, spec.m(), g.dt, 1e-8, u_prev,
                                              fixed, is_fixed, {}, nullptr, {}};
            const StepStats st = step.run(out, 1e-10 * std::max(scale, 1.0));
            if (!st.converged)
                throw SolverError("solve_projected: inner Newton did not converge", n, st.residual,
                                  st.iterations);

            // Multiplier = plain scheme residual at the new iterate.
            const auto um = power_slice(out, spec.m());
            double comp_res = 0.0;
            for (int j = 0; j < npl; ++j) {
                if (g.is_boundary_node(j)) {
                    lambda[static_cast<std::size_t>(j)] = 0.0;
                    continue;
                }
                lambda[static_cast<std::size_t>(j)] =
                    out[static_cast<std::size_t>(j)] - g.dt * laplacian_at(g, um, j) -
                    u_prev[static_cast<std::size_t>(j)];
                const double slack = out[static_cast<std::size_t>(j)] - psi_n[static_cast<std::size_t>(j)];
                comp_res = std::max(comp_res,
                                    std::abs(std::min(slack, lambda[static_cast<std::size_t>(j)])));
            }
            if (!set_changed && comp_res <= comp_tol) {
                done = true;
                break;
            }
        }
        if (!done)
            throw SolverError("solve_projected: active-set cycling", n, 0.0, outer);

        auto dst = sol.u.level(n);
        std::copy(out.begin(), out.end(), dst.begin());
    }
    sol.contact = detail::contact_cells(sol.u, spec.psi(), sol.contact_tol);
    sol.report.converged = true;
    return sol;
}

/// psi_eps = (psi^m + eps^m)^(1/m): positive everywhere, so compact support
/// is deliberately given up; the returned spec carries eps as its
/// lateral/initial level.
inline ObstacleSpec smooth_obstacle_eps(const ObstacleSpec& spec, double eps) {
    if (!(eps > 0.0) || eps > 1.0)
        throw std::invalid_argument("smooth_obstacle_eps: eps must lie in (0, 1]");
    const Grid& g = spec.grid();
    const double m = spec.m();
    Field psi_eps(g, 0.0, "psi_eps");
    for (int n = 0; n < g.nt; ++n)
        for (int j = 0; j < g.nodes_per_level(); ++j)
            psi_eps.at(n, j) = std::pow(upow(spec.psi().at(n, j), m) + std::pow(eps, m), 1.0 / m);
    return ObstacleSpec::make_positive(std::move(psi_eps), m, eps);
}

namespace detail {

/// One pass of nearest-neighbor averaging over the space-time lattice.
inline Field average_pass(const Field& f) {
    const Grid& g = f.grid();
    Field out = f;
    std::vector<int> nbr;
    for (int n = 0; n < g.nt; ++n)
        for (int j = 0; j < g.nodes_per_level(); ++j) {
            double sum = f.at(n, j);
            int count = 1;
            g.neighbors(j, nbr);
            for (int q : nbr) {
                sum += f.at(n, q);
                ++count;
            }
            if (n > 0) {
                sum += f.at(n - 1, j);
                ++count;
            }
            if (n + 1 < g.nt) {
                sum += f.at(n + 1, j);
                ++count;
            }
            out.at(n, j) = sum / count;
        }
    return out;
}

} // namespace detail

/// Smooth increasing obstacle family below a continuous-sampled psi:
/// band functions h_j = (sqrt(psi) - 1/sqrt(j))_+, interpolants f_j built
/// by iterated 3-point averaging clamped into [h_j, h_(j+1)], and
/// phi_j = f_j^2. Guarantees phi_j <= phi_(j+1) <= psi nodewise and
/// phi_j -> psi on {psi > 0}.
inline std::vector<ObstacleSpec> increasing_obstacle_sequence(const Field& psi, double m,
                                                              int count, int passes = 3) {
    if (count < 1) throw std::invalid_argument("increasing_obstacle_sequence: count must be >= 1");
    if (psi.min_value() < 0.0)
        throw std::invalid_argument("increasing_obstacle_sequence: psi must be nonnegative");
    const Grid& g = psi.grid();

    auto band = [&](int j) {
        Field h(g, 0.0, "h");
        const double cut = 1.0 / std::sqrt(static_cast<double>(j));
        for (int n = 0; n < g.nt; ++n)
            for (int node = 0; node < g.nodes_per_level(); ++node)
                h.at(n, node) = std::max(std::sqrt(std::max(psi.at(n, node), 0.0)) - cut, 0.0);
        return h;
    };

    std::vector<ObstacleSpec> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int j = 1; j <= count; ++j) {
        const Field lo = band(j);
        const Field hi = band(j + 1);

        Field f(g, 0.0, "f");
        for (int n = 0; n < g.nt; ++n)
            for (int node = 0; node < g.nodes_per_level(); ++node)
                f.at(n, node) = 0.5 * (lo.at(n, node) + hi.at(n, node));
        for (int pass = 0; pass < passes; ++pass) {
            f = detail::average_pass(f);
            for (int n = 0; n < g.nt; ++n)
                for (int node = 0; node < g.nodes_per_level(); ++node)
                    f.at(n, node) = std::clamp(f.at(n, node), lo.at(n, node), hi.at(n, node));
        }

        Field phi(g, 0.0, "phi");
        for (int n = 0; n < g.nt; ++n)
            for (int node = 0; node < g.nodes_per_level(); ++node)
                phi.at(n, node) = f.at(n, node) * f.at(n, node);
        out.push_back(ObstacleSpec::make(std::move(phi), m));
    }
    return out;
}

/// Reduite approximation: increasing limit of obstacle solutions along the
/// phi_j family (penalized backend). Family members solve independently in
/// parallel; monotonicity of the assembled sweep is then asserted, and a
/// violation beyond 1e-8 * scale flags a solver or sequence bug.
inline Field reduite_via_increasing_obstacles(const Field& psi, double m, int count,
                                              std::vector<Field>* iterates = nullptr) {
    const auto specs = increasing_obstacle_sequence(psi, m, count);
    const double tol = 1e-8 * std::max(1.0, psi.max_abs());

    std::vector<Field> ws(static_cast<std::size_t>(count));
    parallel_for(count, [&](int j) {
        ws[static_cast<std::size_t>(j)] = solve_penalized(specs[static_cast<std::size_t>(j)]).u;
    });

    for (int j = 1; j < count; ++j) {
        double worst = 0.0;
        for (int n = 0; n < psi.grid().nt; ++n)
            for (int node = 0; node < psi.grid().nodes_per_level(); ++node)
                worst = std::max(worst, ws[static_cast<std::size_t>(j - 1)].at(n, node) -
                                            ws[static_cast<std::size_t>(j)].at(n, node));
        if (worst > tol)
            throw SolverError("reduite_via_increasing_obstacles: monotonicity violated", j, worst,
                              0);
    }
    Field out = ws.back();
    if (iterates) *iterates = std::move(ws);
    out.set_name("reduite");
    return out;
}

} // namespace pmelab
