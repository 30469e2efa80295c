#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pmelab/field.hpp"
#include "pmelab/grid.hpp"
#include "pmelab/linalg.hpp"
#include "pmelab/measure.hpp"
#include "pmelab/operators.hpp"

namespace pmelab {

/// A time step failed to converge. Carries the failing level and the last
/// residual; no partial field escapes.
class SolverError : public std::runtime_error {
public:
    SolverError(std::string what, int level, double residual, int iterations)
        : std::runtime_error(std::move(what)), level(level), residual(residual),
          iterations(iterations) {}
    int level;
    double residual;
    int iterations;
};

/// Lateral Dirichlet data: either one constant or a per-(node, level) table.
class BoundaryData {
public:
    BoundaryData() : constant_(0.0) {}
    static BoundaryData constant(double c) {
        BoundaryData b;
        b.constant_ = c;
        return b;
    }
    static BoundaryData from_function(std::function<double(double, double, double)> f) {
        BoundaryData b;
        b.fn_ = std::move(f);
        return b;
    }
    double value(const Grid& g, int node, int level) const {
        return fn_ ? fn_(g.x_of(node), g.y_of(node), g.t_of(level)) : constant_;
    }

private:
    double constant_;
    std::function<double(double, double, double)> fn_;
};

/// Cauchy-Dirichlet problem for u_t = lap(u^m) + S with m > 1.
struct PMEProblem {
    Grid grid;
    double m = 2.0;
    std::vector<double> initial;                    // level-0 nodal values
    BoundaryData lateral;
    std::function<double(int node, int level)> source;  // optional nodal density
    double reg_floor = 1e-8;                        // degenerate-linearization floor

    static PMEProblem on(const Grid& g, double m) {
        PMEProblem p;
        p.grid = g;
        p.m = m;
        p.initial.assign(static_cast<std::size_t>(g.nodes_per_level()), 0.0);
        p.validate();
        return p;
    }

    void validate() const {
        if (!(m > 1.0)) throw std::invalid_argument("PMEProblem: requires m > 1");
        if (!(reg_floor > 0.0) || reg_floor > 1e-6)
            throw std::invalid_argument("PMEProblem: reg_floor must lie in (0, 1e-6]");
        for (double v : initial)
            if (v < 0.0 || !std::isfinite(v))
                throw std::invalid_argument("PMEProblem: initial data must be nonnegative and finite");
    }
};

struct SolverReport {
    std::vector<int> newton_iterations;   // per step
    std::vector<double> max_residual;     // per step
    double clamped_magnitude = 0.0;       // total projection applied to iterates
    bool converged = false;
    double wall_time = 0.0;               // seconds

    int total_newton_iterations() const {
        int s = 0;
        for (int n : newton_iterations) s += n;
        return s;
    }
};

struct StepStats {
    int iterations = 0;
    double residual = 0.0;
    double clamped = 0.0;
    bool converged = false;
};

/// Piecewise-linear penalty switch: 0 below -delta, 1 above 0.
inline double penalty_eta(double s, double delta) {
    if (s >= 0.0) return 1.0;
    if (s <= -delta) return 0.0;
    return 1.0 + s / delta;
}

inline double penalty_eta_prime(double s, double delta) {
    return (s < 0.0 && s > -delta) ? 1.0 / delta : 0.0;
}

/// Optional semilinear penalty source eta_delta(psi^m - u^m) * pos_part,
/// evaluated at one level. Spans cover all nodes of the level.
struct PenaltyTerm {
    std::span<const double> psi_m;
    std::span<const double> pos_part;
    double delta = 0.0;
};

namespace detail {

/// One backward-Euler step of u_t = lap(u^m) + source(u) with nodes marked
/// fixed held at prescribed values (boundary nodes always; obstacle active
/// sets additionally). Newton in the primal variable with the regularized
/// diagonal weight m (u + reg)^(m-1), damped by halving with projection of
/// iterates onto u >= 0.
///
/// 1-D Jacobians are solved directly (tridiagonal, identity rows at fixed
/// nodes). In 2-D the reduced system on free nodes is symmetrized by the
/// diagonal weight and solved by conjugate gradients.
struct ImplicitStep {
    const Grid& g;
    double m;
    double dt;
    double reg_floor;
    std::span<const double> u_prev;
    std::span<const double> fixed_values;
    const std::vector<std::uint8_t>& is_fixed;
    std::span<const double> source;  // may be empty
    const PenaltyTerm* penalty = nullptr;
    std::span<const double> initial_guess;  // optional warm start

    int max_iter = 50;
    int max_halvings = 30;
    int nonmonotone_budget = 0;  // semismooth systems may need uphill steps

    /// Residual of the step equation. The convergence norm divides each
    /// entry by its Jacobian diagonal contribution from the penalty switch:
    /// inside the switch band the raw residual floor is set by roundoff
    /// (slope up to dt * P / delta), while the diagonally scaled residual
    /// still measures the error in u itself. Without a penalty the two
    /// norms coincide.
    double residual_at(std::span<const double> u, std::vector<double>& um,
                       std::vector<double>& res) const {
        const int npl = g.nodes_per_level();
        um.resize(static_cast<std::size_t>(npl));
        for (int j = 0; j < npl; ++j) um[static_cast<std::size_t>(j)] = upow(u[static_cast<std::size_t>(j)], m);
        res.assign(static_cast<std::size_t>(npl), 0.0);
        double worst = 0.0;
        for (int j = 0; j < npl; ++j) {
            if (is_fixed[static_cast<std::size_t>(j)] || g.is_boundary_node(j)) continue;
            double s = source.empty() ? 0.0 : source[static_cast<std::size_t>(j)];
            double diag = 1.0;
            if (penalty) {
                const double gap = penalty->psi_m[static_cast<std::size_t>(j)] - um[static_cast<std::size_t>(j)];
                s += penalty_eta(gap, penalty->delta) * penalty->pos_part[static_cast<std::size_t>(j)];
                diag += dt * penalty_eta_prime(gap, penalty->delta) *
                        m * std::pow(std::max(u[static_cast<std::size_t>(j)], 0.0) + reg_floor, m - 1.0) *
                        penalty->pos_part[static_cast<std::size_t>(j)];
            }
            const double f = u[static_cast<std::size_t>(j)] - dt * laplacian_at(g, um, j) -
                             u_prev[static_cast<std::size_t>(j)] - dt * s;
            res[static_cast<std::size_t>(j)] = f;
            worst = std::max(worst, std::abs(f) / diag);
        }
        return worst;
    }

    StepStats run(std::span<double> out, double newton_tol) const {
        const int npl = g.nodes_per_level();
        StepStats stats;

        std::vector<double> u(static_cast<std::size_t>(npl));
        for (int j = 0; j < npl; ++j) {
            if (is_fixed[static_cast<std::size_t>(j)] || g.is_boundary_node(j))
                u[static_cast<std::size_t>(j)] = fixed_values[static_cast<std::size_t>(j)];
            else if (!initial_guess.empty())
                u[static_cast<std::size_t>(j)] = std::max(initial_guess[static_cast<std::size_t>(j)], 0.0);
            else
                u[static_cast<std::size_t>(j)] = std::max(u_prev[static_cast<std::size_t>(j)], 0.0);
        }

        std::vector<double> um, res, w(static_cast<std::size_t>(npl)),
            dpen(static_cast<std::size_t>(npl)), step(static_cast<std::size_t>(npl)),
            um_t, res_t, base;
        const double floor_tol = 1e-14 * std::max(1.0, newton_tol / 1e-10);
        int nonmono_left = nonmonotone_budget;

        double resnorm = residual_at(u, um, res);
        for (int iter = 0; iter < max_iter; ++iter) {
            if (resnorm <= floor_tol) break;
            stats.iterations = iter + 1;

            for (int j = 0; j < npl; ++j) {
                w[static_cast<std::size_t>(j)] =
                    m * std::pow(std::max(u[static_cast<std::size_t>(j)], 0.0) + reg_floor, m - 1.0);
                double d = 0.0;
                if (penalty) {
                    const double gap = penalty->psi_m[static_cast<std::size_t>(j)] - um[static_cast<std::size_t>(j)];
                    d = dt * penalty_eta_prime(gap, penalty->delta) *
                        w[static_cast<std::size_t>(j)] * penalty->pos_part[static_cast<std::size_t>(j)];
                }
                dpen[static_cast<std::size_t>(j)] = d;
            }

            solve_newton_system(w, dpen, res, step);

            // Damped update with projection onto u >= 0. Semismooth penalty
            // systems are allowed a bounded number of uphill full steps when
            // the active band flips and monotone damping stalls.
            base = u;
            double lambda = 1.0;
            bool accepted = false;
            double full_step_norm = 0.0, full_step_clamped = 0.0;
            for (int halve = 0; halve <= max_halvings; ++halve) {
                double clamped_here = 0.0;
                for (int j = 0; j < npl; ++j) {
                    if (is_fixed[static_cast<std::size_t>(j)] || g.is_boundary_node(j)) continue;
                    double trial = base[static_cast<std::size_t>(j)] - lambda * step[static_cast<std::size_t>(j)];
                    if (trial < 0.0) {
                        clamped_here += -trial;
                        trial = 0.0;
                    }
                    u[static_cast<std::size_t>(j)] = trial;
                }
                const double trial_norm = residual_at(u, um_t, res_t);
                if (halve == 0) {
                    full_step_norm = trial_norm;
                    full_step_clamped = clamped_here;
                }
                if (trial_norm < resnorm) {
                    resnorm = trial_norm;
                    um.swap(um_t);
                    res.swap(res_t);
                    stats.clamped += clamped_here;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            if (!accepted) {
                if (nonmono_left > 0 && std::isfinite(full_step_norm)) {
                    --nonmono_left;
                    for (int j = 0; j < npl; ++j) {
                        if (is_fixed[static_cast<std::size_t>(j)] || g.is_boundary_node(j)) continue;
                        double trial = base[static_cast<std::size_t>(j)] - step[static_cast<std::size_t>(j)];
                        u[static_cast<std::size_t>(j)] = std::max(trial, 0.0);
                    }
                    resnorm = residual_at(u, um, res);
                    stats.clamped += full_step_clamped;
                    continue;
                }
                u = base;
                break;
            }
        }

        stats.residual = resnorm;
        stats.converged = resnorm <= newton_tol;
        for (int j = 0; j < npl; ++j) out[static_cast<std::size_t>(j)] = u[static_cast<std::size_t>(j)];
        return stats;
    }

private:
    void solve_newton_system(const std::vector<double>& w, const std::vector<double>& dpen,
                             const std::vector<double>& res, std::vector<double>& step) const {
        const int npl = g.nodes_per_level();
        const double r = dt / (g.h * g.h);
        auto fixed = [&](int j) {
            return is_fixed[static_cast<std::size_t>(j)] || g.is_boundary_node(j) != 0;
        };

        if (g.dim == 1) {
            std::vector<double> lo(static_cast<std::size_t>(npl), 0.0),
                di(static_cast<std::size_t>(npl), 1.0), up(static_cast<std::size_t>(npl), 0.0),
                rhs(static_cast<std::size_t>(npl), 0.0);
            for (int j = 0; j < npl; ++j) {
                if (fixed(j)) continue;  // identity row, zero correction
                di[static_cast<std::size_t>(j)] = 1.0 + 2.0 * r * w[static_cast<std::size_t>(j)] +
                                                  dpen[static_cast<std::size_t>(j)];
                lo[static_cast<std::size_t>(j)] = fixed(j - 1) ? 0.0 : -r * w[static_cast<std::size_t>(j - 1)];
                up[static_cast<std::size_t>(j)] = fixed(j + 1) ? 0.0 : -r * w[static_cast<std::size_t>(j + 1)];
                rhs[static_cast<std::size_t>(j)] = res[static_cast<std::size_t>(j)];
            }
            solve_tridiagonal(lo, di, up, rhs);
            step = rhs;
            for (int j = 0; j < npl; ++j)
                if (fixed(j)) step[static_cast<std::size_t>(j)] = 0.0;
            return;
        }

        // 2-D: CG on the symmetrized reduced system
        //   (I + dt W^(1/2) (-lap) W^(1/2) + D) y = W^(1/2) res,  step = W^(-1/2) y.
        std::vector<int> free_nodes;
        free_nodes.reserve(static_cast<std::size_t>(npl));
        for (int j = 0; j < npl; ++j)
            if (!fixed(j)) free_nodes.push_back(j);
        const std::size_t nf = free_nodes.size();

        std::vector<double> sqw(static_cast<std::size_t>(npl), 0.0);
        for (int j : free_nodes) sqw[static_cast<std::size_t>(j)] = std::sqrt(w[static_cast<std::size_t>(j)]);

        std::vector<double> full(static_cast<std::size_t>(npl)), lap_full(static_cast<std::size_t>(npl));
        auto apply = [&](std::span<const double> y, std::span<double> out_y) {
            std::fill(full.begin(), full.end(), 0.0);
            for (std::size_t k = 0; k < nf; ++k)
                full[static_cast<std::size_t>(free_nodes[k])] = sqw[static_cast<std::size_t>(free_nodes[k])] * y[k];
            for (std::size_t k = 0; k < nf; ++k) {
                const int j = free_nodes[k];
                lap_full[static_cast<std::size_t>(j)] = laplacian_at(g, full, j);
            }
            for (std::size_t k = 0; k < nf; ++k) {
                const int j = free_nodes[k];
                out_y[k] = (1.0 + dpen[static_cast<std::size_t>(j)]) * y[k] -
                           dt * sqw[static_cast<std::size_t>(j)] * lap_full[static_cast<std::size_t>(j)];
            }
        };

        std::vector<double> rhs(nf), y(nf, 0.0);
        for (std::size_t k = 0; k < nf; ++k) {
            const int j = free_nodes[k];
            rhs[k] = sqw[static_cast<std::size_t>(j)] * res[static_cast<std::size_t>(j)];
        }
        conjugate_gradient(apply, rhs, y, 1e-12);

        step.assign(static_cast<std::size_t>(npl), 0.0);
        for (std::size_t k = 0; k < nf; ++k) {
            const int j = free_nodes[k];
            step[static_cast<std::size_t>(j)] = y[k] / sqw[static_cast<std::size_t>(j)];
        }
    }
};

}  // namespace detail

inline double newton_tolerance(std::span<const double> u_prev) {
    double s = 1.0;
    for (double v : u_prev) s = std::max(s, std::abs(v));
    return 1e-10 * s;
}

/// One implicit step: returns the nodal values at `level`, computed from
/// `u_prev` (values at level-1) with Dirichlet data and source evaluated at
/// `level`. Throws SolverError on Newton breakdown; no partial field.
inline std::vector<double> step_implicit(std::span<const double> u_prev, const PMEProblem& problem,
                                         int level, StepStats* stats_out = nullptr) {
    const Grid& g = problem.grid;
    if (level < 1 || level >= g.nt) throw std::out_of_range("step_implicit: level out of range");
    const int npl = g.nodes_per_level();

    std::vector<double> fixed(static_cast<std::size_t>(npl), 0.0);
    std::vector<std::uint8_t> is_fixed(static_cast<std::size_t>(npl), 0);
    for (int j = 0; j < npl; ++j)
        if (g.is_boundary_node(j)) {
            const double bv = problem.lateral.value(g, j, level);
            if (bv < 0.0 || !std::isfinite(bv))
                throw std::invalid_argument("step_implicit: lateral data must be nonnegative");
            fixed[static_cast<std::size_t>(j)] = bv;
        }

    std::vector<double> src;
    if (problem.source) {
        src.resize(static_cast<std::size_t>(npl));
        for (int j = 0; j < npl; ++j) src[static_cast<std::size_t>(j)] = problem.source(j, level);
    }

    std::vector<double> out(static_cast<std::size_t>(npl));
    detail::ImplicitStep step{g,    problem.m, g.dt,
                              problem.reg_floor, u_prev,  fixed, is_fixed,
                              src.empty() ? std::span<const double>{} : std::span<const double>(src),
                              nullptr, {}};
    const StepStats st = step.run(out, newton_tolerance(u_prev));
    if (stats_out) *stats_out = st;
    if (!st.converged)
        throw SolverError("step_implicit: Newton did not converge", level, st.residual, st.iterations);
    return out;
}

/// Full Cauchy-Dirichlet solve: level 0 from the initial data, each later
/// level from step_implicit. Throws SolverError with the failing level.
inline Field solve_cauchy_dirichlet(const PMEProblem& problem, SolverReport* report = nullptr) {
    problem.validate();
    const Grid& g = problem.grid;
    const auto t_start = std::chrono::steady_clock::now();

    Field u(g, 0.0, "u");
    auto lvl0 = u.level(0);
    for (int j = 0; j < g.nodes_per_level(); ++j) lvl0[static_cast<std::size_t>(j)] = problem.initial[static_cast<std::size_t>(j)];

    SolverReport rep;
    for (int n = 1; n < g.nt; ++n) {
        StepStats st;
        const std::vector<double> next = step_implicit(u.level(n - 1), problem, n, &st);
        rep.newton_iterations.push_back(st.iterations);
        rep.max_residual.push_back(st.residual);
        rep.clamped_magnitude += st.clamped;
        auto dst = u.level(n);
        std::copy(next.begin(), next.end(), dst.begin());
    }
    rep.converged = true;
    rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    if (report) *report = rep;
    return u;
}

/// Weak solution of the measure-data problem: zero initial and lateral data,
/// per-step nodal source density mu(cell)/(h^d dt).
inline Field solve_measure_data(const Grid& grid, double m, const DiscreteMeasure& mu,
                                SolverReport* report = nullptr) {
    if (!(mu.grid == grid)) throw std::invalid_argument("solve_measure_data: grid mismatch");
    for (double w : mu.weights)
        if (w < 0.0 || !std::isfinite(w))
            throw std::invalid_argument("solve_measure_data: weights must be nonnegative");

    PMEProblem p = PMEProblem::on(grid, m);
    const double inv_vol = 1.0 / grid.cell_volume();
    p.source = [&mu, &grid, inv_vol](int node, int level) {
        const int r = grid.interior_rank(node);
        if (r < 0 || level < 1) return 0.0;
        return mu.weights[static_cast<std::size_t>(grid.cell_index(r, level))] * inv_vol;
    };
    Field u = solve_cauchy_dirichlet(p, report);
    u.set_name("u_mu");
    return u;
}

/// First level index after K at which the universal decay bound
/// c (t - t_K)^(-1/(m-1)) falls below tol. Throws when the horizon exceeds
/// the grid extent (the caller must extend nt).
inline int truncation_horizon(const Grid& grid, double m, const CompactSet& K, double tol,
                              double c) {
    if (!(tol > 0.0)) throw std::invalid_argument("truncation_horizon: tol must be positive");
    const int last = K.is_empty() ? 1 : K.last_level();
    if (std::isinf(tol)) return last + 1;
    const double t_k = grid.t_of(last);
    const double gap = std::pow(c / tol, m - 1.0);
    const int level = static_cast<int>(std::ceil((t_k + gap - grid.t0) / grid.dt));
    if (level > grid.nt - 1)
        throw SolverError("truncation_horizon: horizon exceeds grid extent; extend nt", level, 0.0, 0);
    return level;
}

} // namespace pmelab
