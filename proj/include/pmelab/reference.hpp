#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "pmelab/field.hpp"
#include "pmelab/grid.hpp"
#include "pmelab/operators.hpp"
#include "pmelab/solver.hpp"

namespace pmelab {

/// Source-type (Barenblatt) solution of the PME, normalized by total mass.
///
///   B(x,t) = (t+tau)^(-alpha) (C - kappa |x-x0|^2 (t+tau)^(-2 beta))_+^(1/(m-1))
///
/// with alpha = n/(n(m-1)+2), beta = alpha/n, kappa = alpha(m-1)/(2mn) and
/// C fixed so the profile carries mass M for every t.
struct BarenblattParams {
    double m;
    int n;          // space dimension
    double mass;
    double x0, y0;  // center
    double tau;     // time offset, > 0

    double alpha, beta, kappa, C;

    static BarenblattParams make(double m, int n, double mass, double x0, double tau,
                                 double y0 = 0.0) {
        if (!(m > 1.0)) throw std::invalid_argument("Barenblatt: requires m > 1");
        if (n != 1 && n != 2) throw std::invalid_argument("Barenblatt: n must be 1 or 2");
        if (!(tau > 0.0)) throw std::invalid_argument("Barenblatt: tau must be positive");
        BarenblattParams p;
        p.m = m;
        p.n = n;
        p.mass = mass;
        p.x0 = x0;
        p.y0 = y0;
        p.tau = tau;
        p.alpha = n / (n * (m - 1.0) + 2.0);
        p.beta = p.alpha / n;
        p.kappa = p.alpha * (m - 1.0) / (2.0 * m * n);
        // Mass normalization: M = C^(1/(m-1) + n/2) kappa^(-n/2) I(m,n) with
        // I the integral of (1-|z|^2)^(1/(m-1)) over the unit ball.
        const double p_exp = 1.0 / (m - 1.0);
        double unit_ball_integral;
        if (n == 1) {
            unit_ball_integral = std::tgamma(0.5) * std::tgamma(p_exp + 1.0) /
                                 std::tgamma(p_exp + 1.5);
        } else {
            unit_ball_integral = std::numbers::pi * (m - 1.0) / m;
        }
        p.C = std::pow(mass * std::pow(p.kappa, n / 2.0) / unit_ball_integral,
                       1.0 / (p_exp + n / 2.0));
        return p;
    }

    /// Radius of the support ball at time t (with the tau offset applied).
    double support_radius(double t) const {
        return std::sqrt(C / kappa) * std::pow(t + tau, beta);
    }

    double peak(double t) const {
        return std::pow(C, 1.0 / (m - 1.0)) * std::pow(t + tau, -alpha);
    }
};

inline double barenblatt_eval(const BarenblattParams& p, double x, double t, double y = 0.0) {
    const double ts = t + p.tau;
    if (!(ts > 0.0)) throw std::invalid_argument("barenblatt_eval: t + tau must be positive");
    const double dx = x - p.x0;
    const double dy = p.n == 2 ? y - p.y0 : 0.0;
    const double rho2 = dx * dx + dy * dy;
    const double inner = p.C - p.kappa * rho2 * std::pow(ts, -2.0 * p.beta);
    if (inner <= 0.0) return 0.0;
    return std::pow(ts, -p.alpha) * std::pow(inner, 1.0 / (p.m - 1.0));
}

/// Sample the Barenblatt solution onto a grid as a Field.
inline Field barenblatt_field(const Grid& g, const BarenblattParams& p) {
    return Field::from_function(
        g, [&p](double x, double y, double t) { return barenblatt_eval(p, x, t, y); },
        "barenblatt");
}

struct CalibrationResult {
    double c_emp = 0.0;          // max over window of sup_x u * (t-t0)^(1/(m-1))
    double fitted_exponent = 0.0;
    int window_begin = 0;        // first level of the late-time window
    bool fit_performed = false;  // false when the data is identically zero
};

/// Empirical constant of the late-time decay bound
/// sup_x u(.,t) <= c (t-t0)^(-1/(m-1)) for solutions with zero lateral data.
/// Fits the decay of the supplied initial-data family over the last third
/// of the time levels.
inline CalibrationResult universal_calibrate_fields(
    const Grid& g, double m, const std::vector<std::vector<double>>& initials) {
    const int window_begin = (2 * g.nt) / 3;
    if (g.nt - window_begin < 10)
        throw std::invalid_argument("universal_calibrate: late-time window shorter than 10 levels");

    CalibrationResult out;
    out.window_begin = window_begin;
    const double inv_exp = 1.0 / (m - 1.0);

    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int count = 0;
    for (const auto& init : initials) {
        PMEProblem prob = PMEProblem::on(g, m);
        if (static_cast<int>(init.size()) != g.nodes_per_level())
            throw std::invalid_argument("universal_calibrate: initial data has the wrong size");
        prob.initial = init;
        for (int j = 0; j < g.nodes_per_level(); ++j)
            if (g.is_boundary_node(j)) prob.initial[static_cast<std::size_t>(j)] = 0.0;
        const Field u = solve_cauchy_dirichlet(prob);

        for (int n = window_begin; n < g.nt; ++n) {
            double sup = 0.0;
            for (int j = 0; j < g.nodes_per_level(); ++j) sup = std::max(sup, u.at(n, j));
            if (sup <= 0.0) continue;  // trivially bounded; nothing to fit
            const double t_rel = g.t_of(n) - g.t0;
            out.c_emp = std::max(out.c_emp, sup * std::pow(t_rel, inv_exp));
            const double lx = std::log(t_rel), ly = std::log(sup);
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
            ++count;
        }
    }
    if (count >= 2) {
        const double denom = count * sxx - sx * sx;
        out.fitted_exponent = (count * sxy - sx * sy) / denom;
        out.fit_performed = true;
    }
    return out;
}

/// Convenience form: constant interior initial levels.
inline CalibrationResult universal_calibrate(const Grid& g, double m,
                                             const std::vector<double>& initial_values = {10.0,
                                                                                          100.0}) {
    std::vector<std::vector<double>> initials;
    for (double v0 : initial_values)
        initials.emplace_back(static_cast<std::size_t>(g.nodes_per_level()), v0);
    return universal_calibrate_fields(g, m, initials);
}

struct CaccioppoliReport {
    double lhs = 0.0;
    double rhs = 0.0;
    bool pass = false;
};

/// Gradient-energy bound for bounded supersolutions: with |u| <= M and a
/// spatial cutoff 0 <= eta <= 1 vanishing on the boundary,
///   sum eta^2 |grad u^m|^2 h^d dt
///     <= 16 M^(2m) T sum |grad eta|^2 h^d + 6 M^(m+1) sum eta^2 h^d.
inline CaccioppoliReport caccioppoli_check(const Field& u, double m, double M,
                                           const std::vector<double>& eta) {
    const Grid& g = u.grid();
    if (static_cast<int>(eta.size()) != g.nodes_per_level())
        throw std::invalid_argument("caccioppoli_check: eta must be one spatial slice");
    if (u.max_abs() > M)
        throw std::invalid_argument("caccioppoli_check: field exceeds the stated bound M");
    for (int j = 0; j < g.nodes_per_level(); ++j) {
        const double e = eta[static_cast<std::size_t>(j)];
        if (e < 0.0 || e > 1.0)
            throw std::invalid_argument("caccioppoli_check: eta must lie in [0,1]");
        if (g.is_boundary_node(j) && e != 0.0)
            throw std::invalid_argument("caccioppoli_check: eta must be compactly supported");
    }

    const double hd = g.dim == 1 ? g.h : g.h * g.h;
    const double T = (g.nt - 1) * g.dt;

    CaccioppoliReport rep;
    for (int n = 1; n < g.nt; ++n) {
        const auto um = power_slice(u.level(n), m);
        rep.lhs += weighted_gradient_energy(g, um, eta) * g.dt;
    }
    double eta_sq = 0.0;
    for (double e : eta) eta_sq += e * e;
    const double grad_eta = gradient_pairing(g, std::span<const double>(eta),
                                             std::span<const double>(eta));
    rep.rhs = 16.0 * std::pow(M, 2.0 * m) * T * grad_eta +
              6.0 * std::pow(M, m + 1.0) * eta_sq * hd;
    rep.pass = rep.lhs <= rep.rhs;
    return rep;
}

/// Standard hat cutoff: 1 on the middle half of the domain, linear decay to
/// zero at the boundary. Useful default for the energy checks.
inline std::vector<double> hat_cutoff(const Grid& g) {
    std::vector<double> eta(static_cast<std::size_t>(g.nodes_per_level()), 0.0);
    auto ramp = [](double s) { return std::clamp(4.0 * std::min(s, 1.0 - s), 0.0, 1.0); };
    for (int j = 0; j < g.nodes_per_level(); ++j) {
        if (g.is_boundary_node(j)) continue;
        double v = ramp(g.x_of(j) / g.Lx);
        if (g.dim == 2) v = std::min(v, ramp(g.y_of(j) / g.Ly));
        eta[static_cast<std::size_t>(j)] = v;
    }
    return eta;
}

} // namespace pmelab
