#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace pmelab {

/// Thomas algorithm for a tridiagonal system. The Jacobians this project
/// assembles are M-matrices (positive diagonal, nonpositive off-diagonals,
/// column dominant), so elimination without pivoting is stable.
/// Overwrites rhs with the solution.
inline void solve_tridiagonal(std::span<double> lower, std::span<double> diag,
                              std::span<double> upper, std::span<double> rhs) {
    const std::size_t n = diag.size();
    if (n == 0) return;
    for (std::size_t i = 1; i < n; ++i) {
        const double w = lower[i] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    rhs[n - 1] /= diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;)
        rhs[i] = (rhs[i] - upper[i] * rhs[i + 1]) / diag[i];
}

struct CGResult {
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
};

/// Conjugate gradients on a symmetric positive-definite operator given as a
/// matrix-free apply. Relative tolerance on the residual 2-norm.
inline CGResult conjugate_gradient(
    const std::function<void(std::span<const double>, std::span<double>)>& apply,
    std::span<const double> rhs, std::span<double> x, double rel_tol = 1e-12,
    int max_iter = 0) {
    const std::size_t n = rhs.size();
    if (max_iter <= 0) max_iter = static_cast<int>(20 * n + 100);
    std::vector<double> r(n), p(n), ap(n);

    apply(x, ap);
    double rr = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        r[i] = rhs[i] - ap[i];
        p[i] = r[i];
        rr += r[i] * r[i];
        bb += rhs[i] * rhs[i];
    }
    const double stop2 = rel_tol * rel_tol * std::max(bb, 1e-300);

    CGResult res;
    while (res.iterations < max_iter && rr > stop2) {
        apply(p, ap);
        double pap = 0.0;
        for (std::size_t i = 0; i < n; ++i) pap += p[i] * ap[i];
        if (pap <= 0.0) break;  // not SPD or converged to roundoff
        const double alpha = rr / pap;
        double rr_new = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            rr_new += r[i] * r[i];
        }
        const double beta = rr_new / rr;
        for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
        rr = rr_new;
        ++res.iterations;
    }
    res.residual = std::sqrt(rr);
    res.converged = rr <= stop2;
    return res;
}

} // namespace pmelab
