#include <doctest.h>

#include <cmath>

#include "pmelab/operators.hpp"
#include "pmelab/reference.hpp"
#include "pmelab/solver.hpp"

using namespace pmelab;

TEST_CASE("barenblatt vanishes outside its support ball") {
    const auto p = BarenblattParams::make(2.0, 1, 0.05, 0.5, 0.1);
    const double r = p.support_radius(0.0);
    CHECK(barenblatt_eval(p, 0.5 + r * 1.01, 0.0) == 0.0);
    CHECK(barenblatt_eval(p, 0.5 - r * 1.01, 0.0) == 0.0);
    CHECK(barenblatt_eval(p, 0.5 + r * 0.99, 0.0) > 0.0);
}

TEST_CASE("barenblatt center value matches the closed form") {
    const auto p = BarenblattParams::make(2.0, 1, 0.05, 0.5, 0.1);
    for (double t : {0.0, 0.1, 0.7}) {
        const double expect = std::pow(p.C, 1.0 / (p.m - 1.0)) * std::pow(t + p.tau, -p.alpha);
        CHECK(barenblatt_eval(p, 0.5, t) == doctest::Approx(expect).epsilon(1e-14));
        CHECK(p.peak(t) == doctest::Approx(expect).epsilon(1e-14));
    }
}

TEST_CASE("barenblatt mass is conserved under the normalization") {
    const Grid g = Grid::make_1d(400, 3, 1.0, 0.05);
    const auto p = BarenblattParams::make(2.0, 1, 0.05, 0.5, 0.1);
    REQUIRE(p.support_radius(0.1) < 0.5);
    for (double t : {0.0, 0.05, 0.1}) {
        double mass = 0.0;
        for (int j = 0; j <= g.nx; ++j) mass += barenblatt_eval(p, g.x_of(j), t) * g.h;
        CHECK(std::abs(mass - p.mass) / p.mass < 1e-3);
    }
}

TEST_CASE("barenblatt in 2-D integrates to its mass") {
    const Grid g = Grid::make_2d(200, 200, 2, 1.0, 0.05);
    const auto p = BarenblattParams::make(2.0, 2, 0.02, 0.5, 0.05, 0.5);
    REQUIRE(p.support_radius(0.0) < 0.5);
    double mass = 0.0;
    for (int j = 0; j < g.nodes_per_level(); ++j)
        mass += barenblatt_eval(p, g.x_of(j), 0.0, g.y_of(j)) * g.h * g.h;
    CHECK(std::abs(mass - p.mass) / p.mass < 1e-2);
}

TEST_CASE("barenblatt is a discrete near-solution away from the front") {
    const Grid g = Grid::make_1d(200, 6, 1.0, 1e-4);
    const auto p = BarenblattParams::make(2.0, 1, 0.05, 0.5, 0.1);
    const Field b = barenblatt_field(g, p);
    for (int n = 1; n < g.nt; ++n) {
        const auto res = pme_residual_slice(b, 2.0, n);
        const double radius = p.support_radius(g.t_of(n));
        for (int r = 0; r < g.interior_count(); ++r) {
            const double x = g.x_of(g.interior_node(r));
            if (std::abs(x - 0.5) > radius - 5.0 * g.h) continue;  // skip the free-boundary collar
            CHECK(std::abs(res[static_cast<std::size_t>(r)]) < 2.0 * (g.h * g.h + g.dt) *
                                                                   p.peak(0.0) / (g.h * g.h));
        }
    }
}

TEST_CASE("universal calibration finds the separable decay exponent") {
    const Grid g = Grid::make_1d(50, 76, 1.0, 0.02);
    const auto cal = universal_calibrate(g, 2.0, {100.0});
    CHECK(cal.fit_performed);
    CHECK(std::abs(cal.fitted_exponent - (-1.0)) < 0.1);
    CHECK(cal.c_emp > 0.0);
}

TEST_CASE("pre-asymptotic Barenblatt window decays at the self-similar rate") {
    // Before the lateral boundary acts, the spreading bump follows the
    // self-similar decay sup ~ t^(-alpha), slower than the separable rate.
    const Grid g = Grid::make_1d(80, 40, 1.0, 0.00625);  // T = 0.25
    const auto bb = BarenblattParams::make(2.0, 1, 0.05, 0.5, 1e-3);
    REQUIRE(bb.support_radius(g.t_of(g.nt - 1)) < 0.5);

    std::vector<double> init(static_cast<std::size_t>(g.nodes_per_level()));
    for (int j = 0; j < g.nodes_per_level(); ++j)
        init[static_cast<std::size_t>(j)] = barenblatt_eval(bb, g.x_of(j), 0.0);

    const auto cal = universal_calibrate_fields(g, 2.0, {init});
    CHECK(cal.fit_performed);
    CHECK(std::abs(cal.fitted_exponent - (-bb.alpha)) < 0.15 * bb.alpha);
}

TEST_CASE("calibration requires a usable window") {
    const Grid g = Grid::make_1d(10, 12, 1.0, 0.05);
    CHECK_THROWS_AS(universal_calibrate(g, 2.0), std::invalid_argument);
}

TEST_CASE("calibration with zero data performs no fit") {
    const Grid g = Grid::make_1d(12, 40, 1.0, 0.02);
    const auto cal = universal_calibrate(g, 2.0, {0.0});
    CHECK(!cal.fit_performed);
    CHECK(cal.c_emp == 0.0);
}

TEST_CASE("caccioppoli bound on trivial fields") {
    const Grid g = Grid::make_1d(20, 10, 1.0, 0.05);
    const auto eta = hat_cutoff(g);

    const Field zero(g, 0.0);
    auto rep = caccioppoli_check(zero, 2.0, 1.0, eta);
    CHECK(rep.pass);
    CHECK(rep.lhs == 0.0);

    const Field c(g, 0.8);
    rep = caccioppoli_check(c, 2.0, 1.0, eta);
    CHECK(rep.pass);
    CHECK(rep.lhs == doctest::Approx(0.0));
}

TEST_CASE("caccioppoli rejects a field exceeding its bound") {
    const Grid g = Grid::make_1d(10, 6, 1.0, 0.05);
    const Field c(g, 2.0);
    CHECK_THROWS_AS(caccioppoli_check(c, 2.0, 1.0, hat_cutoff(g)), std::invalid_argument);
}

TEST_CASE("caccioppoli holds for a computed solution") {
    const Grid g = Grid::make_1d(40, 30, 1.0, 0.025);
    PMEProblem p = PMEProblem::on(g, 2.0);
    for (int j = 1; j < g.nx; ++j) p.initial[static_cast<std::size_t>(j)] = 0.9;
    const Field u = solve_cauchy_dirichlet(p);
    const auto rep = caccioppoli_check(u, 2.0, 1.0, hat_cutoff(g));
    CHECK(rep.pass);
    CHECK(rep.lhs > 0.0);
}
