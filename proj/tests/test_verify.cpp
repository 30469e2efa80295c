#include <doctest.h>

#include <cmath>

#include "pmelab/reference.hpp"
#include "pmelab/verify.hpp"
#include "pmelab/verify_suite.hpp"

using namespace pmelab;

TEST_CASE("cylinder comparison: identity and ordered constants") {
    const Grid g = Grid::make_1d(16, 10, 1.0, 0.05);
    const Field a(g, 0.3), b(g, 0.7);

    auto rep = compare_cylinder(a, a, 2.0);
    CHECK(rep.hypotheses_ok);
    CHECK(rep.pass);
    CHECK(rep.worst_violation == 0.0);

    rep = compare_cylinder(a, b, 2.0);
    CHECK(rep.hypotheses_ok);
    CHECK(rep.pass);

    // reversed constants violate the boundary ordering, instance rejected
    rep = compare_cylinder(b, a, 2.0);
    CHECK(!rep.hypotheses_ok);
    CHECK(rep.rejected_hypothesis == "ordering fails on the parabolic boundary");
}

TEST_CASE("cylinder comparison: supersolution via ordered data and source") {
    const Grid g = Grid::make_1d(24, 14, 1.0, 0.03);
    PMEProblem pu = PMEProblem::on(g, 2.0);
    for (int j = 1; j < g.nx; ++j)
        pu.initial[static_cast<std::size_t>(j)] = 0.4 * std::sin(3.14159 * g.x_of(j));
    const Field u = solve_cauchy_dirichlet(pu);

    PMEProblem pv = pu;
    for (int j = 1; j < g.nx; ++j) pv.initial[static_cast<std::size_t>(j)] += 0.1;
    DiscreteMeasure mu = DiscreteMeasure::zero(g);
    mu.weights[static_cast<std::size_t>(g.cell_index(6, 4))] = 0.03;
    const double inv_vol = 1.0 / g.cell_volume();
    pv.source = [&mu, &g, inv_vol](int node, int level) {
        const int r = g.interior_rank(node);
        if (r < 0 || level < 1) return 0.0;
        return mu.weights[static_cast<std::size_t>(g.cell_index(r, level))] * inv_vol;
    };
    const Field v = solve_cauchy_dirichlet(pv);

    const auto rep = compare_cylinder(u, v, 2.0);
    CHECK(rep.hypotheses_ok);
    CHECK(rep.pass);
}

TEST_CASE("summing a solution and a measure solve is not a supersolution") {
    // the hypothesis checker must reject the sum, not count it as a failure
    const Grid g = Grid::make_1d(40, 20, 1.0, 0.02);
    const auto bb = BarenblattParams::make(2.0, 1, 0.05, 0.5, 0.1);
    PMEProblem p = PMEProblem::on(g, 2.0);
    for (int j = 0; j < g.nodes_per_level(); ++j)
        p.initial[static_cast<std::size_t>(j)] = barenblatt_eval(bb, g.x_of(j), 0.0);
    const Field u = solve_cauchy_dirichlet(p);

    DiscreteMeasure mu = DiscreteMeasure::zero(g);
    mu.weights[static_cast<std::size_t>(g.cell_index(g.interior_rank(10), 4))] = 0.05;
    const Field w = solve_measure_data(g, 2.0, mu);

    Field v = u;
    for (int n = 0; n < g.nt; ++n)
        for (int j = 0; j < g.nodes_per_level(); ++j) v.at(n, j) = u.at(n, j) + w.at(n, j);

    const auto rep = compare_cylinder(u, v, 2.0);
    CHECK(!rep.hypotheses_ok);
    CHECK(rep.rejected_hypothesis == "v is not a discrete supersolution");
}

TEST_CASE("punctured comparison on nested balayages") {
    const Grid g = Grid::make_1d(16, 14, 1.0, 1.0 / 16.0);
    const CompactSet k = CompactSet::of_box(g, 7, 8, 6, 7);
    const CompactSet k2 = CompactSet::of_box(g, 6, 9, 5, 8);
    const Field u = balayage(k, 2.0, 3);
    const Field v = balayage(k2, 2.0, 3);

    auto rep = compare_punctured(u, v, k, 2.0);
    CHECK(rep.hypotheses_ok);
    CHECK(rep.pass);

    // identity: margin zero
    rep = compare_punctured(u, u, k, 2.0);
    CHECK(rep.hypotheses_ok);
    CHECK(rep.pass);
    CHECK(rep.worst_violation == 0.0);

    // halving v breaks the ordering on K: rejected with the named hypothesis
    Field v_half = v;
    for (int n = 0; n < g.nt; ++n)
        for (int j = 0; j < g.nodes_per_level(); ++j) v_half.at(n, j) *= 0.5;
    rep = compare_punctured(u, v_half, k, 2.0);
    CHECK(!rep.hypotheses_ok);
    CHECK(rep.rejected_hypothesis == "ordering fails on K");

    // zero v fails strict positivity on K
    rep = compare_punctured(Field(g, 0.0), Field(g, 0.0), k, 2.0);
    CHECK(!rep.hypotheses_ok);
    CHECK(rep.rejected_hypothesis == "v is not strictly positive on K");
}

TEST_CASE("union-of-boxes comparison") {
    const Grid g = Grid::make_1d(20, 16, 1.0, 1.0 / 20.0);
    const SpaceTimeUnion e(g, {Box{2, 18, 1, 9}, Box{2, 9, 7, 15}});

    // restriction of a globally ordered pair with mass outside E
    DiscreteMeasure mu = DiscreteMeasure::zero(g);
    for (int c = 0; c < g.cell_count(); ++c) {
        const int node = g.interior_node(g.cell_rank(c));
        if (!e.inside(node, g.cell_level(c)) && g.node_ix(node) >= 12 && g.cell_level(c) >= 10)
            mu.weights[static_cast<std::size_t>(c)] = 0.05;
    }
    REQUIRE(mu.total() > 0.0);
    const Field u = solve_measure_data(g, 2.0, mu.scaled(0.7));
    const Field v = solve_measure_data(g, 2.0, mu);
    auto rep = compare_general_open(u, v, e, 2.0);
    CHECK(rep.hypotheses_ok);
    CHECK(rep.pass);

    // interior solve from boundary data 0.9 v
    Field data = v;
    for (int n = 0; n < g.nt; ++n)
        for (int j = 0; j < g.nodes_per_level(); ++j) data.at(n, j) = 0.9 * v.at(n, j);
    const Field u2 = solve_on_union(e, 2.0, data);
    rep = compare_general_open(u2, v, e, 2.0);
    CHECK(rep.hypotheses_ok);
    CHECK(rep.pass);

    // a single box reduces to cylinder semantics with the top included
    const SpaceTimeUnion single(g, {Box{3, 17, 2, 12}});
    const Field u_single = solve_on_union(single, 2.0, data);
    rep = compare_general_open(u_single, v, single, 2.0);
    CHECK(rep.hypotheses_ok);
    CHECK(rep.pass);

    // reversed data must be rejected on a boundary piece
    Field data_bad = v;
    for (int n = 0; n < g.nt; ++n)
        for (int j = 0; j < g.nodes_per_level(); ++j) data_bad.at(n, j) = 1.1 * v.at(n, j) + 0.01;
    const Field u3 = solve_on_union(e, 2.0, data_bad);
    rep = compare_general_open(u3, v, e, 2.0);
    CHECK(!rep.hypotheses_ok);
    CHECK(rep.rejected_hypothesis.find("ordering fails") != std::string::npos);
}

TEST_CASE("2-D union-of-boxes comparison") {
    const Grid g = Grid::make_2d(10, 10, 10, 1.0, 0.03);
    const SpaceTimeUnion e(g, {Box{1, 9, 0, 6, 1, 9}, Box{1, 6, 4, 9, 1, 6}});

    DiscreteMeasure mu = DiscreteMeasure::zero(g);
    Xoshiro256pp rng(33);
    for (int k = 0; k < 5; ++k)
        mu.weights[rng.below(static_cast<std::uint64_t>(g.cell_count()))] = rng.uniform(0.01, 0.05);
    const Field v = solve_measure_data(g, 2.0, mu);

    Field data = v;
    for (int n = 0; n < g.nt; ++n)
        for (int j = 0; j < g.nodes_per_level(); ++j) data.at(n, j) = 0.9 * v.at(n, j);
    const Field u = solve_on_union(e, 2.0, data);

    const auto rep = compare_general_open(u, v, e, 2.0);
    CHECK(rep.hypotheses_ok);
    CHECK(rep.pass);
}

TEST_CASE("scaling residual identity: trivial and computed cases") {
    const Grid g = Grid::make_1d(30, 12, 1.0, 1.0 / 30.0);

    // constants: everything vanishes
    const Field c(g, 0.5);
    auto rep = scaling_residual_check(c, 2.0, {0.0, 0.1});
    CHECK(rep.pass);
    CHECK(rep.worst_identity_gap <= rep.tol);
    CHECK(rep.predicted_sup[0] == 0.0);
    CHECK(rep.predicted_sup[1] == 0.0);

    // Barenblatt-data solve: identity to 1e-9 scale, eps-ratio in [8,12]
    const auto bb = BarenblattParams::make(2.0, 1, 0.05, 0.5, 0.1);
    PMEProblem p = PMEProblem::on(g, 2.0);
    for (int j = 0; j < g.nodes_per_level(); ++j)
        p.initial[static_cast<std::size_t>(j)] = barenblatt_eval(bb, g.x_of(j), 0.0);
    const Field u = solve_cauchy_dirichlet(p);

    for (double m : {1.5, 2.0, 3.0}) {
        PMEProblem pm = p;
        pm.m = m;
        const Field um = solve_cauchy_dirichlet(pm);
        rep = scaling_residual_check(um, m, {0.1, 0.01});
        CHECK(rep.pass);
        CHECK(rep.ratio_checked);
        CHECK(rep.ratio >= 8.0);
        CHECK(rep.ratio <= 12.0);
    }
}

TEST_CASE("measure domination reports") {
    const Grid g = Grid::make_1d(16, 12, 1.0, 0.05);
    Xoshiro256pp rng(77);
    DiscreteMeasure mu = DiscreteMeasure::zero(g);
    for (int k = 0; k < 5; ++k)
        mu.weights[rng.below(static_cast<std::uint64_t>(g.cell_count()))] = rng.uniform(0.02, 0.1);

    // equality within solver tolerance
    auto rep = measure_domination(mu, mu, 2.0);
    CHECK(rep.hypotheses_ok);
    CHECK(rep.pass);

    // zero measure: v = 0 <= u
    rep = measure_domination(mu, DiscreteMeasure::zero(g), 2.0);
    CHECK(rep.hypotheses_ok);
    CHECK(rep.pass);

    for (double m : {1.5, 2.0, 3.0}) {
        rep = measure_domination(mu, mu.scaled(0.7), m);
        CHECK(rep.hypotheses_ok);
        CHECK(rep.pass);
    }

    // precondition failure
    rep = measure_domination(mu, mu.scaled(2.0), 2.0);
    CHECK(!rep.hypotheses_ok);
}

TEST_CASE("bundled desk suite: valid instances pass, probes reject") {
    const SuiteResult res = run_comparison_suite("desk", 7);
    INFO("valid ", res.valid_count, " passed ", res.valid_passed, " rejected ",
         res.valid_rejected, " probes ", res.probe_count, "/", res.probes_rejected);
    CHECK(res.valid_count >= 30);
    CHECK(res.valid_rejected == 0);
    CHECK(res.valid_passed == res.valid_count);
    CHECK(res.probe_count >= 3);
    CHECK(res.probes_rejected == res.probe_count);
    CHECK(res.all_pass);

    // punctured and union-of-boxes geometries both contribute at least 12
    int punctured = 0, unions = 0;
    for (const auto& inst : res.instances) {
        if (inst.is_probe) continue;
        if (inst.geometry == "punctured") ++punctured;
        if (inst.geometry == "union-of-boxes") ++unions;
    }
    CHECK(punctured + unions >= 30);
}

TEST_CASE("suite results do not depend on the worker count") {
    setenv("PMELAB_THREADS", "3", 1);
    const SuiteResult parallel = run_comparison_suite("desk", 21);
    setenv("PMELAB_THREADS", "1", 1);
    const SuiteResult serial = run_comparison_suite("desk", 21);
    unsetenv("PMELAB_THREADS");

    REQUIRE(parallel.instances.size() == serial.instances.size());
    for (std::size_t i = 0; i < parallel.instances.size(); ++i) {
        CHECK(parallel.instances[i].name == serial.instances[i].name);
        CHECK(parallel.instances[i].worst_violation == serial.instances[i].worst_violation);
        CHECK(parallel.instances[i].pass == serial.instances[i].pass);
    }
}

TEST_CASE("suite generation is deterministic in the seed") {
    const SuiteResult a = run_comparison_suite("desk", 42);
    const SuiteResult b = run_comparison_suite("desk", 42);
    REQUIRE(a.instances.size() == b.instances.size());
    for (std::size_t i = 0; i < a.instances.size(); ++i) {
        CHECK(a.instances[i].name == b.instances[i].name);
        CHECK(a.instances[i].pass == b.instances[i].pass);
        CHECK(a.instances[i].worst_violation == b.instances[i].worst_violation);
    }
    const SuiteResult c = run_comparison_suite("desk", 43);
    bool any_differs = false;
    for (std::size_t i = 0; i < std::min(a.instances.size(), c.instances.size()); ++i)
        if (a.instances[i].worst_violation != c.instances[i].worst_violation) any_differs = true;
    CHECK(any_differs);
}
