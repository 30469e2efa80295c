#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pmelab/parallel.hpp"
#include "pmelab/verify.hpp"

namespace pmelab {

struct SuiteInstance {
    std::string name;
    std::string geometry;
    double m = 0.0;
    bool is_probe = false;  // deliberately violates a hypothesis
    bool hypotheses_ok = false;
    std::string rejected_hypothesis;
    bool pass = false;
    double worst_violation = 0.0;
    int worst_node = -1;
    int worst_level = -1;
    double comp_tol = 0.0;
};

struct SuiteResult {
    std::string suite;
    std::uint64_t seed = 0;
    std::vector<SuiteInstance> instances;
    int valid_count = 0;      // hypothesis-valid comparison instances
    int valid_passed = 0;
    int valid_rejected = 0;   // intended-valid instances the checker rejected
    int probe_count = 0;
    int probes_rejected = 0;
    bool all_pass = false;
};

namespace detail {

inline SuiteInstance record_instance(std::string name, double m, bool is_probe,
                                     const ComparisonReport& rep) {
    SuiteInstance inst;
    inst.name = std::move(name);
    inst.geometry = rep.geometry;
    inst.m = m;
    inst.is_probe = is_probe;
    inst.hypotheses_ok = rep.hypotheses_ok;
    inst.rejected_hypothesis = rep.rejected_hypothesis;
    inst.pass = rep.pass;
    inst.worst_violation = rep.worst_violation;
    inst.worst_node = rep.worst_node;
    inst.worst_level = rep.worst_level;
    inst.comp_tol = rep.comp_tol;
    return inst;
}

inline DiscreteMeasure sparse_measure(const Grid& g, Xoshiro256pp& rng, int spikes, double lo,
                                      double hi) {
    DiscreteMeasure mu = DiscreteMeasure::zero(g);
    for (int k = 0; k < spikes; ++k)
        mu.weights[rng.below(static_cast<std::uint64_t>(g.cell_count()))] = rng.uniform(lo, hi);
    return mu;
}

/// Random compact box with enough margin for balayage neighborhoods (r = 3)
/// after a one-cell dilation: positions stay in [5, nx-5] x [5, nt-6].
inline CompactSet random_compact(const Grid& g, Xoshiro256pp& rng) {
    const int ix_lo = 5, ix_hi = g.nx - 5;
    const int n_lo = 5, n_hi = g.nt - 6;
    if (ix_hi < ix_lo || n_hi < n_lo)
        throw std::invalid_argument("random_compact: grid too small for suite instances");
    const int ix0 = ix_lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(ix_hi - ix_lo + 1)));
    const int n0 = n_lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(n_hi - n_lo + 1)));
    const int wx = 1 + static_cast<int>(rng.below(2));
    const int wn = 1 + static_cast<int>(rng.below(2));
    return CompactSet::of_box(g, ix0, std::min(ix0 + wx - 1, ix_hi), n0,
                              std::min(n0 + wn - 1, n_hi));
}

inline CompactSet dilate_compact(const CompactSet& k) {
    const CellSet d = k.as_cellset().dilated(1);
    return CompactSet::of_cells(k.grid, d.cells());
}

} // namespace detail

/// The bundled theorem-level comparison suite. All randomness is drawn
/// up-front from named splits of the seed, so the instance list is
/// deterministic; the instances themselves are independent and execute in
/// parallel into pre-assigned slots (PMELAB_THREADS caps the workers).
/// Probes are hypothesis-violating by construction and must come back
/// rejected, never as failures.
inline SuiteResult run_comparison_suite(const std::string& suite_name, std::uint64_t seed) {
    const bool full = suite_name == "full";
    if (!full && suite_name != "desk")
        throw std::invalid_argument("run_comparison_suite: unknown suite '" + suite_name + "'");

    SuiteResult result;
    result.suite = suite_name;
    result.seed = seed;
    Xoshiro256pp root(seed);

    const int punctured_variants = full ? 4 : 3;
    const int union_variants = full ? 5 : 4;
    const int cylinder_variants = full ? 3 : 2;
    const std::vector<double> ms = {1.5, 2.0, 3.0};

    std::vector<std::function<SuiteInstance()>> tasks;

    // -- punctured geometry: balayage pairs ---------------------------------
    {
        auto rng = root.split("punctured");
        const std::vector<Grid> grids = {Grid::make_1d(16, 12, 1.0, 1.0 / 16.0),
                                         Grid::make_1d(20, 14, 1.0, 1.0 / 20.0)};
        int idx = 0;
        for (const Grid& g : grids)
            for (double m : ms)
                for (int variant = 0; variant < punctured_variants; ++variant) {
                    const CompactSet k = detail::random_compact(g, rng);
                    const std::string base =
                        "punctured-" + std::to_string(idx++) + "-m" + std::to_string(m);
                    if (variant % 3 == 1) {
                        tasks.push_back([k, m, base] {
                            // identity instance: u = v = balayage(K), margin zero
                            const Field b = balayage(k, m, 3);
                            return detail::record_instance(base + "-identity", m, false,
                                                           compare_punctured(b, b, k, m));
                        });
                    } else {
                        tasks.push_back([k, m, base] {
                            const CompactSet k2 = detail::dilate_compact(k);
                            const Field u = balayage(k, m, 3);
                            const Field v = balayage(k2, m, 3);
                            return detail::record_instance(base + "-nested", m, false,
                                                           compare_punctured(u, v, k, m));
                        });
                    }
                }

        // probe: v halved so the ordering on K must fail
        const Grid g = grids.front();
        const CompactSet k_probe = detail::random_compact(g, rng);
        tasks.push_back([k_probe, g] {
            const Field u = balayage(k_probe, 2.0, 3);
            Field v_bad = balayage(detail::dilate_compact(k_probe), 2.0, 3);
            for (int n = 0; n < g.nt; ++n)
                for (int j = 0; j < g.nodes_per_level(); ++j) v_bad.at(n, j) *= 0.5;
            return detail::record_instance("punctured-probe-scaled-v", 2.0, true,
                                           compare_punctured(u, v_bad, k_probe, 2.0));
        });

        // probe: K smaller than the contact set, so u does not solve off K
        const CompactSet k_small = detail::random_compact(g, rng);
        tasks.push_back([k_small] {
            const Field u_big = balayage(detail::dilate_compact(k_small), 2.0, 3);
            return detail::record_instance("punctured-probe-shrunk-K", 2.0, true,
                                           compare_punctured(u_big, u_big, k_small, 2.0));
        });
    }

    // -- union-of-boxes geometry --------------------------------------------
    {
        auto rng = root.split("union");
        const Grid g = Grid::make_1d(20, 16, 1.0, 1.0 / 20.0);
        int idx = 0;
        for (double m : ms)
            for (int variant = 0; variant < union_variants; ++variant, ++idx) {
                const int mid = 6 + static_cast<int>(rng.below(4));
                const SpaceTimeUnion e(
                    g, {Box{2, 18, 1, mid + 2}, Box{2, 8 + static_cast<int>(rng.below(6)), mid, 15}});
                const std::string base = "union-" + std::to_string(idx) + "-m" + std::to_string(m);
                if (variant % 2 == 0) {
                    // u solves inside E with data 0.9 v; v a global supersolution
                    const DiscreteMeasure mu = detail::sparse_measure(g, rng, 4, 0.02, 0.1);
                    tasks.push_back([g, e, m, mu, base] {
                        const Field v = solve_measure_data(g, m, mu);
                        Field data = v;
                        for (int n = 0; n < g.nt; ++n)
                            for (int j = 0; j < g.nodes_per_level(); ++j)
                                data.at(n, j) = 0.9 * v.at(n, j);
                        const Field u = solve_on_union(e, m, data);
                        return detail::record_instance(base + "-interior-solve", m, false,
                                                       compare_general_open(u, v, e, m));
                    });
                } else {
                    // restriction of a globally ordered pair; the measures
                    // live outside E so u stays a solution inside
                    DiscreteMeasure mu = DiscreteMeasure::zero(g);
                    for (int c = 0; c < g.cell_count(); ++c) {
                        const int node = g.interior_node(g.cell_rank(c));
                        if (!e.inside(node, g.cell_level(c)) && rng.uniform() < 0.08)
                            mu.weights[static_cast<std::size_t>(c)] = rng.uniform(0.02, 0.1);
                    }
                    tasks.push_back([g, e, m, mu, base] {
                        const Field u = solve_measure_data(g, m, mu.scaled(0.7));
                        const Field v = solve_measure_data(g, m, mu);
                        return detail::record_instance(base + "-restriction", m, false,
                                                       compare_general_open(u, v, e, m));
                    });
                }
            }

        // probe: u data above v on the boundary
        const SpaceTimeUnion e_probe(g, {Box{2, 18, 1, 9}, Box{2, 9, 7, 15}});
        const DiscreteMeasure mu_probe = detail::sparse_measure(g, rng, 4, 0.05, 0.15);
        tasks.push_back([g, e_probe, mu_probe] {
            const Field v = solve_measure_data(g, 2.0, mu_probe);
            Field data = v;
            for (int n = 0; n < g.nt; ++n)
                for (int j = 0; j < g.nodes_per_level(); ++j)
                    data.at(n, j) = 1.1 * v.at(n, j) + 0.01;
            const Field u = solve_on_union(e_probe, 2.0, data);
            return detail::record_instance("union-probe-reversed-data", 2.0, true,
                                           compare_general_open(u, v, e_probe, 2.0));
        });
    }

    // -- plain cylinders ------------------------------------------------------
    {
        auto rng = root.split("cylinder");
        const Grid g = Grid::make_1d(20, 14, 1.0, 1.0 / 20.0);
        int idx = 0;
        for (double m : ms)
            for (int variant = 0; variant < cylinder_variants; ++variant, ++idx) {
                const std::string base = "cylinder-" + std::to_string(idx) + "-m" + std::to_string(m);
                std::vector<double> init_lo(static_cast<std::size_t>(g.nodes_per_level()), 0.0);
                std::vector<double> init_hi = init_lo;
                for (int j = 1; j < g.nx; ++j) {
                    init_lo[static_cast<std::size_t>(j)] = rng.uniform(0.0, 0.8);
                    init_hi[static_cast<std::size_t>(j)] =
                        init_lo[static_cast<std::size_t>(j)] + rng.uniform(0.0, 0.4);
                }
                const DiscreteMeasure mu = detail::sparse_measure(g, rng, 3, 0.01, 0.05);
                tasks.push_back([g, m, init_lo, init_hi, mu, base] {
                    PMEProblem plo = PMEProblem::on(g, m);
                    plo.initial = init_lo;
                    const Field u = solve_cauchy_dirichlet(plo);

                    PMEProblem phi_prob = PMEProblem::on(g, m);
                    phi_prob.initial = init_hi;
                    const double inv_vol = 1.0 / g.cell_volume();
                    phi_prob.source = [mu, g, inv_vol](int node, int level) {
                        const int r = g.interior_rank(node);
                        if (r < 0 || level < 1) return 0.0;
                        return mu.weights[static_cast<std::size_t>(g.cell_index(r, level))] * inv_vol;
                    };
                    const Field v = solve_cauchy_dirichlet(phi_prob);
                    return detail::record_instance(base + "-ordered-data", m, false,
                                                   compare_cylinder(u, v, m));
                });
            }

        tasks.push_back([g] {
            const Field ua(g, 0.25), vb(g, 0.4);
            return detail::record_instance("cylinder-constants", 2.0, false,
                                           compare_cylinder(ua, vb, 2.0));
        });
        tasks.push_back([g] {
            const Field ua(g, 0.25);
            return detail::record_instance("cylinder-identity", 2.0, false,
                                           compare_cylinder(ua, ua, 2.0));
        });

        // probe: v scaled below a solution is generally not a supersolution
        tasks.push_back([g] {
            PMEProblem p = PMEProblem::on(g, 2.0);
            for (int j = 1; j < g.nx; ++j)
                p.initial[static_cast<std::size_t>(j)] = 0.5 + 0.3 * std::sin(7.0 * g.x_of(j));
            const Field w = solve_cauchy_dirichlet(p);
            Field w_scaled = w;
            for (int n = 0; n < g.nt; ++n)
                for (int j = 0; j < g.nodes_per_level(); ++j) w_scaled.at(n, j) *= 0.9;
            return detail::record_instance("cylinder-probe-scaled-super", 2.0, true,
                                           compare_cylinder(w, w_scaled, 2.0));
        });
    }

    result.instances.resize(tasks.size());
    parallel_for(static_cast<int>(tasks.size()),
                 [&](int i) { result.instances[static_cast<std::size_t>(i)] = tasks[static_cast<std::size_t>(i)](); });

    for (const auto& inst : result.instances) {
        if (inst.is_probe) {
            ++result.probe_count;
            if (!inst.hypotheses_ok) ++result.probes_rejected;
        } else if (inst.hypotheses_ok) {
            ++result.valid_count;
            if (inst.pass) ++result.valid_passed;
        } else {
            ++result.valid_rejected;
        }
    }
    result.all_pass = result.valid_rejected == 0 && result.valid_passed == result.valid_count &&
                      result.probes_rejected == result.probe_count;
    return result;
}

} // namespace pmelab
