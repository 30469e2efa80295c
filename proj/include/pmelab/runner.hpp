#pragma once

#include <chrono>
#include <filesystem>
#include <numbers>
#include <sstream>
#include <string>

#include "pmelab/capacity.hpp"
#include "pmelab/config.hpp"
#include "pmelab/obstacle.hpp"
#include "pmelab/reference.hpp"
#include "pmelab/serialize.hpp"
#include "pmelab/solver.hpp"
#include "pmelab/verify_suite.hpp"

namespace pmelab {

/// Process-level exit codes of the batch front-end.
enum ExitCode : int {
    exit_ok = 0,
    exit_validation = 1,
    exit_solver = 2,
    exit_suite = 3,
};

struct RunOutcome {
    int exit_code = exit_ok;
    std::string message;    // names the failing module and operation if any
    std::string output_dir;
};

namespace detail {

inline Grid grid_from_config(const RunConfig& cfg) {
    const int dim = static_cast<int>(cfg.get_int("grid.dim", 1));
    const int nx = static_cast<int>(cfg.get_int("grid.nx"));
    const int nt = static_cast<int>(cfg.get_int("grid.nt"));
    const double lx = cfg.get_real("grid.Lx", 1.0);
    const double t0 = cfg.get_real("grid.t0", 0.0);
    const double h = lx / nx;
    const double dt = cfg.get_real("grid.dt", h);  // default relation dt = h
    if (dim == 1) {
        if (cfg.has("grid.ny") || cfg.has("grid.Ly"))
            throw ConfigError("config: grid.ny/Ly are for dim = 2 only");
        return Grid::make_1d(nx, nt, lx, dt, t0);
    }
    if (dim != 2) throw ConfigError("config: grid.dim must be 1 or 2");
    const int ny = static_cast<int>(cfg.get_int("grid.ny"));
    return Grid::make_2d(nx, ny, nt, lx, dt, t0);
}

inline std::pair<std::string, std::string> split_spec(const std::string& s, const char* key) {
    const auto colon = s.find(':');
    if (colon == std::string::npos)
        throw ConfigError(std::string("config: ") + key + " must look like kind:args, got '" + s + "'");
    return {s.substr(0, colon), s.substr(colon + 1)};
}

inline PMEProblem problem_from_config(const RunConfig& cfg, const Grid& g) {
    PMEProblem p = PMEProblem::on(g, cfg.get_real("model.m"));
    p.reg_floor = cfg.get_real("model.reg_floor", 1e-8);

    const std::string init = cfg.get_string("task.initial", "constant:0");
    const auto [kind, args] = split_spec(init, "task.initial");
    if (kind == "constant") {
        const double v = std::stod(args);
        for (int j = 0; j < g.nodes_per_level(); ++j) p.initial[static_cast<std::size_t>(j)] = v;
    } else if (kind == "barenblatt") {
        std::istringstream ss(args);
        double mass = 0.0, tau = 0.0;
        char comma = 0;
        if (!(ss >> mass >> comma >> tau) || comma != ',')
            throw ConfigError("config: task.initial barenblatt needs mass,tau");
        const auto bp = BarenblattParams::make(p.m, g.dim, mass, g.Lx / 2.0, tau,
                                               g.dim == 2 ? g.Ly / 2.0 : 0.0);
        for (int j = 0; j < g.nodes_per_level(); ++j)
            p.initial[static_cast<std::size_t>(j)] = barenblatt_eval(bp, g.x_of(j), 0.0, g.y_of(j));
    } else if (kind == "file") {
        const Field f = Field::load_csv(args, g);
        for (int j = 0; j < g.nodes_per_level(); ++j)
            p.initial[static_cast<std::size_t>(j)] = f.at(0, j);
    } else {
        throw ConfigError("config: unknown task.initial kind '" + kind + "'");
    }

    const double lateral = cfg.get_real("task.lateral", 0.0);
    p.lateral = BoundaryData::constant(lateral);
    for (int j = 0; j < g.nodes_per_level(); ++j)
        if (g.is_boundary_node(j)) p.initial[static_cast<std::size_t>(j)] = lateral;
    return p;
}

inline Field obstacle_from_config(const RunConfig& cfg, const Grid& g) {
    const auto [kind, args] = split_spec(cfg.get_string("task.obstacle"), "task.obstacle");
    if (kind == "file") return Field::load_csv(args, g, "psi");
    if (kind == "bump") {
        std::istringstream ss(args);
        double amp = 0.0, a = 0.0, b = 0.0;
        char c1 = 0, c2 = 0;
        if (!(ss >> amp >> c1 >> a >> c2 >> b) || c1 != ',' || c2 != ',')
            throw ConfigError("config: task.obstacle bump needs amplitude,a,b");
        Field psi(g, 0.0, "psi");
        const double ta = g.t_of(1), tb = g.t_of(g.nt - 1);
        for (int n = 2; n <= g.nt - 2; ++n) {
            const double q = std::sin(std::numbers::pi * (g.t_of(n) - ta) / (tb - ta));
            for (int node = 0; node < g.nodes_per_level(); ++node) {
                const double x = g.x_of(node);
                if (x <= a || x >= b) continue;
                if (ObstacleSpec::on_support_margin(g, node, n)) continue;
                const double s = std::sin(std::numbers::pi * (x - a) / (b - a));
                double v = amp * s * s * q * q;
                if (g.dim == 2) {
                    const double y = g.y_of(node);
                    if (y <= a || y >= b) {
                        v = 0.0;
                    } else {
                        const double sy = std::sin(std::numbers::pi * (y - a) / (b - a));
                        v *= sy * sy;
                    }
                }
                psi.at(n, node) = v;
            }
        }
        return psi;
    }
    throw ConfigError("config: unknown task.obstacle kind '" + kind + "'");
}

inline CompactSet compact_from_config(const RunConfig& cfg, const Grid& g) {
    const std::string spec = cfg.get_string("task.K");
    if (spec == "empty") return CompactSet::empty(g);
    const auto [kind, args] = split_spec(spec, "task.K");
    if (kind == "box") {
        std::vector<int> v;
        std::istringstream ss(args);
        std::string tok;
        while (std::getline(ss, tok, ',')) v.push_back(std::stoi(tok));
        if (g.dim == 1 && v.size() == 4) return CompactSet::of_box(g, v[0], v[1], v[2], v[3]);
        if (g.dim == 2 && v.size() == 6)
            return CompactSet::of_box(g, v[0], v[1], v[2], v[3], v[4], v[5]);
        throw ConfigError("config: task.K box needs ix0,ix1,n0,n1[,iy0,iy1]");
    }
    if (kind == "cells") {
        std::vector<int> cells;
        std::istringstream ss(args);
        std::string tok;
        while (std::getline(ss, tok, ';')) cells.push_back(std::stoi(tok));
        return CompactSet::of_cells(g, cells);
    }
    throw ConfigError("config: unknown task.K kind '" + kind + "'");
}

inline void write_manifest(const std::string& dir, const RunConfig& cfg, double wall_seconds) {
    ordered_json echo = ordered_json::object();
    for (const auto& [k, v] : cfg.entries()) echo[k] = v;
    write_json_file(dir + "/manifest.json",
                    ordered_json{{"tool", "pmelab"},
                                 {"version", "1.0.0"},
                                 {"format_version", 1},
                                 {"config", echo},
                                 {"wall_time", wall_seconds}});
}

} // namespace detail

/// Write suite results as JSON lines, one instance per line, plus a summary.
inline void write_suite_outputs(const std::string& dir, const SuiteResult& suite) {
    std::ofstream lines(dir + "/suite.jsonl");
    if (!lines) throw std::runtime_error("cannot open " + dir + "/suite.jsonl");
    for (const auto& inst : suite.instances) lines << suite_instance_to_json(inst).dump() << "\n";
    write_json_file(dir + "/summary.json",
                    ordered_json{{"suite", suite.suite},
                                 {"seed", suite.seed},
                                 {"instances", suite.instances.size()},
                                 {"valid", suite.valid_count},
                                 {"valid_passed", suite.valid_passed},
                                 {"valid_rejected", suite.valid_rejected},
                                 {"probes", suite.probe_count},
                                 {"probes_rejected", suite.probes_rejected},
                                 {"pass", suite.all_pass}});
}

/// Execute one parsed configuration. Outputs land in task.out (or out/).
inline RunOutcome run_config(const RunConfig& cfg) {
    RunOutcome outcome;
    const auto t_start = std::chrono::steady_clock::now();
    auto elapsed = [&t_start] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    };

    try {
        const std::string task = cfg.get_string("task.type");
        outcome.output_dir = cfg.get_string("task.out", "out");
        std::filesystem::create_directories(outcome.output_dir);
        const std::string dir = outcome.output_dir;

        if (task == "solve") {
            const Grid g = detail::grid_from_config(cfg);
            PMEProblem p = detail::problem_from_config(cfg, g);
            std::optional<DiscreteMeasure> mu;
            if (cfg.has("task.source")) {
                const auto [kind, args] = detail::split_spec(cfg.get_string("task.source"), "task.source");
                if (kind != "file") throw ConfigError("config: task.source must be file:<path>");
                mu = measure_from_json(read_json_file(args), g);
            }
            cfg.reject_unknown_keys();

            SolverReport rep;
            Field u(g);
            if (mu) {
                u = solve_measure_data(g, p.m, *mu, &rep);
            } else {
                u = solve_cauchy_dirichlet(p, &rep);
            }
            u.save_csv(dir + "/solution.csv");
            write_json_file(dir + "/report.json", solver_report_to_json(rep));
        } else if (task == "obstacle") {
            const Grid g = detail::grid_from_config(cfg);
            const double m = cfg.get_real("model.m");
            const Field psi = detail::obstacle_from_config(cfg, g);
            const std::string backend = cfg.get_string("task.backend", "penalized");
            cfg.reject_unknown_keys();

            const auto spec = ObstacleSpec::make(psi, m);
            ObstacleSolution sol = backend == "projected" ? solve_projected(spec)
                                   : backend == "penalized"
                                       ? solve_penalized(spec)
                                       : throw ConfigError("config: task.backend must be penalized or projected");
            sol.u.save_csv(dir + "/solution.csv");
            psi.save_csv(dir + "/obstacle.csv");
            write_json_file(dir + "/report.json",
                            ordered_json{{"backend", backend},
                                         {"delta", sol.delta},
                                         {"contact_tol", sol.contact_tol},
                                         {"contact_cells", cells_to_rle(sol.contact.cells())},
                                         {"solver", solver_report_to_json(sol.report)}});
        } else if (task == "capacity") {
            const Grid g = detail::grid_from_config(cfg);
            const double m = cfg.get_real("model.m");
            const CompactSet k = detail::compact_from_config(cfg, g);
            const int depth = static_cast<int>(cfg.get_int("task.depth", 5));
            cfg.reject_unknown_keys();

            const CapacityResult cap = capacity_of_compact(k, m, depth);
            if (!k.is_empty()) {
                cap.extremal.save_csv(dir + "/extremal.csv");
                write_json_file(dir + "/extremal_measure.json", measure_to_json(cap.extremal_measure));
            }
            write_json_file(dir + "/capacity.json",
                            capacity_to_json(cap, "extremal.csv", "extremal_measure.json"));
        } else if (task == "verify") {
            const std::string suite_name = cfg.get_string("task.suite", "desk");
            const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("task.seed", 0));
            cfg.reject_unknown_keys();

            const SuiteResult suite = run_comparison_suite(suite_name, seed);
            write_suite_outputs(dir, suite);
            if (!suite.all_pass) {
                outcome.exit_code = exit_suite;
                outcome.message = "verify: comparison suite reported failures";
            }
        } else if (task == "calibrate") {
            const Grid g = detail::grid_from_config(cfg);
            const double m = cfg.get_real("model.m");
            cfg.reject_unknown_keys();

            const auto cal = universal_calibrate(g, m);
            std::ostringstream key;
            key << "n" << g.dim << "_m" << m << "_Lx" << g.Lx << "_Ly" << g.Ly;
            const std::string path = dir + "/calibration.json";
            ordered_json sidecar = std::filesystem::exists(path)
                                       ? read_json_file(path)
                                       : ordered_json::object();
            sidecar[key.str()] = ordered_json{{"c_emp", cal.c_emp},
                                              {"fitted_exponent", cal.fitted_exponent},
                                              {"window_begin", cal.window_begin}};
            write_json_file(path, sidecar);
        } else {
            throw ConfigError("config: task.type must be solve, obstacle, capacity, verify, or calibrate");
        }

        detail::write_manifest(outcome.output_dir, cfg, elapsed());
    } catch (const ConfigError& e) {
        outcome.exit_code = exit_validation;
        outcome.message = e.what();
    } catch (const SolverError& e) {
        outcome.exit_code = exit_solver;
        outcome.message = std::string("solver: ") + e.what() + " (level " +
                          std::to_string(e.level) + ", residual " + std::to_string(e.residual) + ")";
    } catch (const std::exception& e) {
        outcome.exit_code = exit_validation;
        outcome.message = e.what();
    }
    return outcome;
}

inline RunOutcome run_config_file(const std::string& path) {
    try {
        return run_config(RunConfig::parse_file(path));
    } catch (const ConfigError& e) {
        RunOutcome bad;
        bad.exit_code = exit_validation;
        bad.message = e.what();
        return bad;
    }
}

} // namespace pmelab
