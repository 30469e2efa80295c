#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pmelab/capacity.hpp"
#include "pmelab/grid.hpp"
#include "pmelab/measure.hpp"
#include "pmelab/obstacle.hpp"
#include "pmelab/solver.hpp"
#include "pmelab/verify_suite.hpp"

namespace pmelab {

using ordered_json = nlohmann::ordered_json;

inline ordered_json grid_to_json(const Grid& g) {
    return ordered_json{{"dim", g.dim}, {"nx", g.nx},        {"ny", g.ny},
                        {"nt", g.nt},   {"h", g.h},          {"dt", g.dt},
                        {"t0", g.t0},   {"Lx", g.Lx},        {"Ly", g.Ly},
                        {"hash", g.hash()}};
}

inline Grid grid_from_json(const ordered_json& j) {
    const int dim = j.at("dim").get<int>();
    Grid g = dim == 1 ? Grid::make_1d(j.at("nx"), j.at("nt"), j.at("Lx"), j.at("dt"),
                                      j.value("t0", 0.0))
                      : Grid::make_2d(j.at("nx"), j.at("ny"), j.at("nt"), j.at("Lx"),
                                      j.at("dt"), j.value("t0", 0.0));
    if (j.contains("hash") && j.at("hash").get<std::uint64_t>() != g.hash())
        throw std::runtime_error("grid_from_json: hash mismatch");
    return g;
}

/// Run-length encoding of a sorted cell index list: [[start, count], ...].
inline ordered_json cells_to_rle(const std::vector<int>& cells) {
    ordered_json runs = ordered_json::array();
    std::size_t i = 0;
    while (i < cells.size()) {
        std::size_t j = i;
        while (j + 1 < cells.size() && cells[j + 1] == cells[j] + 1) ++j;
        runs.push_back({cells[i], static_cast<int>(j - i + 1)});
        i = j + 1;
    }
    return runs;
}

inline std::vector<int> cells_from_rle(const ordered_json& runs) {
    std::vector<int> cells;
    for (const auto& run : runs) {
        const int start = run.at(0).get<int>();
        const int count = run.at(1).get<int>();
        for (int k = 0; k < count; ++k) cells.push_back(start + k);
    }
    return cells;
}

inline ordered_json compact_to_json(const CompactSet& k) {
    return ordered_json{{"grid", grid_to_json(k.grid)}, {"cells", cells_to_rle(k.as_cellset().cells())}};
}

inline CompactSet compact_from_json(const ordered_json& j) {
    const Grid g = grid_from_json(j.at("grid"));
    const std::vector<int> cells = cells_from_rle(j.at("cells"));
    return cells.empty() ? CompactSet::empty(g) : CompactSet::of_cells(g, cells);
}

/// Sparse measure: (cell index, weight) entries plus the grid hash so a
/// mismatched grid is caught at load time.
inline ordered_json measure_to_json(const DiscreteMeasure& mu) {
    ordered_json entries = ordered_json::array();
    for (int c = 0; c < static_cast<int>(mu.weights.size()); ++c)
        if (mu.weights[static_cast<std::size_t>(c)] != 0.0)
            entries.push_back({c, mu.weights[static_cast<std::size_t>(c)]});
    return ordered_json{{"grid_hash", mu.grid.hash()}, {"entries", entries}};
}

inline DiscreteMeasure measure_from_json(const ordered_json& j, const Grid& g) {
    if (j.at("grid_hash").get<std::uint64_t>() != g.hash())
        throw std::runtime_error("measure_from_json: grid hash mismatch");
    DiscreteMeasure mu = DiscreteMeasure::zero(g);
    for (const auto& e : j.at("entries")) {
        const int c = e.at(0).get<int>();
        if (c < 0 || c >= g.cell_count())
            throw std::runtime_error("measure_from_json: cell index out of range");
        mu.weights[static_cast<std::size_t>(c)] = e.at(1).get<double>();
    }
    return mu;
}

inline ordered_json solver_report_to_json(const SolverReport& rep) {
    return ordered_json{{"converged", rep.converged},
                        {"steps", rep.newton_iterations.size()},
                        {"newton_iterations", rep.newton_iterations},
                        {"max_residual", rep.max_residual},
                        {"clamped_magnitude", rep.clamped_magnitude},
                        {"wall_time", rep.wall_time}};
}

inline ordered_json capacity_to_json(const CapacityResult& cap, const std::string& extremal_csv,
                                     const std::string& measure_json) {
    return ordered_json{
        {"value", cap.value},
        {"error_bar", cap.error_bar},
        {"diagnostics",
         ordered_json{{"depth", cap.diagnostics.depth},
                      {"horizon_used", cap.diagnostics.horizon_used},
                      {"horizon_nominal", cap.diagnostics.horizon_nominal},
                      {"tail_bound", cap.diagnostics.tail_bound},
                      {"ring_mass_outside", cap.diagnostics.ring_mass_outside},
                      {"balayage_max", cap.diagnostics.balayage_max},
                      {"working_grid", grid_to_json(cap.diagnostics.working_grid)}}},
        {"extremal_csv", extremal_csv},
        {"measure_json", measure_json}};
}

inline ordered_json suite_instance_to_json(const SuiteInstance& inst) {
    return ordered_json{{"name", inst.name},
                        {"geometry", inst.geometry},
                        {"m", inst.m},
                        {"probe", inst.is_probe},
                        {"hypotheses_ok", inst.hypotheses_ok},
                        {"rejected_hypothesis", inst.rejected_hypothesis},
                        {"pass", inst.pass},
                        {"worst_violation", inst.worst_violation},
                        {"worst_node", inst.worst_node},
                        {"worst_level", inst.worst_level},
                        {"comp_tol", inst.comp_tol}};
}

/// Obstacle family on disk: one Field CSV per member plus a manifest with
/// the family type ("eps" or "increasing") and its parameter list.
inline void write_obstacle_family(const std::string& dir, const std::string& family_type,
                                  const std::vector<double>& parameters,
                                  const std::vector<const Field*>& members) {
    if (parameters.size() != members.size() || members.empty())
        throw std::invalid_argument("write_obstacle_family: need matching, nonempty members");
    ordered_json files = ordered_json::array();
    for (std::size_t i = 0; i < members.size(); ++i) {
        const std::string name = "psi_" + std::to_string(i) + ".csv";
        members[i]->save_csv(dir + "/" + name);
        files.push_back(name);
    }
    std::ofstream os(dir + "/family.json");
    if (!os) throw std::runtime_error("cannot open " + dir + "/family.json");
    os << ordered_json{{"family", family_type},
                       {"parameters", parameters},
                       {"grid", grid_to_json(members.front()->grid())},
                       {"files", files}}
              .dump(2)
       << "\n";
}

struct ObstacleFamily {
    std::string family_type;
    std::vector<double> parameters;
    std::vector<Field> members;
};

inline ObstacleFamily read_obstacle_family(const std::string& dir) {
    std::ifstream is(dir + "/family.json");
    if (!is) throw std::runtime_error("cannot open " + dir + "/family.json");
    ordered_json j;
    is >> j;
    ObstacleFamily fam;
    fam.family_type = j.at("family").get<std::string>();
    fam.parameters = j.at("parameters").get<std::vector<double>>();
    const Grid g = grid_from_json(j.at("grid"));
    for (const auto& f : j.at("files"))
        fam.members.push_back(Field::load_csv(dir + "/" + f.get<std::string>(), g, "psi"));
    return fam;
}

inline void write_json_file(const std::string& path, const ordered_json& j) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    os << j.dump(2) << "\n";
}

inline ordered_json read_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    ordered_json j;
    is >> j;
    return j;
}

} // namespace pmelab
