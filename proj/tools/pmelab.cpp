// pmelab: batch front-end for the porous-medium-equation laboratory.
//
//   pmelab run <config.ini>            execute a configured task
//   pmelab verify --suite <name> --seed <n> [--out dir]
//   pmelab calibrate --m <real> --dim <d> [--nx n] [--nt n] [--out dir]
//
// Exit codes: 0 success, 1 validation error, 2 solver failure,
// 3 suite failure. PMELAB_THREADS caps the worker count.

#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "pmelab/runner.hpp"

namespace {

int finish(const pmelab::RunOutcome& outcome) {
    if (outcome.exit_code != pmelab::exit_ok)
        std::fprintf(stderr, "pmelab: %s\n", outcome.message.c_str());
    else
        std::printf("pmelab: ok, outputs in %s\n", outcome.output_dir.c_str());
    return outcome.exit_code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"porous medium equation laboratory"};
    app.require_subcommand(1);

    std::string config_path;
    auto* run_cmd = app.add_subcommand("run", "execute a task from a config file");
    run_cmd->add_option("config", config_path, "INI configuration file")->required();

    std::string suite_name = "desk";
    std::uint64_t seed = 0;
    std::string verify_out = "out";
    auto* verify_cmd = app.add_subcommand("verify", "run a bundled comparison suite");
    verify_cmd->add_option("--suite", suite_name, "suite name (desk or full)");
    verify_cmd->add_option("--seed", seed, "instance generation seed");
    verify_cmd->add_option("--out", verify_out, "output directory");

    double cal_m = 2.0;
    int cal_dim = 1, cal_nx = 50, cal_nt = 76;
    std::string cal_out = "out";
    auto* cal_cmd = app.add_subcommand("calibrate", "fit the universal decay constant");
    cal_cmd->add_option("--m", cal_m, "PME exponent, m > 1")->required();
    cal_cmd->add_option("--dim", cal_dim, "space dimension (1 or 2)")->required();
    cal_cmd->add_option("--nx", cal_nx, "cells per axis");
    cal_cmd->add_option("--nt", cal_nt, "time levels");
    cal_cmd->add_option("--out", cal_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    if (run_cmd->parsed()) return finish(pmelab::run_config_file(config_path));

    if (verify_cmd->parsed()) {
        const std::string text = "[task]\ntype = verify\nsuite = " + suite_name +
                                 "\nseed = " + std::to_string(seed) + "\nout = " + verify_out + "\n";
        return finish(pmelab::run_config(pmelab::RunConfig::parse(text)));
    }

    // calibrate
    std::string text = "[grid]\ndim = " + std::to_string(cal_dim) + "\nnx = " +
                       std::to_string(cal_nx) + "\nnt = " + std::to_string(cal_nt) + "\n";
    if (cal_dim == 2) text += "ny = " + std::to_string(cal_nx) + "\n";
    text += "[model]\nm = " + std::to_string(cal_m) + "\n[task]\ntype = calibrate\nout = " +
            cal_out + "\n";
    return finish(pmelab::run_config(pmelab::RunConfig::parse(text)));
}
