// Copyright (c) 2026 the loft authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: deterministic experiment runs, the property-check
// suite, and preset config emission.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "loft/harness.hpp"
#include "loft/verify.hpp"

namespace {

int cmd_run(const std::string& config_path, const std::string& out_dir, long seed_override,
            bool has_override) {
    std::ifstream in(config_path);
    if (!in) {
        std::cerr << "error: cannot open config '" << config_path << "'\n";
        return 2;
    }
    loft::Json doc = loft::Json::parse(in);
    std::vector<loft::ExperimentConfig> configs = loft::experiments_from_json(doc);
    if (has_override) {
        for (auto& cfg : configs) {
            cfg.problem.seed = static_cast<std::uint64_t>(seed_override);
            if (cfg.adapter) cfg.adapter->seed = static_cast<std::uint64_t>(seed_override) + 1;
        }
    }
    const std::filesystem::path out = out_dir;
    const auto results = loft::run_batch(configs, &out);
    for (std::size_t i = 0; i < configs.size(); ++i) {
        std::cout << configs[i].name << ": final loss " << loft::format_g17(results[i].final_loss)
                  << " -> " << (out / (configs[i].name + ".csv")).string() << "\n";
    }
    return 0;
}

int cmd_verify(const std::string& filter, const std::string& json_path) {
    const auto results = loft::verify_suite(filter);
    if (results.empty()) {
        std::cerr << "error: no checks match filter '" << filter << "'\n";
        return 2;
    }
    int failed = 0;
    for (const auto& r : results) {
        std::printf("%-32s %s  residual %.3e  tol %.3e\n", r.name.c_str(),
                    r.passed ? "PASS" : "FAIL", r.max_residual, r.tolerance);
        if (!r.passed) ++failed;
    }
    std::printf("%d/%zu checks passed\n", static_cast<int>(results.size()) - failed,
                results.size());
    if (!json_path.empty()) {
        std::ofstream f(json_path, std::ios::binary);
        f << loft::verify_report_json(results).dump(2) << "\n";
    }
    return failed == 0 ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Low-rank adapter optimizers with full-fine-tuning-aligned state, plus a "
                 "deterministic benchmark harness"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    long seed_override = 0;
    auto* run = app.add_subcommand("run", "Run the experiment(s) described by a config file");
    run->add_option("config", config_path, "Config JSON (single experiment or batch)")
        ->required();
    run->add_option("--out", out_dir, "Output directory (default: out)");
    auto* seed_opt = run->add_option(
        "--seed-override", seed_override,
        "Override seeds for sweeps: problem.seed = N, adapter.seed = N + 1");

    std::string filter;
    std::string report_path;
    auto* verify = app.add_subcommand("verify", "Run registered property checks");
    verify->add_option("--filter", filter, "Only run checks whose name contains this substring");
    verify->add_option("--json", report_path, "Write the JSON report here");

    auto* presets = app.add_subcommand("presets", "List or emit built-in experiment configs");
    presets->require_subcommand(1);
    presets->add_subcommand("list", "List preset names");
    std::string preset_name;
    auto* emit = presets->add_subcommand("emit", "Print a preset config as JSON");
    emit->add_option("name", preset_name, "Preset name")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            return cmd_run(config_path, out_dir, seed_override, seed_opt->count() > 0);
        }
        if (verify->parsed()) {
            return cmd_verify(filter, report_path);
        }
        if (presets->parsed()) {
            if (presets->get_subcommand("list")->parsed()) {
                for (const auto& name : loft::preset_names()) std::cout << name << "\n";
                return 0;
            }
            std::cout << loft::emit_preset(preset_name).dump(2) << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
