// Copyright (c) 2026 the loft authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "loft/adapter.hpp"
#include "loft/optim_adamw.hpp"
#include "loft/optim_muon.hpp"
#include "loft/problems.hpp"
#include "loft/serialize.hpp"

namespace loft {

enum class OptimizerId {
    full_gd_momentum,
    full_adamw,
    full_muon,
    lora_adamw,
    loft_gd,
    loft_gd_momentum,
    loft_adamw,
    loft_muon,
};

inline const char* optimizer_name(OptimizerId id) {
    switch (id) {
    case OptimizerId::full_gd_momentum: return "full_gd_momentum";
    case OptimizerId::full_adamw: return "full_adamw";
    case OptimizerId::full_muon: return "full_muon";
    case OptimizerId::lora_adamw: return "lora_adamw";
    case OptimizerId::loft_gd: return "loft_gd";
    case OptimizerId::loft_gd_momentum: return "loft_gd_momentum";
    case OptimizerId::loft_adamw: return "loft_adamw";
    case OptimizerId::loft_muon: return "loft_muon";
    }
    return "?";
}

inline OptimizerId optimizer_from_name(const std::string& s) {
    for (OptimizerId id :
         {OptimizerId::full_gd_momentum, OptimizerId::full_adamw, OptimizerId::full_muon,
          OptimizerId::lora_adamw, OptimizerId::loft_gd, OptimizerId::loft_gd_momentum,
          OptimizerId::loft_adamw, OptimizerId::loft_muon}) {
        if (s == optimizer_name(id)) return id;
    }
    throw std::invalid_argument("optimizer: unknown id '" + s + "'");
}

inline bool is_full_optimizer(OptimizerId id) {
    return id == OptimizerId::full_gd_momentum || id == OptimizerId::full_adamw ||
           id == OptimizerId::full_muon;
}

enum class AdapterInit { lora, subspace, gaussian };
enum class LrSchedule { constant, linear_decay };

struct ProblemSpec {
    Index rows = 0;
    Index cols = 0;
    Index target_rank = 0;
    std::uint64_t seed = 0;
    LossConvention loss = LossConvention::full_square;
};

struct AdapterSpec {
    Index rank = 0;
    std::uint64_t seed = 0;
    AdapterInit init = AdapterInit::lora;
};

struct ExperimentConfig {
    std::string name = "experiment";
    ProblemSpec problem;
    std::optional<AdapterSpec> adapter; // required for adapter optimizers;
                                        // for full_* it only sets the initial W
    OptimizerId optimizer = OptimizerId::full_adamw;
    OptimizerConfig opt;
    long iterations = 0;
    long log_every = 1;
    LrSchedule schedule = LrSchedule::constant;
    bool timing = false; // real wall-ms in the CSV breaks byte-determinism; off by default
    bool save_checkpoint = false;
    std::string restore_checkpoint; // empty = start fresh
};

struct TrajectoryRecord {
    long step = 0;
    double loss = 0.0;
    double grad_norm = 0.0;
    long clamps = 0;
    double ms = 0.0;
};

struct RunResult {
    std::vector<TrajectoryRecord> trajectory;
    std::string csv;
    Json sidecar;
    Json checkpoint; // null unless requested
    double final_loss = 0.0;
};

// ---------------------------------------------------------------------------
// Config parsing. Strict: unknown fields are rejected with field-level paths.
// ---------------------------------------------------------------------------

namespace detail {

inline double get_num(const Json& j, const char* key, const std::string& where, double dflt,
                      bool* present = nullptr) {
    if (!j.contains(key)) {
        if (present) *present = false;
        return dflt;
    }
    if (present) *present = true;
    const auto& v = j.at(key);
    if (v.is_null()) return dflt;
    if (!v.is_number()) throw std::invalid_argument(where + "." + key + ": must be a number");
    return v.get<double>();
}

inline long get_int(const Json& j, const char* key, const std::string& where, long dflt) {
    if (!j.contains(key) || j.at(key).is_null()) return dflt;
    if (!j.at(key).is_number_integer()) {
        throw std::invalid_argument(where + "." + key + ": must be an integer");
    }
    return j.at(key).get<long>();
}

inline bool get_bool(const Json& j, const char* key, const std::string& where, bool dflt) {
    if (!j.contains(key) || j.at(key).is_null()) return dflt;
    if (!j.at(key).is_boolean()) {
        throw std::invalid_argument(where + "." + key + ": must be a boolean");
    }
    return j.at(key).get<bool>();
}

inline std::string get_str(const Json& j, const char* key, const std::string& where,
                           const std::string& dflt) {
    if (!j.contains(key) || j.at(key).is_null()) return dflt;
    if (!j.at(key).is_string()) {
        throw std::invalid_argument(where + "." + key + ": must be a string");
    }
    return j.at(key).get<std::string>();
}

} // namespace detail

inline OptimizerConfig optimizer_config_from_json(const Json& j, const std::string& where) {
    check_keys(j,
               {"eta", "beta1", "beta2", "eps", "lambda", "clip_threshold", "alpha",
                "alternating", "first_moment_calibration", "second_moment_calibration",
                "eps_inside_sqrt", "update_u_first", "mu", "ns_steps"},
               where);
    OptimizerConfig cfg;
    cfg.eta = detail::get_num(j, "eta", where, cfg.eta);
    cfg.beta1 = detail::get_num(j, "beta1", where, cfg.beta1);
    cfg.beta2 = detail::get_num(j, "beta2", where, cfg.beta2);
    cfg.eps = detail::get_num(j, "eps", where, cfg.eps);
    cfg.lambda = detail::get_num(j, "lambda", where, cfg.lambda);
    cfg.clip_threshold = detail::get_num(j, "clip_threshold", where, 0.0);
    cfg.alpha = detail::get_num(j, "alpha", where, cfg.alpha);
    cfg.alternating = detail::get_bool(j, "alternating", where, cfg.alternating);
    cfg.first_moment_calibration =
        detail::get_bool(j, "first_moment_calibration", where, cfg.first_moment_calibration);
    cfg.second_moment_calibration =
        detail::get_bool(j, "second_moment_calibration", where, cfg.second_moment_calibration);
    cfg.eps_inside_sqrt = detail::get_bool(j, "eps_inside_sqrt", where, cfg.eps_inside_sqrt);
    cfg.update_u_first = detail::get_bool(j, "update_u_first", where, cfg.update_u_first);
    cfg.mu = detail::get_num(j, "mu", where, cfg.mu);
    cfg.ns_steps = static_cast<int>(detail::get_int(j, "ns_steps", where, cfg.ns_steps));
    cfg.validate();
    return cfg;
}

inline Json optimizer_config_to_json(const OptimizerConfig& cfg) {
    Json j{{"eta", cfg.eta},
           {"beta1", cfg.beta1},
           {"beta2", cfg.beta2},
           {"eps", cfg.eps},
           {"lambda", cfg.lambda},
           {"alpha", cfg.alpha},
           {"alternating", cfg.alternating},
           {"first_moment_calibration", cfg.first_moment_calibration},
           {"second_moment_calibration", cfg.second_moment_calibration},
           {"eps_inside_sqrt", cfg.eps_inside_sqrt},
           {"update_u_first", cfg.update_u_first},
           {"mu", cfg.mu},
           {"ns_steps", cfg.ns_steps}};
    if (cfg.clip_enabled()) {
        j["clip_threshold"] = cfg.clip_threshold;
    } else {
        j["clip_threshold"] = nullptr;
    }
    return j;
}

inline ExperimentConfig experiment_from_json(const Json& j) {
    check_keys(j,
               {"version", "name", "problem", "adapter", "optimizer", "optimizer_config",
                "iterations", "log_every", "lr_schedule", "timing", "save_checkpoint",
                "restore_checkpoint"},
               "config");
    if (!j.contains("version") || !j.at("version").is_number_integer() ||
        j.at("version").get<int>() != 1) {
        throw std::invalid_argument("config.version: must be the integer 1");
    }
    ExperimentConfig cfg;
    cfg.name = detail::get_str(j, "name", "config", cfg.name);

    if (!j.contains("problem")) throw std::invalid_argument("config.problem: required");
    {
        const Json& p = j.at("problem");
        check_keys(p, {"rows", "cols", "target_rank", "seed", "loss"}, "problem");
        cfg.problem.rows = detail::get_int(p, "rows", "problem", 0);
        cfg.problem.cols = detail::get_int(p, "cols", "problem", 0);
        cfg.problem.target_rank = detail::get_int(p, "target_rank", "problem", 0);
        if (cfg.problem.rows <= 0) throw std::invalid_argument("problem.rows: must be positive");
        if (cfg.problem.cols <= 0) throw std::invalid_argument("problem.cols: must be positive");
        if (cfg.problem.target_rank < 1 ||
            cfg.problem.target_rank > std::min(cfg.problem.rows, cfg.problem.cols)) {
            throw std::invalid_argument("problem.target_rank: must be in [1, min(rows, cols)]");
        }
        if (!p.contains("seed")) throw std::invalid_argument("problem.seed: required");
        cfg.problem.seed = static_cast<std::uint64_t>(detail::get_int(p, "seed", "problem", 0));
        const std::string loss = detail::get_str(p, "loss", "problem", "full_square");
        if (loss == "full_square") {
            cfg.problem.loss = LossConvention::full_square;
        } else if (loss == "half_square") {
            cfg.problem.loss = LossConvention::half_square;
        } else {
            throw std::invalid_argument("problem.loss: must be full_square or half_square");
        }
    }

    if (!j.contains("optimizer")) throw std::invalid_argument("config.optimizer: required");
    cfg.optimizer = optimizer_from_name(detail::get_str(j, "optimizer", "config", ""));

    if (j.contains("adapter") && !j.at("adapter").is_null()) {
        const Json& a = j.at("adapter");
        check_keys(a, {"rank", "seed", "init"}, "adapter");
        AdapterSpec spec;
        spec.rank = detail::get_int(a, "rank", "adapter", 0);
        if (spec.rank < 1) throw std::invalid_argument("adapter.rank: must be >= 1");
        if (!a.contains("seed")) throw std::invalid_argument("adapter.seed: required");
        spec.seed = static_cast<std::uint64_t>(detail::get_int(a, "seed", "adapter", 0));
        const std::string init = detail::get_str(a, "init", "adapter", "lora");
        if (init == "lora") {
            spec.init = AdapterInit::lora;
        } else if (init == "subspace") {
            spec.init = AdapterInit::subspace;
        } else if (init == "gaussian") {
            spec.init = AdapterInit::gaussian;
        } else {
            throw std::invalid_argument("adapter.init: must be lora, subspace or gaussian");
        }
        if (spec.init == AdapterInit::subspace && spec.rank > cfg.problem.target_rank) {
            throw std::invalid_argument("adapter.rank: subspace init requires rank <= target_rank");
        }
        cfg.adapter = spec;
    } else if (!is_full_optimizer(cfg.optimizer)) {
        throw std::invalid_argument(std::string("config.adapter: required for optimizer ") +
                                    optimizer_name(cfg.optimizer));
    }

    cfg.opt = j.contains("optimizer_config")
                  ? optimizer_config_from_json(j.at("optimizer_config"), "optimizer_config")
                  : OptimizerConfig{};
    cfg.iterations = detail::get_int(j, "iterations", "config", 0);
    if (cfg.iterations < 1) throw std::invalid_argument("config.iterations: must be >= 1");
    cfg.log_every = detail::get_int(j, "log_every", "config", 1);
    if (cfg.log_every < 1) throw std::invalid_argument("config.log_every: must be >= 1");

    const std::string sched = detail::get_str(j, "lr_schedule", "config", "constant");
    if (sched == "constant") {
        cfg.schedule = LrSchedule::constant;
    } else if (sched == "linear_decay") {
        cfg.schedule = LrSchedule::linear_decay;
    } else {
        throw std::invalid_argument("config.lr_schedule: must be constant or linear_decay");
    }
    cfg.timing = detail::get_bool(j, "timing", "config", false);
    cfg.save_checkpoint = detail::get_bool(j, "save_checkpoint", "config", false);
    cfg.restore_checkpoint = detail::get_str(j, "restore_checkpoint", "config", "");
    return cfg;
}

inline Json experiment_to_json(const ExperimentConfig& cfg) {
    Json j;
    j["version"] = 1;
    j["name"] = cfg.name;
    j["problem"] = {
        {"rows", cfg.problem.rows},
        {"cols", cfg.problem.cols},
        {"target_rank", cfg.problem.target_rank},
        {"seed", cfg.problem.seed},
        {"loss",
         cfg.problem.loss == LossConvention::full_square ? "full_square" : "half_square"}};
    if (cfg.adapter) {
        const char* init = cfg.adapter->init == AdapterInit::lora       ? "lora"
                           : cfg.adapter->init == AdapterInit::subspace ? "subspace"
                                                                        : "gaussian";
        j["adapter"] = {{"rank", cfg.adapter->rank}, {"seed", cfg.adapter->seed}, {"init", init}};
    }
    j["optimizer"] = optimizer_name(cfg.optimizer);
    j["optimizer_config"] = optimizer_config_to_json(cfg.opt);
    j["iterations"] = cfg.iterations;
    j["log_every"] = cfg.log_every;
    j["lr_schedule"] = cfg.schedule == LrSchedule::constant ? "constant" : "linear_decay";
    j["timing"] = cfg.timing;
    j["save_checkpoint"] = cfg.save_checkpoint;
    if (!cfg.restore_checkpoint.empty()) j["restore_checkpoint"] = cfg.restore_checkpoint;
    return j;
}

/// Parse either a single experiment or {"version":1, "batch":[...]}.
inline std::vector<ExperimentConfig> experiments_from_json(const Json& j) {
    if (j.is_object() && j.contains("batch")) {
        check_keys(j, {"version", "batch"}, "config");
        if (!j.contains("version") || j.at("version").get<int>() != 1) {
            throw std::invalid_argument("config.version: must be the integer 1");
        }
        if (!j.at("batch").is_array() || j.at("batch").empty()) {
            throw std::invalid_argument("config.batch: must be a non-empty array");
        }
        std::vector<ExperimentConfig> out;
        for (const auto& entry : j.at("batch")) out.push_back(experiment_from_json(entry));
        return out;
    }
    return {experiment_from_json(j)};
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

/// 17 significant digits: round-trip exact for 64-bit floats.
inline std::string format_g17(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

namespace detail {

inline LowRankAdapter build_adapter(const AdapterSpec& spec, const ProblemSpec& problem,
                                    const MatrixTarget& target) {
    const Matrix w0(problem.rows, problem.cols);
    switch (spec.init) {
    case AdapterInit::lora:
        return init_adapter(problem.rows, problem.cols, spec.rank, spec.seed, w0);
    case AdapterInit::gaussian: {
        LowRankAdapter a = init_adapter(problem.rows, problem.cols, spec.rank, spec.seed, w0);
        Rng rng(spec.seed ^ 0x9e3779b97f4a7c15ull);
        a.u = gaussian_matrix(problem.rows, spec.rank, rng,
                              1.0 / std::sqrt(static_cast<double>(spec.rank)));
        a.u_prev = a.u;
        return a;
    }
    case AdapterInit::subspace: {
        auto [u0, v0] = subspace_init(target, spec.rank, spec.seed);
        LowRankAdapter a;
        a.w0 = w0;
        a.rank = spec.rank;
        a.u = std::move(u0);
        a.v = std::move(v0);
        a.u_prev = a.u;
        a.v_prev = a.v;
        return a;
    }
    }
    throw std::logic_error("build_adapter: unreachable");
}

// Norm of the gradient the optimizer would act on at the current point:
// effective (projected) norm for the calibrated steppers, raw factor-gradient
// norm for the LoRA baseline, dense norm for full-parameter optimizers.
inline double current_grad_norm(OptimizerId id, const Matrix& gw, const LowRankAdapter* a,
                                bool update_u_next, bool alternating) {
    if (is_full_optimizer(id)) return frobenius_norm(gw);
    const FactorGrads raw = factor_grads(gw, *a);
    if (id == OptimizerId::lora_adamw) {
        double s = 0.0;
        for (double v : raw.gu.data()) s += v * v;
        for (double v : raw.gv.data()) s += v * v;
        return std::sqrt(s);
    }
    const ScaledGrads sg = scaled_grads(raw.gu, raw.gv, *a);
    if (!alternating) {
        return std::sqrt(effective_layer_norm_sq(sg.gu, a->v) +
                         effective_layer_norm_sq(sg.gv, a->u));
    }
    return std::sqrt(update_u_next ? effective_layer_norm_sq(sg.gu, a->v)
                                   : effective_layer_norm_sq(sg.gv, a->u));
}

} // namespace detail

inline RunResult run_experiment(const ExperimentConfig& cfg) {
    cfg.opt.validate();
    const MatrixTarget target = gen_rank_r_target(cfg.problem.rows, cfg.problem.cols,
                                                  cfg.problem.target_rank, cfg.problem.seed);

    // Parameter/state slots; only the ones the optimizer needs get used.
    LowRankAdapter adapter;
    Matrix w_full;
    FullAdamState full_state;
    MuonState muon_state;
    LoraAdamState lora_state;
    LoftAdamState loft_state;
    LoftMuonState loft_muon;

    const bool full = is_full_optimizer(cfg.optimizer);
    if (cfg.adapter) adapter = detail::build_adapter(*cfg.adapter, cfg.problem, target);
    if (full) {
        w_full = cfg.adapter ? effective_weight(adapter)
                             : Matrix(cfg.problem.rows, cfg.problem.cols);
        full_state = make_full_adam_state(cfg.problem.rows, cfg.problem.cols);
        muon_state = make_muon_state(cfg.problem.rows, cfg.problem.cols);
    } else {
        lora_state = make_lora_adam_state(adapter.m(), adapter.n(), adapter.rank);
        loft_state = make_loft_adam_state(adapter.m(), adapter.n(), adapter.rank,
                                          cfg.opt.update_u_first);
        loft_muon = make_loft_muon_state(adapter.m(), adapter.n(), adapter.rank,
                                         cfg.opt.update_u_first);
    }

    long start_step = 0;
    if (!cfg.restore_checkpoint.empty()) {
        std::ifstream in(cfg.restore_checkpoint);
        if (!in) {
            throw std::invalid_argument("restore_checkpoint: cannot open '" +
                                        cfg.restore_checkpoint + "'");
        }
        Json ck = Json::parse(in);
        check_keys(ck, {"version", "kind", "optimizer", "step", "adapter", "state"}, "checkpoint");
        if (ck.at("kind").get<std::string>() != "checkpoint") {
            throw std::invalid_argument("checkpoint.kind: expected 'checkpoint'");
        }
        if (ck.at("optimizer").get<std::string>() != optimizer_name(cfg.optimizer)) {
            throw std::invalid_argument("checkpoint.optimizer: does not match config optimizer");
        }
        start_step = ck.at("step").get<long>();
        if (ck.contains("adapter") && !ck.at("adapter").is_null()) {
            adapter = adapter_from_json(ck.at("adapter"), "checkpoint.adapter");
        }
        const Json& st = ck.at("state");
        switch (cfg.optimizer) {
        case OptimizerId::full_gd_momentum:
        case OptimizerId::full_adamw:
            full_state = full_adam_state_from_json(st.at("full_adam"), "checkpoint.state");
            w_full = matrix_from_json(st.at("w"), "checkpoint.state.w");
            break;
        case OptimizerId::full_muon:
            muon_state = muon_state_from_json(st.at("muon"), "checkpoint.state");
            w_full = matrix_from_json(st.at("w"), "checkpoint.state.w");
            break;
        case OptimizerId::lora_adamw:
            lora_state = lora_adam_state_from_json(st.at("lora_adam"), "checkpoint.state");
            break;
        case OptimizerId::loft_gd:
        case OptimizerId::loft_gd_momentum:
        case OptimizerId::loft_adamw:
            loft_state = loft_adam_state_from_json(st.at("loft_adam"), "checkpoint.state");
            break;
        case OptimizerId::loft_muon:
            loft_muon = loft_muon_state_from_json(st.at("loft_muon"), "checkpoint.state");
            break;
        }
    }

    RunResult result;
    std::string csv = "step,loss,grad_norm,clamps,ms\n";
    long cum_clamps = 0;
    double cum_ms = 0.0;

    auto current_weight = [&]() -> Matrix {
        if (full) return w_full;
        if (cfg.optimizer == OptimizerId::lora_adamw) {
            return lora_effective_weight(adapter, cfg.opt.alpha);
        }
        return effective_weight(adapter);
    };
    auto flag_now = [&]() {
        return cfg.optimizer == OptimizerId::loft_muon ? loft_muon.update_u_next
                                                       : loft_state.update_u_next;
    };

    const long total = start_step + cfg.iterations;
    for (long k = start_step; k <= total; ++k) {
        const Matrix w = current_weight();
        const LossGrad lg = mf_loss_grad(w, target, cfg.problem.loss);
        if (!std::isfinite(lg.loss) || !all_finite(lg.grad)) {
            throw std::runtime_error(cfg.name + ": non-finite loss at step " + std::to_string(k));
        }
        if ((k - start_step) % cfg.log_every == 0 || k == total) {
            TrajectoryRecord rec;
            rec.step = k;
            rec.loss = lg.loss;
            rec.grad_norm = detail::current_grad_norm(cfg.optimizer, lg.grad,
                                                      cfg.adapter ? &adapter : nullptr,
                                                      flag_now(), cfg.opt.alternating);
            rec.clamps = cum_clamps;
            rec.ms = cum_ms;
            result.trajectory.push_back(rec);
            csv += std::to_string(rec.step) + "," + format_g17(rec.loss) + "," +
                   format_g17(rec.grad_norm) + "," + std::to_string(rec.clamps) + "," +
                   format_g17(rec.ms) + "\n";
            result.final_loss = rec.loss;
        }
        if (k == total) break;

        OptimizerConfig step_cfg = cfg.opt;
        if (cfg.schedule == LrSchedule::linear_decay) {
            step_cfg.eta = cfg.opt.eta *
                           static_cast<double>(total - k) / static_cast<double>(cfg.iterations);
        }
        const auto t0 = std::chrono::steady_clock::now();
        StepInfo info;
        switch (cfg.optimizer) {
        case OptimizerId::full_gd_momentum:
            info = gd_momentum_full_step(w_full, lg.grad, full_state, step_cfg);
            break;
        case OptimizerId::full_adamw:
            info = adamw_full_step(w_full, lg.grad, full_state, step_cfg);
            break;
        case OptimizerId::full_muon:
            info = muon_full_step(w_full, lg.grad, muon_state, step_cfg);
            break;
        case OptimizerId::lora_adamw:
            info = lora_adamw_step(adapter, lg.grad, lora_state, step_cfg);
            break;
        case OptimizerId::loft_gd:
            info = loft_gd_step(adapter, lg.grad, loft_state, step_cfg);
            break;
        case OptimizerId::loft_gd_momentum:
            info = loft_gd_momentum_step(adapter, lg.grad, loft_state, step_cfg);
            break;
        case OptimizerId::loft_adamw:
            info = loft_adamw_step(adapter, lg.grad, loft_state, step_cfg);
            break;
        case OptimizerId::loft_muon:
            info = loft_muon_step(adapter, lg.grad, loft_muon, step_cfg);
            break;
        }
        if (cfg.timing) {
            cum_ms += std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
        }
        cum_clamps += info.clamped_entries;
    }

    result.csv = std::move(csv);
    result.sidecar = Json{{"version", 1},
                          {"name", cfg.name},
                          {"config", experiment_to_json(cfg)},
                          {"final",
                           Json{{"step", total},
                                {"loss", result.final_loss},
                                {"grad_norm", result.trajectory.back().grad_norm},
                                {"clamped_total", cum_clamps}}}};

    if (cfg.save_checkpoint) {
        Json state;
        switch (cfg.optimizer) {
        case OptimizerId::full_gd_momentum:
        case OptimizerId::full_adamw:
            state["full_adam"] = full_adam_state_to_json(full_state);
            state["w"] = matrix_to_json(w_full);
            break;
        case OptimizerId::full_muon:
            state["muon"] = muon_state_to_json(muon_state);
            state["w"] = matrix_to_json(w_full);
            break;
        case OptimizerId::lora_adamw:
            state["lora_adam"] = lora_adam_state_to_json(lora_state);
            break;
        case OptimizerId::loft_gd:
        case OptimizerId::loft_gd_momentum:
        case OptimizerId::loft_adamw:
            state["loft_adam"] = loft_adam_state_to_json(loft_state);
            break;
        case OptimizerId::loft_muon:
            state["loft_muon"] = loft_muon_state_to_json(loft_muon);
            break;
        }
        result.checkpoint = Json{{"version", 1},
                                 {"kind", "checkpoint"},
                                 {"optimizer", optimizer_name(cfg.optimizer)},
                                 {"step", total},
                                 {"adapter", cfg.adapter ? adapter_to_json(adapter) : Json()},
                                 {"state", std::move(state)}};
    }
    return result;
}

inline void write_run_outputs(const RunResult& result, const ExperimentConfig& cfg,
                              const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    {
        std::ofstream f(out_dir / (cfg.name + ".csv"), std::ios::binary);
        f << result.csv;
    }
    {
        std::ofstream f(out_dir / (cfg.name + ".json"), std::ios::binary);
        f << result.sidecar.dump(2) << "\n";
    }
    if (!result.checkpoint.is_null()) {
        std::ofstream f(out_dir / (cfg.name + ".ckpt.json"), std::ios::binary);
        f << result.checkpoint.dump() << "\n";
    }
}

/// Run a batch concurrently, one worker per config (bounded by the hardware
/// thread count). Experiments share no mutable state.
inline std::vector<RunResult> run_batch(const std::vector<ExperimentConfig>& configs,
                                        const std::filesystem::path* out_dir = nullptr) {
    std::vector<RunResult> results(configs.size());
    std::vector<std::string> errors(configs.size());
    const std::size_t workers =
        std::min<std::size_t>(configs.size(),
                              std::max<unsigned>(1, std::thread::hardware_concurrency()));
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (std::size_t t = 0; t < workers; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < configs.size(); i = next.fetch_add(1)) {
                try {
                    results[i] = run_experiment(configs[i]);
                    if (out_dir) write_run_outputs(results[i], configs[i], *out_dir);
                } catch (const std::exception& e) {
                    errors[i] = e.what();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    for (std::size_t i = 0; i < errors.size(); ++i) {
        if (!errors[i].empty()) {
            throw std::runtime_error(configs[i].name + ": " + errors[i]);
        }
    }
    return results;
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

namespace detail {

// The simulated-comparison preset. beta1 = 0 keeps the second-order cross
// term of simultaneous factor updates visible; with heavy momentum smoothing
// the no-alternation variant converges as well as the full method at this
// scale and the qualitative ordering of the curves disappears.
inline Json fig2_entry(const std::string& name, const char* optimizer, Index rows, Index cols,
                       long iterations, double eta, bool with_adapter, bool alternating = true,
                       bool calibration = true) {
    Json cfg{{"version", 1},
             {"name", name},
             {"problem",
              Json{{"rows", rows},
                   {"cols", cols},
                   {"target_rank", 8},
                   {"seed", 2026},
                   {"loss", "full_square"}}},
             {"optimizer", optimizer},
             {"optimizer_config",
              Json{{"eta", eta},
                   {"beta1", 0.0},
                   {"beta2", 0.999},
                   {"eps", 1e-8},
                   {"lambda", 0.0},
                   {"alpha", 1.0},
                   {"alternating", alternating},
                   {"first_moment_calibration", calibration},
                   {"second_moment_calibration", calibration}}},
             {"iterations", iterations},
             {"log_every", 1}};
    if (with_adapter) {
        cfg["adapter"] = Json{{"rank", 8}, {"seed", 77}, {"init", "lora"}};
    }
    return cfg;
}

inline Json fig2_preset(Index rows, Index cols, long iterations, double eta) {
    return Json{{"version", 1},
                {"batch",
                 Json::array({fig2_entry("full_adamw", "full_adamw", rows, cols, iterations, eta,
                                         false),
                              fig2_entry("loft_adamw", "loft_adamw", rows, cols, iterations, eta,
                                         true),
                              fig2_entry("lora_adamw", "lora_adamw", rows, cols, iterations, eta,
                                         true),
                              fig2_entry("loft_no_alternation", "loft_adamw", rows, cols,
                                         iterations, eta, true, false, true),
                              fig2_entry("loft_no_calibration", "loft_adamw", rows, cols,
                                         iterations, eta, true, true, false)})}};
}

} // namespace detail

inline std::vector<std::string> preset_names() {
    return {"fig2", "fig2_full", "lemma1", "lemma2", "fullrank_recovery", "ablation_grid"};
}

inline Json emit_preset(const std::string& name) {
    if (name == "fig2") return detail::fig2_preset(128, 64, 250, 0.1);
    if (name == "fig2_full") return detail::fig2_preset(1024, 512, 400, 0.1);
    if (name == "lemma1") {
        Json problem{{"rows", 12},
                     {"cols", 9},
                     {"target_rank", 3},
                     {"seed", 314},
                     {"loss", "half_square"}};
        Json opt{{"eta", 0.1}, {"beta1", 0.9}};
        Json loft{{"version", 1},
                  {"name", "loft_gd_momentum"},
                  {"problem", problem},
                  {"adapter", Json{{"rank", 3}, {"seed", 15}, {"init", "subspace"}}},
                  {"optimizer", "loft_gd_momentum"},
                  {"optimizer_config", opt},
                  {"iterations", 50}};
        Json full{{"version", 1},
                  {"name", "full_gd_momentum"},
                  {"problem", problem},
                  {"adapter", Json{{"rank", 3}, {"seed", 15}, {"init", "subspace"}}},
                  {"optimizer", "full_gd_momentum"},
                  {"optimizer_config", opt},
                  {"iterations", 50}};
        return Json{{"version", 1}, {"batch", Json::array({loft, full})}};
    }
    if (name == "lemma2") {
        return Json{{"version", 1},
                    {"name", "loft_gd_eta1"},
                    {"problem",
                     Json{{"rows", 10},
                          {"cols", 8},
                          {"target_rank", 4},
                          {"seed", 99},
                          {"loss", "half_square"}}},
                    {"adapter", Json{{"rank", 2}, {"seed", 5}, {"init", "lora"}}},
                    {"optimizer", "loft_gd"},
                    {"optimizer_config", Json{{"eta", 1.0}}},
                    {"iterations", 20}};
    }
    if (name == "fullrank_recovery") {
        Json problem{{"rows", 8},
                     {"cols", 8},
                     {"target_rank", 8},
                     {"seed", 4242},
                     {"loss", "full_square"}};
        Json adapter{{"rank", 8}, {"seed", 21}, {"init", "gaussian"}};
        Json opt{{"eta", 0.05}, {"beta1", 0.9}, {"beta2", 0.999}, {"eps", 1e-8}, {"lambda", 0.0}};
        Json loft{{"version", 1},        {"name", "loft_adamw"},
                  {"problem", problem},  {"adapter", adapter},
                  {"optimizer", "loft_adamw"}, {"optimizer_config", opt},
                  {"iterations", 100}};
        Json full{{"version", 1},        {"name", "full_adamw"},
                  {"problem", problem},  {"adapter", adapter},
                  {"optimizer", "full_adamw"}, {"optimizer_config", opt},
                  {"iterations", 100}};
        return Json{{"version", 1}, {"batch", Json::array({loft, full})}};
    }
    if (name == "ablation_grid") {
        auto entry = [](const std::string& n, bool alternating, bool calibration) {
            Json cfg = detail::fig2_entry(n, "loft_adamw", 128, 64, 250, 0.1, true, alternating,
                                          calibration);
            return cfg;
        };
        return Json{{"version", 1},
                    {"batch", Json::array({entry("loft_full", true, true),
                                           entry("loft_no_alternation", false, true),
                                           entry("loft_no_calibration", true, false),
                                           entry("loft_neither", false, false)})}};
    }
    throw std::invalid_argument("unknown preset '" + name + "'");
}

} // namespace loft
