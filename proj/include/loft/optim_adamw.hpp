// Copyright (c) 2026 the loft authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>

#include "loft/adapter.hpp"
#include "loft/clip.hpp"
#include "loft/loft_state.hpp"
#include "loft/matrix.hpp"

namespace loft {

/// Shared optimizer hyperparameters. clip_threshold <= 0 disables clipping.
/// alpha only affects the plain LoRA baseline; the calibrated steppers run at
/// effective scale 1. eps_inside_sqrt selects sqrt(v_hat + eps) instead of the
/// conventional sqrt(v_hat) + eps; both the full AdamW reference and the
/// low-rank stepper honor it, so paired runs always share the placement.
struct OptimizerConfig {
    double eta = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double lambda = 0.0;
    double clip_threshold = 0.0;
    double alpha = 1.0;

    bool alternating = true;
    bool first_moment_calibration = true;
    bool second_moment_calibration = true;
    bool eps_inside_sqrt = false;
    bool update_u_first = true;

    // Muon-family knobs.
    double mu = 0.95;
    int ns_steps = 5;

    bool clip_enabled() const { return clip_threshold > 0.0; }

    void validate() const {
        if (!(eta > 0.0)) throw std::invalid_argument("optimizer_config.eta: must be > 0");
        if (!(beta1 >= 0.0 && beta1 < 1.0))
            throw std::invalid_argument("optimizer_config.beta1: must be in [0,1)");
        if (!(beta2 >= 0.0 && beta2 < 1.0))
            throw std::invalid_argument("optimizer_config.beta2: must be in [0,1)");
        if (!(eps > 0.0)) throw std::invalid_argument("optimizer_config.eps: must be > 0");
        if (!(lambda >= 0.0)) throw std::invalid_argument("optimizer_config.lambda: must be >= 0");
        if (!(mu >= 0.0 && mu < 1.0))
            throw std::invalid_argument("optimizer_config.mu: must be in [0,1)");
        if (ns_steps < 1) throw std::invalid_argument("optimizer_config.ns_steps: must be >= 1");
        if (!(alpha > 0.0)) throw std::invalid_argument("optimizer_config.alpha: must be > 0");
    }
};

/// Dense first/second moments for the full-parameter reference optimizers.
struct FullAdamState {
    Matrix m;
    Matrix v;
    long step = 0;
};

inline FullAdamState make_full_adam_state(Index rows, Index cols) {
    return {Matrix(rows, cols), Matrix(rows, cols), 0};
}

/// Independent per-factor Adam moments for the plain LoRA baseline.
struct LoraAdamState {
    FullAdamState for_u;
    FullAdamState for_v;
    long step = 0;
};

inline LoraAdamState make_lora_adam_state(Index m, Index n, Index r) {
    return {make_full_adam_state(m, r), make_full_adam_state(n, r), 0};
}

/// Per-step metadata the harness logs.
struct StepInfo {
    double effective_grad_norm = 0.0;
    double clip_factor = 1.0;
    long clamped_entries = 0;
};

namespace detail {

inline Matrix adam_direction(const Matrix& m_hat, const Matrix& v_hat, double eps,
                             bool eps_inside_sqrt, long* clamped) {
    Matrix out = m_hat;
    for (std::size_t i = 0; i < out.data().size(); ++i) {
        double v = v_hat.data()[i];
        if (v < 0.0) {
            v = 0.0;
            if (clamped) ++*clamped;
        }
        const double denom = eps_inside_sqrt ? std::sqrt(v + eps) : std::sqrt(v) + eps;
        out.data()[i] /= denom;
    }
    return out;
}

} // namespace detail

/// Decoupled-weight-decay AdamW on a dense parameter:
///   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g.g
///   W <- (1 - lambda eta) W - eta * m_hat / (sqrt(v_hat) + eps)
inline StepInfo adamw_full_step(Matrix& w, const Matrix& gw, FullAdamState& state,
                                const OptimizerConfig& cfg) {
    if (!w.same_shape(gw)) throw std::invalid_argument("adamw_full_step: shape mismatch");
    StepInfo info;
    Matrix g = gw;
    info.effective_grad_norm = frobenius_norm(g);
    if (cfg.clip_enabled()) {
        info.clip_factor = clip_scale(info.effective_grad_norm, cfg.clip_threshold);
        g *= info.clip_factor;
    }
    state.step += 1;
    const double k = static_cast<double>(state.step);
    state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * g;
    state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * hadamard(g, g);
    const double bc1 = 1.0 - std::pow(cfg.beta1, k);
    const double bc2 = 1.0 - std::pow(cfg.beta2, k);
    const Matrix dir = detail::adam_direction(state.m * (1.0 / bc1), state.v * (1.0 / bc2),
                                              cfg.eps, cfg.eps_inside_sqrt, nullptr);
    w = (1.0 - cfg.lambda * cfg.eta) * w - cfg.eta * dir;
    return info;
}

/// Heavy-ball EMA form: m <- b1 m + (1-b1) g; W <- (1 - lambda eta) W - eta m.
/// beta1 = 0 reduces to plain gradient descent.
inline StepInfo gd_momentum_full_step(Matrix& w, const Matrix& gw, FullAdamState& state,
                                      const OptimizerConfig& cfg) {
    if (!w.same_shape(gw)) throw std::invalid_argument("gd_momentum_full_step: shape mismatch");
    StepInfo info;
    Matrix g = gw;
    info.effective_grad_norm = frobenius_norm(g);
    if (cfg.clip_enabled()) {
        info.clip_factor = clip_scale(info.effective_grad_norm, cfg.clip_threshold);
        g *= info.clip_factor;
    }
    state.step += 1;
    state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * g;
    w = (1.0 - cfg.lambda * cfg.eta) * w - cfg.eta * state.m;
    return info;
}

/// Effective weight of the LoRA baseline, W0 + alpha U V^T. The calibrated
/// steppers use effective_weight (alpha pinned to 1).
inline Matrix lora_effective_weight(const LowRankAdapter& a, double alpha) {
    return a.w0 + alpha * (a.u * transpose(a.v));
}

/// Plain LoRA baseline: simultaneous per-factor AdamW on the raw factor
/// gradients of W0 + alpha U V^T. No projection, no calibration.
inline StepInfo lora_adamw_step(LowRankAdapter& a, const Matrix& gw, LoraAdamState& state,
                                const OptimizerConfig& cfg) {
    require_shape(gw, a.m(), a.n(), "lora_adamw_step: gw");
    StepInfo info;
    Matrix gu = cfg.alpha * (gw * a.v);
    Matrix gv = cfg.alpha * (transpose(gw) * a.u);
    info.effective_grad_norm = std::sqrt(frobenius_norm(gu) * frobenius_norm(gu) +
                                         frobenius_norm(gv) * frobenius_norm(gv));
    if (cfg.clip_enabled()) {
        info.clip_factor = clip_scale(info.effective_grad_norm, cfg.clip_threshold);
        gu *= info.clip_factor;
        gv *= info.clip_factor;
    }
    state.step += 1;
    const double k = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, k);
    const double bc2 = 1.0 - std::pow(cfg.beta2, k);

    const Matrix u_before = a.u;
    const Matrix v_before = a.v;
    auto factor_update = [&](Matrix& param, const Matrix& grad, FullAdamState& s) {
        s.step += 1;
        s.m = cfg.beta1 * s.m + (1.0 - cfg.beta1) * grad;
        s.v = cfg.beta2 * s.v + (1.0 - cfg.beta2) * hadamard(grad, grad);
        const Matrix dir = detail::adam_direction(s.m * (1.0 / bc1), s.v * (1.0 / bc2), cfg.eps,
                                                  cfg.eps_inside_sqrt, nullptr);
        param = (1.0 - cfg.lambda * cfg.eta) * param - cfg.eta * dir;
    };
    factor_update(a.u, gu, state.for_u);
    factor_update(a.v, gv, state.for_v);
    a.u_prev = u_before;
    a.v_prev = v_before;
    return info;
}

namespace detail {

// Clip factor for the calibrated steppers: effective gradient of the layer is
// g_scaled_active * inactive^T. With alternation off both factors move, so
// both terms enter the norm.
inline double loft_clip_factor(const Matrix& gu_scaled, const Matrix& gv_scaled,
                               const LowRankAdapter& a, bool update_u, const OptimizerConfig& cfg,
                               double* norm_out) {
    double norm_sq = 0.0;
    if (cfg.alternating) {
        norm_sq = update_u ? effective_layer_norm_sq(gu_scaled, a.v)
                           : effective_layer_norm_sq(gv_scaled, a.u);
    } else {
        norm_sq = effective_layer_norm_sq(gu_scaled, a.v) +
                  effective_layer_norm_sq(gv_scaled, a.u);
    }
    const double norm = std::sqrt(norm_sq);
    if (norm_out) *norm_out = norm;
    return cfg.clip_enabled() ? clip_scale(norm, cfg.clip_threshold) : 1.0;
}

} // namespace detail

/// Projected gradient descent on the factors (building blocks 1-2):
/// updating U applies U <- (1 - lambda eta) U - eta gW V (V^T V)^{-1}, so the
/// induced change of W is -eta gW P_V. With eta = 1 on the half-square
/// factorization loss this is exact alternating least squares.
inline StepInfo loft_gd_step(LowRankAdapter& a, const Matrix& gw, LoftAdamState& state,
                             const OptimizerConfig& cfg) {
    require_shape(gw, a.m(), a.n(), "loft_gd_step: gw");
    StepInfo info;
    const FactorGrads raw = factor_grads(gw, a);
    ScaledGrads sg = scaled_grads(raw.gu, raw.gv, a);
    info.clip_factor =
        detail::loft_clip_factor(sg.gu, sg.gv, a, state.update_u_next, cfg,
                                 &info.effective_grad_norm);
    if (info.clip_factor != 1.0) {
        sg.gu *= info.clip_factor;
        sg.gv *= info.clip_factor;
    }
    state.step += 1;
    const Matrix u_before = a.u;
    const Matrix v_before = a.v;
    const double decay = 1.0 - cfg.lambda * cfg.eta;
    if (cfg.alternating) {
        if (state.update_u_next) {
            a.u = decay * a.u - cfg.eta * sg.gu;
        } else {
            a.v = decay * a.v - cfg.eta * sg.gv;
        }
        state.update_u_next = !state.update_u_next;
    } else {
        a.u = decay * a.u - cfg.eta * sg.gu;
        a.v = decay * v_before - cfg.eta * sg.gv;
    }
    a.u_prev = u_before;
    a.v_prev = v_before;
    return info;
}

/// Momentum variant: calibrated first moments on both factors every step, then
/// the active factor moves by eta (m V^T) V (V^T V)^{-1} (the reconstructed
/// full-space momentum projected back onto the factor).
inline StepInfo loft_gd_momentum_step(LowRankAdapter& a, const Matrix& gw, LoftAdamState& state,
                                      const OptimizerConfig& cfg) {
    require_shape(gw, a.m(), a.n(), "loft_gd_momentum_step: gw");
    StepInfo info;
    const FactorGrads raw = factor_grads(gw, a);
    ScaledGrads sg = scaled_grads(raw.gu, raw.gv, a);
    info.clip_factor =
        detail::loft_clip_factor(sg.gu, sg.gv, a, state.update_u_next, cfg,
                                 &info.effective_grad_norm);
    if (info.clip_factor != 1.0) {
        sg.gu *= info.clip_factor;
        sg.gv *= info.clip_factor;
    }
    const CalibrationPair calib = calibration_matrices(a);
    state.step += 1;
    update_first_moments(state, calib, sg.gu, sg.gv, cfg.beta1, cfg.first_moment_calibration);

    const Matrix u_before = a.u;
    const Matrix v_before = a.v;
    const double decay = 1.0 - cfg.lambda * cfg.eta;
    auto u_delta = [&] {
        return cfg.eta * (reconstruct_first_moment(state.mu, v_before) * v_before *
                          gram_inverse(v_before).inverse);
    };
    auto v_delta = [&] {
        return cfg.eta * (reconstruct_first_moment(state.mv, u_before) * u_before *
                          gram_inverse(u_before).inverse);
    };
    if (cfg.alternating) {
        if (state.update_u_next) {
            a.u = decay * a.u - u_delta();
        } else {
            a.v = decay * a.v - v_delta();
        }
        state.update_u_next = !state.update_u_next;
    } else {
        a.u = decay * a.u - u_delta();
        a.v = decay * v_before - v_delta();
    }
    a.u_prev = u_before;
    a.v_prev = v_before;
    return info;
}

/// Calibrated AdamW on the low-rank factors. One iteration:
///   factor grads -> calibration -> scaled grads -> (optional clip) ->
///   both moment and cross-term buffers updated -> for the active factor,
///   reconstruct the bias-corrected full-space direction
///     m_hat = mU V^T / (1 - b1^k),  v_hat = pU (V * V) / (1 - b2^k),
///   form m_hat / (sqrt(v_hat) + eps) and project it back with V (V^T V)^{-1};
///   decoupled decay shrinks the active factor only. v_hat is clamped at zero
///   before the square root and clamp events are counted.
inline StepInfo loft_adamw_step(LowRankAdapter& a, const Matrix& gw, LoftAdamState& state,
                                const OptimizerConfig& cfg) {
    require_shape(gw, a.m(), a.n(), "loft_adamw_step: gw");
    StepInfo info;
    const FactorGrads raw = factor_grads(gw, a);
    ScaledGrads sg = scaled_grads(raw.gu, raw.gv, a);
    info.clip_factor =
        detail::loft_clip_factor(sg.gu, sg.gv, a, state.update_u_next, cfg,
                                 &info.effective_grad_norm);
    if (info.clip_factor != 1.0) {
        sg.gu *= info.clip_factor;
        sg.gv *= info.clip_factor;
    }
    const CalibrationPair calib = calibration_matrices(a);
    state.step += 1;
    const double k = static_cast<double>(state.step);
    update_first_moments(state, calib, sg.gu, sg.gv, cfg.beta1, cfg.first_moment_calibration);
    update_cross_terms(state, calib, sg.gu, sg.gv, cfg.beta2, cfg.second_moment_calibration);

    const double bc1 = 1.0 - std::pow(cfg.beta1, k);
    const double bc2 = 1.0 - std::pow(cfg.beta2, k);
    const Matrix u_before = a.u;
    const Matrix v_before = a.v;
    const double decay = 1.0 - cfg.lambda * cfg.eta;

    auto u_delta = [&] {
        const Matrix m_hat = reconstruct_first_moment(state.mu, v_before) * (1.0 / bc1);
        const Matrix v_hat = reconstruct_second_moment(state.pu, v_before) * (1.0 / bc2);
        const Matrix dir =
            detail::adam_direction(m_hat, v_hat, cfg.eps, cfg.eps_inside_sqrt,
                                   &info.clamped_entries);
        return cfg.eta * (dir * v_before * gram_inverse(v_before).inverse);
    };
    auto v_delta = [&] {
        const Matrix m_hat = reconstruct_first_moment(state.mv, u_before) * (1.0 / bc1);
        const Matrix v_hat = reconstruct_second_moment(state.pv, u_before) * (1.0 / bc2);
        const Matrix dir =
            detail::adam_direction(m_hat, v_hat, cfg.eps, cfg.eps_inside_sqrt,
                                   &info.clamped_entries);
        return cfg.eta * (dir * u_before * gram_inverse(u_before).inverse);
    };
    if (cfg.alternating) {
        if (state.update_u_next) {
            a.u = decay * a.u - u_delta();
        } else {
            a.v = decay * a.v - v_delta();
        }
        state.update_u_next = !state.update_u_next;
    } else {
        a.u = decay * a.u - u_delta();
        a.v = decay * v_before - v_delta();
    }
    a.u_prev = u_before;
    a.v_prev = v_before;
    return info;
}

} // namespace loft
