// Copyright (c) 2026 the loft authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>

#include "loft/adapter.hpp"
#include "loft/loft_state.hpp"
#include "loft/optim_adamw.hpp"

namespace loft {

/// Quintic Newton-Schulz iteration parameters. The coefficient triple pushes
/// singular values into a band around 1 rather than converging to it exactly.
struct NewtonSchulzParams {
    int n_steps = 5;
    double a = 3.4445;
    double b = -4.7750;
    double c = 2.0315;
    double eps = 1e-7;
};

inline NewtonSchulzParams ns_params_from(const OptimizerConfig& cfg) {
    NewtonSchulzParams p;
    p.n_steps = cfg.ns_steps;
    return p;
}

/// Dense quintic Newton-Schulz orthogonalization. Approximates the orthogonal
/// polar factor of G; a zero input returns zero. Works on the transpose when
/// rows > cols so the square iterate is the smaller Gram side.
inline Matrix newton_schulz5(const Matrix& g, const NewtonSchulzParams& params = {}) {
    if (params.n_steps < 1) throw std::invalid_argument("newton_schulz5: n_steps must be >= 1");
    const bool flip = g.rows() > g.cols();
    Matrix x = flip ? transpose(g) : g;
    x *= 1.0 / (frobenius_norm(g) + params.eps);
    for (int k = 0; k < params.n_steps; ++k) {
        const Matrix a_mat = x * transpose(x);
        const Matrix b_mat = params.b * a_mat + params.c * (a_mat * a_mat);
        x = params.a * x + b_mat * x;
    }
    return flip ? transpose(x) : x;
}

/// Low-rank Newton-Schulz on G = U V^T without densifying G. Returns X_U such
/// that X_U V^T equals newton_schulz5(U V^T) up to floating-point error; the
/// iteration lives on an r x r core (X = U X_c V^T), costing
/// O((m+n)r^2 + r^3) per step. Mirrors the dense transpose branch when m > n.
inline Matrix newton_schulz5_lowrank(const Matrix& u_in, const Matrix& v_in,
                                     const NewtonSchulzParams& params = {}) {
    if (u_in.cols() != v_in.cols()) {
        throw std::invalid_argument("newton_schulz5_lowrank: factor ranks differ");
    }
    if (params.n_steps < 1) {
        throw std::invalid_argument("newton_schulz5_lowrank: n_steps must be >= 1");
    }
    const bool flip = u_in.rows() > v_in.rows();
    const Matrix& u = flip ? v_in : u_in;
    const Matrix& v = flip ? u_in : v_in;
    const Index r = u.cols();

    const Matrix utu = transpose(u) * u;
    const Matrix vtv = transpose(v) * v;
    const double g_norm = lowrank_fro_norm(u, v);

    Matrix xc = Matrix::identity(r) * (1.0 / (g_norm + params.eps));
    for (int k = 0; k < params.n_steps; ++k) {
        const Matrix s = xc * vtv * transpose(xc);
        const Matrix a_small = s * utu;
        const Matrix b_small = params.b * a_small + params.c * (a_small * a_small);
        xc = params.a * xc + b_small * xc;
    }
    // Swapped branch returns V X_c^T, which is the original U times X_c^T.
    return flip ? v * transpose(xc) : u * xc;
}

/// Momentum buffer for the dense Muon reference.
struct MuonState {
    Matrix m;
    long step = 0;
};

inline MuonState make_muon_state(Index rows, Index cols) { return {Matrix(rows, cols), 0}; }

/// Moments for the calibrated low-rank Muon; deliberately holds no r^2
/// cross-term buffers (all Muon state is linear in the gradients).
struct LoftMuonState {
    Matrix mu; // m x r
    Matrix mv; // n x r
    long step = 0;
    bool update_u_next = true;
};

inline LoftMuonState make_loft_muon_state(Index m, Index n, Index r, bool update_u_first = true) {
    return {Matrix(m, r), Matrix(n, r), 0, update_u_first};
}

/// Dense Muon: m <- mu m + g; W <- (1 - lambda eta) W - eta NewtonSchulz5(m).
inline StepInfo muon_full_step(Matrix& w, const Matrix& gw, MuonState& state,
                               const OptimizerConfig& cfg) {
    if (!w.same_shape(gw)) throw std::invalid_argument("muon_full_step: shape mismatch");
    StepInfo info;
    Matrix g = gw;
    info.effective_grad_norm = frobenius_norm(g);
    if (cfg.clip_enabled()) {
        info.clip_factor = clip_scale(info.effective_grad_norm, cfg.clip_threshold);
        g *= info.clip_factor;
    }
    state.step += 1;
    state.m = cfg.mu * state.m + g;
    const Matrix o = newton_schulz5(state.m, ns_params_from(cfg));
    w = (1.0 - cfg.lambda * cfg.eta) * w - cfg.eta * o;
    return info;
}

/// Calibrated low-rank Muon: scaled factor gradients, calibrated momentum on
/// both factors every step, then the active factor moves by
/// eta * NewtonSchulz5_LowRank(m_factor, other_factor).
inline StepInfo loft_muon_step(LowRankAdapter& a, const Matrix& gw, LoftMuonState& state,
                               const OptimizerConfig& cfg) {
    require_shape(gw, a.m(), a.n(), "loft_muon_step: gw");
    StepInfo info;
    const FactorGrads raw = factor_grads(gw, a);
    ScaledGrads sg = scaled_grads(raw.gu, raw.gv, a);
    {
        double norm_sq = 0.0;
        if (cfg.alternating) {
            norm_sq = state.update_u_next ? effective_layer_norm_sq(sg.gu, a.v)
                                          : effective_layer_norm_sq(sg.gv, a.u);
        } else {
            norm_sq = effective_layer_norm_sq(sg.gu, a.v) + effective_layer_norm_sq(sg.gv, a.u);
        }
        info.effective_grad_norm = std::sqrt(norm_sq);
        if (cfg.clip_enabled()) {
            info.clip_factor = clip_scale(info.effective_grad_norm, cfg.clip_threshold);
            sg.gu *= info.clip_factor;
            sg.gv *= info.clip_factor;
        }
    }
    const CalibrationPair calib = calibration_matrices(a);
    state.step += 1;
    state.mu = cfg.mu * (state.mu * calib.cv) + sg.gu;
    state.mv = cfg.mu * (state.mv * calib.cu) + sg.gv;

    const Matrix u_before = a.u;
    const Matrix v_before = a.v;
    const double decay = 1.0 - cfg.lambda * cfg.eta;
    const NewtonSchulzParams ns = ns_params_from(cfg);
    if (cfg.alternating) {
        if (state.update_u_next) {
            a.u = decay * a.u - cfg.eta * newton_schulz5_lowrank(state.mu, v_before, ns);
        } else {
            a.v = decay * a.v - cfg.eta * newton_schulz5_lowrank(state.mv, u_before, ns);
        }
        state.update_u_next = !state.update_u_next;
    } else {
        a.u = decay * a.u - cfg.eta * newton_schulz5_lowrank(state.mu, v_before, ns);
        a.v = decay * v_before - cfg.eta * newton_schulz5_lowrank(state.mv, u_before, ns);
    }
    a.u_prev = u_before;
    a.v_prev = v_before;
    return info;
}

} // namespace loft
