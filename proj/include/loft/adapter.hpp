// Copyright (c) 2026 the loft authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "loft/linalg.hpp"
#include "loft/matrix.hpp"
#include "loft/rng.hpp"

namespace loft {

/// Low-rank reparameterization W = W0 + U V^T with a frozen base. Keeps the
/// factors from one optimizer step earlier; the calibration matrices compare
/// consecutive iterates, so steppers snapshot prev right before they mutate
/// a factor.
struct LowRankAdapter {
    Matrix w0;     // m x n, frozen
    Matrix u;      // m x r
    Matrix v;      // n x r
    Matrix u_prev; // m x r
    Matrix v_prev; // n x r
    Index rank = 0;

    Index m() const { return w0.rows(); }
    Index n() const { return w0.cols(); }
};

/// Standard LoRA-style initialization: V seeded Gaussian scaled by 1/sqrt(r)
/// (full column rank with probability 1), U zero, so the effective weight
/// starts exactly at W0. prev factors start equal to the current ones.
inline LowRankAdapter init_adapter(Index m, Index n, Index r, std::uint64_t seed,
                                   const Matrix& w0) {
    if (m <= 0 || n <= 0 || r <= 0) {
        throw std::invalid_argument("init_adapter: dimensions must be positive");
    }
    require_shape(w0, m, n, "init_adapter: w0");
    LowRankAdapter a;
    a.w0 = w0;
    a.rank = r;
    Rng rng(seed);
    a.v = gaussian_matrix(n, r, rng, 1.0 / std::sqrt(static_cast<double>(r)));
    a.u = Matrix(m, r);
    a.u_prev = a.u;
    a.v_prev = a.v;
    return a;
}

inline Matrix effective_weight(const LowRankAdapter& a) {
    return a.w0 + a.u * transpose(a.v);
}

struct FactorGrads {
    Matrix gu; // m x r
    Matrix gv; // n x r
};

/// Chain rule through W = W0 + U V^T: grad_U = gW V, grad_V = gW^T U.
inline FactorGrads factor_grads(const Matrix& gw, const LowRankAdapter& a) {
    require_shape(gw, a.m(), a.n(), "factor_grads: gw");
    return {gw * a.v, transpose(gw) * a.u};
}

/// Scaled gradients: grad_U (V^T V)^{-1} and grad_V (U^T U)^{-1}, which make
/// the induced update on W the projection gW P_V (resp. P_U gW) and remove
/// the (cU, V/c) scale ambiguity. Rank-deficient Gram matrices fall back to
/// the pseudo-inverse; the effective ranks are reported alongside.
struct ScaledGrads {
    Matrix gu; // m x r
    Matrix gv; // n x r
    Index rank_v = 0;
    Index rank_u = 0;
};

inline ScaledGrads scaled_grads(const Matrix& gu, const Matrix& gv, const LowRankAdapter& a) {
    require_shape(gu, a.m(), a.rank, "scaled_grads: gu");
    require_shape(gv, a.n(), a.rank, "scaled_grads: gv");
    const GramInverse gv_inv = gram_inverse(a.v);
    const GramInverse gu_inv = gram_inverse(a.u);
    return {gu * gv_inv.inverse, gv * gu_inv.inverse, gv_inv.effective_rank,
            gu_inv.effective_rank};
}

} // namespace loft
