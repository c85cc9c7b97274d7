// Copyright (c) 2026 the loft authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <span>

#include "loft/matrix.hpp"

namespace loft {

/// View of one layer's gradient for full-fine-tuning-aware clipping. The
/// effective gradient of the layer is g_scaled_active * inactive_factor^T
/// (equal to gW P_V when updating U), but it is never densified here.
struct LayerGradView {
    const Matrix* g_scaled_active = nullptr;
    const Matrix* inactive_factor = nullptr;
};

/// ||g F^T||_F for one layer via tr((g^T g)(F^T F)), O((m+n)r^2).
inline double effective_layer_norm_sq(const Matrix& g_scaled_active,
                                      const Matrix& inactive_factor) {
    if (g_scaled_active.cols() != inactive_factor.cols()) {
        throw std::invalid_argument("effective_layer_norm_sq: factor ranks differ");
    }
    const Matrix gtg = transpose(g_scaled_active) * g_scaled_active;
    const Matrix ftf = transpose(inactive_factor) * inactive_factor;
    return std::max(trace_of_product(gtg, ftf), 0.0);
}

/// Global norm of the effective gradients across layers,
/// sqrt(sum_layers ||g_active inactive^T||_F^2).
inline double effective_global_norm(std::span<const LayerGradView> layers) {
    double s = 0.0;
    for (const LayerGradView& layer : layers) {
        s += effective_layer_norm_sq(*layer.g_scaled_active, *layer.inactive_factor);
    }
    return std::sqrt(s);
}

/// Standard global-norm clipping factor in (0, 1].
inline double clip_scale(double norm, double threshold) {
    if (threshold <= 0.0) {
        throw std::invalid_argument("clip_scale: threshold must be positive");
    }
    constexpr double tiny = 1e-300;
    return std::min(1.0, threshold / std::max(norm, tiny));
}

} // namespace loft
