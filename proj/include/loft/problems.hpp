// Copyright (c) 2026 the loft authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "loft/linalg.hpp"
#include "loft/matrix.hpp"
#include "loft/rng.hpp"

namespace loft {

/// Loss convention for the quadratic target. full_square is ||W - A||_F^2
/// (gradient 2(W - A)); half_square is the 0.5-weighted version whose
/// gradient is W - A, the convention under which a unit step is exact
/// alternating least squares.
enum class LossConvention { full_square, half_square };

/// Randomly generated rank-r target with its thin SVD (rank_A columns; the
/// remaining singular values are exactly zero by construction).
struct MatrixTarget {
    Matrix a;
    Index true_rank = 0;
    std::uint64_t seed = 0;
    Matrix u_svd;              // m x true_rank
    std::vector<double> sigma; // true_rank, descending
    Matrix v_svd;              // n x true_rank
};

/// A = G1 G2^T with seeded standard-normal G1 (m x r), G2 (n x r). The thin
/// SVD comes from QR of the factors plus an r x r SVD, so generation stays
/// cheap at large m, n; the deterministic sign convention of svd() applies.
inline MatrixTarget gen_rank_r_target(Index m, Index n, Index r_a, std::uint64_t seed) {
    if (m <= 0 || n <= 0) throw std::invalid_argument("gen_rank_r_target: dims must be positive");
    if (r_a < 1 || r_a > std::min(m, n)) {
        throw std::invalid_argument("gen_rank_r_target: target rank must be in [1, min(m,n)]");
    }
    Rng rng(seed);
    const Matrix g1 = gaussian_matrix(m, r_a, rng);
    const Matrix g2 = gaussian_matrix(n, r_a, rng);

    MatrixTarget t;
    t.true_rank = r_a;
    t.seed = seed;
    t.a = g1 * transpose(g2);

    const Qr q1 = thin_qr(g1);
    const Qr q2 = thin_qr(g2);
    Svd core = svd(q1.r * transpose(q2.r));
    t.u_svd = q1.q * core.u;
    t.v_svd = q2.q * core.v;
    t.sigma = std::move(core.sigma);
    detail::apply_svd_sign_convention(t.u_svd, t.v_svd);
    return t;
}

struct LossGrad {
    double loss = 0.0;
    Matrix grad;
};

/// Quadratic distance to the target under the chosen convention.
inline LossGrad mf_loss_grad(const Matrix& w, const MatrixTarget& target,
                             LossConvention convention) {
    if (!w.same_shape(target.a)) throw std::invalid_argument("mf_loss_grad: shape mismatch");
    Matrix diff = w - target.a;
    double sq = 0.0;
    for (double v : diff.data()) sq += v * v;
    if (convention == LossConvention::full_square) {
        return {sq, 2.0 * diff};
    }
    return {0.5 * sq, std::move(diff)};
}

/// Best rank-r residual of the target under the given convention:
/// sum_{i>r} sigma_i^2, halved for the half-square loss.
inline double eckart_young_optimum(const MatrixTarget& target, Index r,
                                   LossConvention convention) {
    double tail = 0.0;
    for (Index i = r; i < static_cast<Index>(target.sigma.size()); ++i) {
        const double s = target.sigma[static_cast<std::size_t>(i)];
        tail += s * s;
    }
    return convention == LossConvention::full_square ? tail : 0.5 * tail;
}

/// Factors started inside the target's top singular subspaces:
/// U0 = U_r X0, V0 = V_r Y0 with seeded full-rank Gaussian r x r mixers.
inline std::pair<Matrix, Matrix> subspace_init(const MatrixTarget& target, Index r,
                                               std::uint64_t seed) {
    if (r < 1 || r > target.true_rank) {
        throw std::invalid_argument("subspace_init: rank must be in [1, target true_rank]");
    }
    Rng rng(seed);
    const Matrix x0 = gaussian_matrix(r, r, rng);
    const Matrix y0 = gaussian_matrix(r, r, rng);

    Matrix u_r(target.u_svd.rows(), r);
    Matrix v_r(target.v_svd.rows(), r);
    for (Index i = 0; i < u_r.rows(); ++i)
        for (Index j = 0; j < r; ++j) u_r(i, j) = target.u_svd(i, j);
    for (Index i = 0; i < v_r.rows(); ++i)
        for (Index j = 0; j < r; ++j) v_r(i, j) = target.v_svd(i, j);
    return {u_r * x0, v_r * y0};
}

} // namespace loft
