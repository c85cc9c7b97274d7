// Copyright (c) 2026 the loft authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "loft/optim_adamw.hpp"
#include "loft/problems.hpp"
#include "oracles.hpp"

using loft::Index;
using loft::Matrix;

TEST_CASE("adamw_full_step first step and decay") {
    loft::Rng rng(300);
    SECTION("bias correction makes the first step sign-like") {
        Matrix w(3, 3);
        const Matrix g = loft::gaussian_matrix(3, 3, rng);
        loft::FullAdamState s = loft::make_full_adam_state(3, 3);
        loft::OptimizerConfig cfg;
        cfg.eta = 0.1;
        loft::adamw_full_step(w, g, s, cfg);
        for (Index i = 0; i < 3; ++i)
            for (Index j = 0; j < 3; ++j) {
                const double want = -cfg.eta * g(i, j) / (std::abs(g(i, j)) + cfg.eps);
                CHECK(std::abs(w(i, j) - want) < 1e-15);
            }
    }
    SECTION("zero gradients shrink the weights geometrically") {
        Matrix w = loft::gaussian_matrix(4, 2, rng);
        const Matrix w0 = w;
        loft::FullAdamState s = loft::make_full_adam_state(4, 2);
        loft::OptimizerConfig cfg;
        cfg.eta = 0.5;
        cfg.lambda = 0.2;
        const Matrix zero(4, 2);
        for (int k = 1; k <= 5; ++k) {
            loft::adamw_full_step(w, zero, s, cfg);
            CHECK(oracle::relative_diff(w, std::pow(1.0 - 0.1, k) * w0) < 1e-14);
        }
    }
    SECTION("eps placement switch changes the denominator") {
        Matrix w1(2, 2), w2(2, 2);
        const Matrix g = loft::gaussian_matrix(2, 2, rng);
        loft::FullAdamState s1 = loft::make_full_adam_state(2, 2);
        loft::FullAdamState s2 = loft::make_full_adam_state(2, 2);
        loft::OptimizerConfig cfg;
        cfg.eps = 1e-2; // large enough to see the difference
        loft::adamw_full_step(w1, g, s1, cfg);
        cfg.eps_inside_sqrt = true;
        loft::adamw_full_step(w2, g, s2, cfg);
        CHECK(loft::max_abs_diff(w1, w2) > 0.0);
    }
}

TEST_CASE("gd_momentum_full_step reductions") {
    loft::Rng rng(301);
    SECTION("beta1 = 0 is plain gradient descent") {
        Matrix w = loft::gaussian_matrix(3, 4, rng);
        const Matrix w0 = w;
        const Matrix g = loft::gaussian_matrix(3, 4, rng);
        loft::FullAdamState s = loft::make_full_adam_state(3, 4);
        loft::OptimizerConfig cfg;
        cfg.eta = 0.3;
        cfg.beta1 = 0.0;
        loft::gd_momentum_full_step(w, g, s, cfg);
        CHECK(loft::max_abs_diff(w, w0 - 0.3 * g) < 1e-15);
    }
    SECTION("constant gradient momentum approaches the gradient geometrically") {
        Matrix w(2, 2);
        const Matrix g = loft::gaussian_matrix(2, 2, rng);
        loft::FullAdamState s = loft::make_full_adam_state(2, 2);
        loft::OptimizerConfig cfg;
        cfg.eta = 0.01;
        cfg.beta1 = 0.5;
        for (int k = 1; k <= 10; ++k) {
            loft::gd_momentum_full_step(w, g, s, cfg);
            const double coeff = 1.0 - std::pow(0.5, k);
            CHECK(oracle::relative_diff(s.m, coeff * g) < 1e-13);
        }
    }
}

TEST_CASE("lora baseline keeps V still while U is zero") {
    loft::Rng rng(302);
    loft::LowRankAdapter a = loft::init_adapter(5, 4, 2, 9, Matrix(5, 4));
    const Matrix v0 = a.v;
    loft::LoraAdamState s = loft::make_lora_adam_state(5, 4, 2);
    loft::OptimizerConfig cfg;
    cfg.eta = 0.1;
    const Matrix g = loft::gaussian_matrix(5, 4, rng);
    loft::lora_adamw_step(a, g, s, cfg);
    CHECK(loft::max_abs_diff(a.v, v0) == 0.0); // gV = g^T U = 0
    CHECK(loft::max_abs(a.u) > 0.0);
    // second step moves both factors
    loft::lora_adamw_step(a, g, s, cfg);
    CHECK(loft::max_abs_diff(a.v, v0) > 0.0);
}

TEST_CASE("loft_gd_step full-rank and ALS behavior") {
    loft::Rng rng(303);
    SECTION("square identity V reduces to full gradient descent on W") {
        loft::LowRankAdapter a = loft::init_adapter(4, 3, 3, 11, Matrix(4, 3));
        a.v = Matrix::identity(3);
        a.v_prev = a.v;
        a.u = loft::gaussian_matrix(4, 3, rng);
        a.u_prev = a.u;
        loft::LoftAdamState s = loft::make_loft_adam_state(4, 3, 3);
        loft::OptimizerConfig cfg;
        cfg.eta = 0.2;
        const Matrix w0 = loft::effective_weight(a);
        const Matrix g = loft::gaussian_matrix(4, 3, rng);
        loft::loft_gd_step(a, g, s, cfg);
        CHECK(loft::max_abs_diff(loft::effective_weight(a), w0 - 0.2 * g) < 1e-14);
    }
    SECTION("unit step on the half-square loss is exact alternating least squares") {
        for (int inst = 0; inst < 5; ++inst) {
            const loft::MatrixTarget target = loft::gen_rank_r_target(8, 6, 3, 500 + inst);
            loft::LowRankAdapter a = loft::init_adapter(8, 6, 2, 600 + inst, Matrix(8, 6));
            loft::LoftAdamState s = loft::make_loft_adam_state(8, 6, 2);
            loft::OptimizerConfig cfg;
            cfg.eta = 1.0;
            for (int k = 0; k < 6; ++k) {
                const bool u_active = s.update_u_next;
                const Matrix u_before = a.u, v_before = a.v;
                const loft::LossGrad lg = loft::mf_loss_grad(loft::effective_weight(a), target,
                                                             loft::LossConvention::half_square);
                loft::loft_gd_step(a, lg.grad, s, cfg);
                const double after = loft::mf_loss_grad(loft::effective_weight(a), target,
                                                        loft::LossConvention::half_square)
                                         .loss;
                Matrix best;
                if (u_active) {
                    best = target.a * v_before *
                           oracle::inverse(loft::transpose(v_before) * v_before) *
                           loft::transpose(v_before);
                } else {
                    best = u_before * loft::transpose(loft::transpose(target.a) * u_before *
                                                      oracle::inverse(loft::transpose(u_before) *
                                                                      u_before));
                }
                const double best_loss =
                    loft::mf_loss_grad(best, target, loft::LossConvention::half_square).loss;
                CHECK(std::abs(after - best_loss) < 1e-8);
            }
        }
    }
    SECTION("flag alternates") {
        loft::LowRankAdapter a = loft::init_adapter(4, 3, 2, 12, Matrix(4, 3));
        loft::LoftAdamState s = loft::make_loft_adam_state(4, 3, 2);
        loft::OptimizerConfig cfg;
        CHECK(s.update_u_next);
        loft::loft_gd_step(a, Matrix(4, 3), s, cfg);
        CHECK_FALSE(s.update_u_next);
        loft::loft_gd_step(a, Matrix(4, 3), s, cfg);
        CHECK(s.update_u_next);
    }
}

TEST_CASE("loft_gd_momentum_step reduces to loft_gd_step at beta1 = 0") {
    loft::Rng rng(304);
    const loft::MatrixTarget target = loft::gen_rank_r_target(6, 5, 2, 77);
    loft::LowRankAdapter a1 = loft::init_adapter(6, 5, 2, 78, Matrix(6, 5));
    loft::LowRankAdapter a2 = a1;
    loft::LoftAdamState s1 = loft::make_loft_adam_state(6, 5, 2);
    loft::LoftAdamState s2 = loft::make_loft_adam_state(6, 5, 2);
    loft::OptimizerConfig cfg;
    cfg.eta = 0.3;
    cfg.beta1 = 0.0;
    for (int k = 0; k < 4; ++k) {
        const loft::LossGrad lg = loft::mf_loss_grad(loft::effective_weight(a1), target,
                                                     loft::LossConvention::half_square);
        loft::loft_gd_step(a1, lg.grad, s1, cfg);
        loft::loft_gd_momentum_step(a2, lg.grad, s2, cfg);
        CHECK(loft::max_abs_diff(loft::effective_weight(a1), loft::effective_weight(a2)) < 1e-11);
    }
}

TEST_CASE("subspace-initialized momentum run recovers the dense trajectory") {
    // target rank equals adapter rank so the gradient stays in the subspace
    for (int seed = 0; seed < 3; ++seed) {
        const loft::MatrixTarget target = loft::gen_rank_r_target(10, 7, 2, 880 + seed);
        auto [u0, v0] = loft::subspace_init(target, 2, 990 + seed);
        loft::LowRankAdapter a;
        a.w0 = Matrix(10, 7);
        a.u = u0;
        a.v = v0;
        a.u_prev = u0;
        a.v_prev = v0;
        a.rank = 2;
        loft::LoftAdamState s = loft::make_loft_adam_state(10, 7, 2);
        Matrix w = u0 * loft::transpose(v0);
        loft::FullAdamState full = loft::make_full_adam_state(10, 7);
        loft::OptimizerConfig cfg;
        cfg.eta = 0.1;
        cfg.beta1 = 0.9;
        for (int k = 0; k < 50; ++k) {
            const loft::LossGrad lo = loft::mf_loss_grad(loft::effective_weight(a), target,
                                                         loft::LossConvention::half_square);
            loft::loft_gd_momentum_step(a, lo.grad, s, cfg);
            const loft::LossGrad lf =
                loft::mf_loss_grad(w, target, loft::LossConvention::half_square);
            loft::gd_momentum_full_step(w, lf.grad, full, cfg);
            CHECK(loft::frobenius_norm(loft::effective_weight(a) - w) /
                      std::max(1.0, loft::frobenius_norm(w)) <
                  1e-8);
        }
    }
}

namespace {

loft::LowRankAdapter full_rank_adapter(Index d, std::uint64_t seed) {
    loft::LowRankAdapter a = loft::init_adapter(d, d, d, seed, Matrix(d, d));
    loft::Rng rng(seed + 1);
    a.u = loft::gaussian_matrix(d, d, rng, 1.0 / std::sqrt(static_cast<double>(d)));
    a.u_prev = a.u;
    return a;
}

} // namespace

TEST_CASE("loft_adamw_step properties") {
    loft::Rng rng(305);
    SECTION("full-rank square factors recover dense AdamW") {
        for (bool inside : {false, true}) {
            const Index d = 8;
            const loft::MatrixTarget target = loft::gen_rank_r_target(d, d, d, 31);
            loft::LowRankAdapter a = full_rank_adapter(d, 32);
            loft::LoftAdamState s = loft::make_loft_adam_state(d, d, d);
            Matrix w = loft::effective_weight(a);
            loft::FullAdamState full = loft::make_full_adam_state(d, d);
            loft::OptimizerConfig cfg;
            cfg.eta = 0.05;
            cfg.eps_inside_sqrt = inside;
            for (int k = 0; k < 100; ++k) {
                const loft::LossGrad lo = loft::mf_loss_grad(loft::effective_weight(a), target,
                                                             loft::LossConvention::full_square);
                loft::loft_adamw_step(a, lo.grad, s, cfg);
                const loft::LossGrad lf =
                    loft::mf_loss_grad(w, target, loft::LossConvention::full_square);
                loft::adamw_full_step(w, lf.grad, full, cfg);
                CHECK(loft::frobenius_norm(loft::effective_weight(a) - w) /
                          std::max(1.0, loft::frobenius_norm(w)) <
                      1e-5);
            }
        }
    }
    SECTION("first step moves W along the bias-corrected direction inside col(V)") {
        const Index m = 6, n = 5, r = 2;
        loft::LowRankAdapter a = loft::init_adapter(m, n, r, 33, Matrix(m, n));
        loft::LoftAdamState s = loft::make_loft_adam_state(m, n, r);
        loft::OptimizerConfig cfg;
        cfg.eta = 0.1;
        const Matrix g = loft::gaussian_matrix(m, n, rng);
        const Matrix w_before = loft::effective_weight(a);
        const Matrix v0 = a.v;
        loft::loft_adamw_step(a, g, s, cfg);
        const Matrix dw = loft::effective_weight(a) - w_before;
        // dense expectation: Adam direction of the projected gradient, projected
        const Matrix pv = oracle::projector_dense(v0);
        const Matrix gp = g * pv;
        Matrix dir(m, n);
        for (Index i = 0; i < m; ++i)
            for (Index j = 0; j < n; ++j)
                dir(i, j) = gp(i, j) / (std::abs(gp(i, j)) + cfg.eps);
        CHECK(loft::max_abs_diff(dw, -cfg.eta * (dir * pv)) < 1e-12);
    }
    SECTION("exactly one factor changes per step and the update stays in the subspace") {
        const loft::MatrixTarget target = loft::gen_rank_r_target(7, 5, 3, 41);
        loft::LowRankAdapter a = loft::init_adapter(7, 5, 3, 42, Matrix(7, 5));
        loft::LoftAdamState s = loft::make_loft_adam_state(7, 5, 3);
        loft::OptimizerConfig cfg;
        cfg.eta = 0.1;
        for (int k = 0; k < 6; ++k) {
            const Matrix u_before = a.u, v_before = a.v;
            const Matrix w_before = loft::effective_weight(a);
            const bool u_active = s.update_u_next;
            const loft::LossGrad lg = loft::mf_loss_grad(w_before, target,
                                                         loft::LossConvention::half_square);
            loft::loft_adamw_step(a, lg.grad, s, cfg);
            if (u_active) {
                CHECK(a.v.data() == v_before.data());
            } else {
                CHECK(a.u.data() == u_before.data());
            }
            const Matrix dw = loft::effective_weight(a) - w_before;
            const Matrix proj = u_active ? dw * oracle::projector_dense(v_before)
                                         : oracle::projector_dense(u_before) * dw;
            CHECK(loft::max_abs_diff(dw, proj) < 1e-10);
            CHECK(loft::max_abs_diff(a.u_prev, u_before) == 0.0);
            CHECK(loft::max_abs_diff(a.v_prev, v_before) == 0.0);
        }
    }
    SECTION("zero gradients with decay shrink the product exactly") {
        loft::LowRankAdapter a = full_rank_adapter(5, 51);
        loft::LoftAdamState s = loft::make_loft_adam_state(5, 5, 5);
        loft::OptimizerConfig cfg;
        cfg.eta = 0.5;
        cfg.lambda = 0.2;
        const Matrix before = loft::effective_weight(a);
        loft::loft_adamw_step(a, Matrix(5, 5), s, cfg);
        CHECK(oracle::relative_diff(loft::effective_weight(a), 0.9 * before) < 1e-14);
    }
    SECTION("literal flag order: V first makes the first step a no-op under standard init") {
        loft::LowRankAdapter a = loft::init_adapter(5, 4, 2, 61, Matrix(5, 4));
        loft::LoftAdamState s = loft::make_loft_adam_state(5, 4, 2, /*update_u_first=*/false);
        loft::OptimizerConfig cfg;
        cfg.eta = 0.1;
        cfg.update_u_first = false;
        const Matrix v0 = a.v;
        loft::Rng grng(62);
        const Matrix g = loft::gaussian_matrix(5, 4, grng);
        loft::loft_adamw_step(a, g, s, cfg);
        // U = 0 makes the V gradient vanish; with no decay V survives unchanged
        CHECK(loft::max_abs_diff(a.v, v0) == 0.0);
        CHECK(loft::max_abs(a.u) == 0.0);
    }
    SECTION("clipping equals pre-scaling the gradient") {
        const Index m = 6, n = 5, r = 2;
        loft::LowRankAdapter a = loft::init_adapter(m, n, r, 71, Matrix(m, n));
        a.u = loft::gaussian_matrix(m, r, rng);
        a.u_prev = a.u;
        loft::LowRankAdapter b = a;
        loft::LoftAdamState sa = loft::make_loft_adam_state(m, n, r);
        loft::LoftAdamState sb = loft::make_loft_adam_state(m, n, r);
        const Matrix g = 5.0 * loft::gaussian_matrix(m, n, rng);

        loft::OptimizerConfig clip_cfg;
        clip_cfg.eta = 0.1;
        clip_cfg.clip_threshold = 1.0;
        const loft::StepInfo info = loft::loft_adamw_step(a, g, sa, clip_cfg);
        REQUIRE(info.clip_factor < 1.0);

        loft::OptimizerConfig plain_cfg;
        plain_cfg.eta = 0.1;
        loft::loft_adamw_step(b, info.clip_factor * g, sb, plain_cfg);
        CHECK(loft::max_abs_diff(loft::effective_weight(a), loft::effective_weight(b)) < 1e-12);
        CHECK(loft::max_abs_diff(sa.mu, sb.mu) < 1e-12);
    }
}

TEST_CASE("one-step scale invariance of the W update") {
    for (double c : {0.5, 2.0}) {
        const loft::MatrixTarget target = loft::gen_rank_r_target(7, 6, 3, 81);
        loft::LowRankAdapter a = loft::init_adapter(7, 6, 3, 82, Matrix(7, 6));
        loft::LoftAdamState s = loft::make_loft_adam_state(7, 6, 3);
        loft::OptimizerConfig cfg;
        cfg.eta = 0.05;
        for (int k = 0; k < 3; ++k) {
            const loft::LossGrad lg = loft::mf_loss_grad(loft::effective_weight(a), target,
                                                         loft::LossConvention::half_square);
            loft::loft_adamw_step(a, lg.grad, s, cfg);
        }
        loft::LowRankAdapter scaled = a;
        loft::LoftAdamState s_scaled = s;
        scaled.u *= c;
        scaled.v *= 1.0 / c;
        auto advance = [&](loft::LowRankAdapter& ad, loft::LoftAdamState& st) {
            const loft::LossGrad lg = loft::mf_loss_grad(loft::effective_weight(ad), target,
                                                         loft::LossConvention::half_square);
            loft::loft_adamw_step(ad, lg.grad, st, cfg);
            return loft::effective_weight(ad);
        };
        const Matrix w_ref = advance(a, s);
        const Matrix w_got = advance(scaled, s_scaled);
        CHECK(oracle::relative_diff(w_got, w_ref) < 1e-8);
    }
}

TEST_CASE("optimizer config validation") {
    loft::OptimizerConfig cfg;
    cfg.eta = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.beta1 = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.eps = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.lambda = -1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    CHECK_NOTHROW(cfg.validate());
}
