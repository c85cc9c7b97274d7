// Copyright (c) 2026 the loft authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "loft/loft_state.hpp"
#include "loft/optim_adamw.hpp"
#include "loft/problems.hpp"
#include "oracles.hpp"

using loft::Index;
using loft::Matrix;

TEST_CASE("gen_rank_r_target shapes, rank and determinism") {
    CHECK_THROWS_AS(loft::gen_rank_r_target(8, 5, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(loft::gen_rank_r_target(8, 5, 6, 1), std::invalid_argument);

    const loft::MatrixTarget t1 = loft::gen_rank_r_target(8, 5, 2, 99);
    const loft::MatrixTarget t2 = loft::gen_rank_r_target(8, 5, 2, 99);
    CHECK(t1.a.data() == t2.a.data());

    // exactly true_rank singular values above the cutoff
    const auto sv = loft::singular_values(t1.a);
    const double cutoff = loft::rank_cutoff(8, 5, sv.front());
    Index above = 0;
    for (double s : sv)
        if (s > cutoff) ++above;
    CHECK(above == 2);

    // full-rank target when r equals min(m,n)
    const loft::MatrixTarget full = loft::gen_rank_r_target(6, 4, 4, 100);
    CHECK(loft::numerical_rank(full.a) == 4);
}

TEST_CASE("stored SVD factors reconstruct the target") {
    const loft::MatrixTarget t = loft::gen_rank_r_target(9, 6, 3, 17);
    REQUIRE(t.u_svd.cols() == 3);
    REQUIRE(t.v_svd.cols() == 3);
    REQUIRE(t.sigma.size() == 3);
    Matrix recon(9, 6);
    for (Index k = 0; k < 3; ++k)
        for (Index i = 0; i < 9; ++i)
            for (Index j = 0; j < 6; ++j)
                recon(i, j) += t.sigma[static_cast<std::size_t>(k)] * t.u_svd(i, k) * t.v_svd(j, k);
    CHECK(loft::max_abs_diff(recon, t.a) < 1e-10);
    CHECK(t.sigma[0] >= t.sigma[1]);
    CHECK(t.sigma[1] >= t.sigma[2]);
    CHECK(t.sigma[2] > 0.0);
    // orthonormal factor columns
    CHECK(loft::max_abs_diff(loft::transpose(t.u_svd) * t.u_svd, Matrix::identity(3)) < 1e-12);
    CHECK(loft::max_abs_diff(loft::transpose(t.v_svd) * t.v_svd, Matrix::identity(3)) < 1e-12);
}

TEST_CASE("mf_loss_grad values and conventions") {
    const loft::MatrixTarget t = loft::gen_rank_r_target(4, 4, 2, 5);
    SECTION("loss vanishes at the target") {
        const loft::LossGrad lg = loft::mf_loss_grad(t.a, t, loft::LossConvention::half_square);
        CHECK(lg.loss == 0.0);
        CHECK(loft::max_abs(lg.grad) == 0.0);
    }
    SECTION("half-square at W = 0 against the identity") {
        loft::MatrixTarget ident;
        ident.a = Matrix::identity(2);
        ident.true_rank = 2;
        const loft::LossGrad lg =
            loft::mf_loss_grad(Matrix(2, 2), ident, loft::LossConvention::half_square);
        CHECK(lg.loss == 1.0); // 0.5 * ||I||^2
        CHECK(loft::max_abs_diff(lg.grad, -1.0 * Matrix::identity(2)) == 0.0);
    }
    SECTION("gradients match finite differences in both conventions") {
        loft::Rng rng(600);
        for (loft::LossConvention conv :
             {loft::LossConvention::full_square, loft::LossConvention::half_square}) {
            for (int i = 0; i < 10; ++i) {
                const Matrix w = loft::gaussian_matrix(4, 4, rng);
                const loft::LossGrad lg = loft::mf_loss_grad(w, t, conv);
                const Matrix fd = oracle::finite_diff_grad(
                    [&](const Matrix& x) { return loft::mf_loss_grad(x, t, conv).loss; }, w);
                CHECK(oracle::relative_diff(lg.grad, fd) < 1e-6);
            }
        }
    }
    SECTION("shape mismatch rejected") {
        CHECK_THROWS_AS(loft::mf_loss_grad(Matrix(3, 4), t, loft::LossConvention::half_square),
                        std::invalid_argument);
    }
}

TEST_CASE("subspace_init spans the top singular subspace") {
    const loft::MatrixTarget t = loft::gen_rank_r_target(10, 8, 5, 33);
    SECTION("rank bound enforced") {
        CHECK_THROWS_AS(loft::subspace_init(t, 6, 1), std::invalid_argument);
        CHECK_THROWS_AS(loft::subspace_init(t, 0, 1), std::invalid_argument);
    }
    SECTION("columns live inside the top subspaces") {
        const auto [u0, v0] = loft::subspace_init(t, 3, 2);
        Matrix u_r(10, 3), v_r(8, 3);
        for (Index i = 0; i < 10; ++i)
            for (Index j = 0; j < 3; ++j) u_r(i, j) = t.u_svd(i, j);
        for (Index i = 0; i < 8; ++i)
            for (Index j = 0; j < 3; ++j) v_r(i, j) = t.v_svd(i, j);
        CHECK(loft::max_abs_diff(oracle::projector_dense(u_r) * u0, u0) < 1e-10);
        CHECK(loft::max_abs_diff(oracle::projector_dense(v_r) * v0, v0) < 1e-10);
        CHECK(loft::numerical_rank(u0) == 3);
    }
    SECTION("the Eckart-Young construction hits the best rank-r value") {
        // U0 = U_r Sigma_r, V0 = V_r reproduces the truncated SVD product.
        const Index r = 3;
        Matrix u0(10, r), v0(8, r);
        for (Index i = 0; i < 10; ++i)
            for (Index j = 0; j < r; ++j)
                u0(i, j) = t.u_svd(i, j) * t.sigma[static_cast<std::size_t>(j)];
        for (Index i = 0; i < 8; ++i)
            for (Index j = 0; j < r; ++j) v0(i, j) = t.v_svd(i, j);
        const double loss = loft::mf_loss_grad(u0 * loft::transpose(v0), t,
                                               loft::LossConvention::half_square)
                                .loss;
        CHECK(std::abs(loss - loft::eckart_young_optimum(t, r,
                                                         loft::LossConvention::half_square)) <
              1e-10);
    }
}

TEST_CASE("one unit-step alternation pair reaches the rank-r optimum from subspace init") {
    for (int inst = 0; inst < 10; ++inst) {
        const loft::MatrixTarget t = loft::gen_rank_r_target(10, 8, 5, 700 + inst);
        const Index r = 3;
        auto [u0, v0] = loft::subspace_init(t, r, 800 + inst);
        loft::LowRankAdapter a;
        a.w0 = Matrix(10, 8);
        a.u = u0;
        a.v = v0;
        a.u_prev = u0;
        a.v_prev = v0;
        a.rank = r;
        loft::LoftAdamState s = loft::make_loft_adam_state(10, 8, r);
        loft::OptimizerConfig cfg;
        cfg.eta = 1.0;
        for (int k = 0; k < 2; ++k) {
            const loft::LossGrad lg = loft::mf_loss_grad(loft::effective_weight(a), t,
                                                         loft::LossConvention::half_square);
            loft::loft_gd_step(a, lg.grad, s, cfg);
        }
        const double loss = loft::mf_loss_grad(loft::effective_weight(a), t,
                                               loft::LossConvention::half_square)
                                .loss;
        CHECK(std::abs(loss - loft::eckart_young_optimum(t, r,
                                                         loft::LossConvention::half_square)) <
              1e-10);
    }
}
