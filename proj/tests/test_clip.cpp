// Copyright (c) 2026 the loft authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <array>

#include "loft/adapter.hpp"
#include "loft/clip.hpp"
#include "oracles.hpp"

using loft::Index;
using loft::Matrix;

namespace {

struct Layer {
    loft::LowRankAdapter adapter;
    loft::ScaledGrads grads;
};

Layer make_layer(Index m, Index n, Index r, std::uint64_t seed) {
    loft::Rng rng(seed);
    Layer layer;
    layer.adapter = loft::init_adapter(m, n, r, seed, Matrix(m, n));
    layer.adapter.u = loft::gaussian_matrix(m, r, rng);
    layer.adapter.u_prev = layer.adapter.u;
    const Matrix gw = loft::gaussian_matrix(m, n, rng);
    const loft::FactorGrads raw = loft::factor_grads(gw, layer.adapter);
    layer.grads = loft::scaled_grads(raw.gu, raw.gv, layer.adapter);
    return layer;
}

} // namespace

TEST_CASE("effective_global_norm single-layer cases") {
    SECTION("identity inactive factor reduces to the raw Frobenius norm") {
        loft::Rng rng(500);
        loft::LowRankAdapter a = loft::init_adapter(4, 3, 3, 1, Matrix(4, 3));
        a.v = Matrix::identity(3);
        const Matrix gw = loft::gaussian_matrix(4, 3, rng);
        const loft::FactorGrads raw = loft::factor_grads(gw, a);
        const loft::ScaledGrads sg = loft::scaled_grads(raw.gu, raw.gv, a);
        const loft::LayerGradView view{&sg.gu, &a.v};
        CHECK(std::abs(loft::effective_global_norm(std::span(&view, 1)) -
                       loft::frobenius_norm(gw)) < 1e-12);
    }
    SECTION("zero gradients give zero norm") {
        const Matrix g(5, 2);
        const Matrix v(4, 2);
        const loft::LayerGradView view{&g, &v};
        CHECK(loft::effective_global_norm(std::span(&view, 1)) == 0.0);
    }
    SECTION("matches the dense projected norm") {
        loft::Rng rng(501);
        for (int t = 0; t < 10; ++t) {
            loft::LowRankAdapter a = loft::init_adapter(7, 6, 3, 100 + t, Matrix(7, 6));
            const Matrix gw = loft::gaussian_matrix(7, 6, rng);
            const loft::FactorGrads raw = loft::factor_grads(gw, a);
            const loft::ScaledGrads sg = loft::scaled_grads(raw.gu, raw.gv, a);
            const loft::LayerGradView view{&sg.gu, &a.v};
            const double want = loft::frobenius_norm(gw * oracle::projector_dense(a.v));
            CHECK(std::abs(loft::effective_global_norm(std::span(&view, 1)) - want) < 1e-10);
        }
    }
}

TEST_CASE("effective_global_norm aggregates layers") {
    const Layer l1 = make_layer(6, 5, 2, 7);
    const Layer l2 = make_layer(4, 7, 3, 8);
    const std::array<loft::LayerGradView, 2> views{
        loft::LayerGradView{&l1.grads.gu, &l1.adapter.v},
        loft::LayerGradView{&l2.grads.gu, &l2.adapter.v}};
    const double n1 = loft::frobenius_norm(l1.grads.gu * loft::transpose(l1.adapter.v));
    const double n2 = loft::frobenius_norm(l2.grads.gu * loft::transpose(l2.adapter.v));
    CHECK(std::abs(loft::effective_global_norm(views) - std::sqrt(n1 * n1 + n2 * n2)) < 1e-12);
}

TEST_CASE("clip_scale") {
    CHECK(loft::clip_scale(0.5, 1.0) == 1.0);
    CHECK(loft::clip_scale(2.0, 1.0) == 0.5);
    CHECK(loft::clip_scale(0.0, 1.0) == 1.0);
    CHECK_THROWS_AS(loft::clip_scale(1.0, 0.0), std::invalid_argument);

    SECTION("rescaled gradients hit the threshold exactly") {
        Layer layer = make_layer(6, 5, 2, 9);
        loft::LayerGradView view{&layer.grads.gu, &layer.adapter.v};
        const double norm = loft::effective_global_norm(std::span(&view, 1));
        const double threshold = norm / 3.0;
        layer.grads.gu *= loft::clip_scale(norm, threshold);
        const double post = loft::effective_global_norm(std::span(&view, 1));
        CHECK(std::abs(post - threshold) <= 1e-12 * threshold);
    }
}

TEST_CASE("full-rank effective norm equals what dense clipping would see") {
    loft::Rng rng(502);
    for (int t = 0; t < 10; ++t) {
        const Index n = 5;
        loft::LowRankAdapter a = loft::init_adapter(7, n, n, 200 + t, Matrix(7, n));
        const Matrix gw = loft::gaussian_matrix(7, n, rng);
        const loft::FactorGrads raw = loft::factor_grads(gw, a);
        const loft::ScaledGrads sg = loft::scaled_grads(raw.gu, raw.gv, a);
        const loft::LayerGradView view{&sg.gu, &a.v};
        CHECK(std::abs(loft::effective_global_norm(std::span(&view, 1)) -
                       loft::frobenius_norm(gw)) < 1e-10);
    }
}
