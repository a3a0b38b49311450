// Copyright 2026 The TaDiCodec-desk Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Binary spherical quantization properties, the VQ baseline and the token
// interchange format.

#include <doctest.h>

#include <cmath>
#include <fstream>

#include "tadicodec/quantizer.hpp"
#include "test_util.hpp"

using namespace tdc;
using namespace tdc::quant;

TEST_CASE("sphere projection and corner codes") {
    const std::vector<double> h{3.0, -4.0};
    const auto p = sphere_project(h);
    CHECK(p[0] == doctest::Approx(0.6));
    CHECK(p[1] == doctest::Approx(-0.8));
    const auto z = sphere_project(std::vector<double>(4, 0.0));
    for (double v : z) CHECK(v == doctest::Approx(0.5));
    // Bit i set <=> coordinate i non-negative.
    CHECK(token_index(std::vector<double>{1.0, -1.0, 0.0}) == 0b101);
    const auto c = code_of_index(0b101, 3);
    const double s = 1.0 / std::sqrt(3.0);
    CHECK(c == std::vector<double>{s, -s, s});
}

TEST_CASE("index <-> code bijection for small L") {
    for (int L = 1; L <= 8; ++L) {
        for (long k = 0; k < (1L << L); ++k) {
            const auto c = code_of_index(k, L);
            double n2 = 0;
            for (double v : c) n2 += v * v;
            CHECK(std::abs(n2 - 1.0) < 1e-12);
            CHECK(token_index(c) == k);
        }
    }
}

TEST_CASE("bsq_quantize: unit norm, positive scale invariance, error bound") {
    Rng rng(5);
    const int L = 14;
    const Matrix h = test::random_matrix(200, L, rng);
    const auto q = bsq_quantize(h);
    Matrix h2 = h;
    for (double& v : h2.data) v *= 37.5;
    const auto q2 = bsq_quantize(h2);
    CHECK(q.tokens == q2.tokens);
    const double bound = 2.0 - 2.0 / std::sqrt(static_cast<double>(L));
    for (int r = 0; r < h.rows; ++r) {
        double n2 = 0, err = 0;
        const auto u = sphere_project(h.row(r));
        for (int c = 0; c < L; ++c) {
            n2 += q.quantized(r, c) * q.quantized(r, c);
            err += (u[c] - q.quantized(r, c)) * (u[c] - q.quantized(r, c));
        }
        CHECK(std::abs(n2 - 1.0) < 1e-12);
        CHECK(err <= bound + 1e-12);
        CHECK(code_of_index(q.tokens[r], L) == std::vector<double>(q.quantized.row(r).begin(), q.quantized.row(r).end()));
    }
}

TEST_CASE("differentiable BSQ: forward equals reference, backward is the STE through the normalization") {
    Rng rng(6);
    const Matrix h = test::random_matrix(3, 5, rng);
    auto hv = ag::leaf(h);
    std::vector<int> toks;
    auto q = bsq_quantize(hv, &toks);
    const auto ref = bsq_quantize(h);
    CHECK(toks == ref.tokens);
    CHECK(test::max_abs_diff(q->value, ref.quantized) < 1e-15);
    // Backward = backward of normalize_rows(h) / sqrt(L) with sign treated as identity.
    const Matrix w = test::fill(3, 5, 2);
    ag::backward(ag::sum(ag::mul(q, ag::constant(w))));
    auto hv2 = ag::leaf(h);
    ag::backward(ag::sum(ag::mul(ag::scale(ag::normalize_rows(hv2), 1.0 / std::sqrt(5.0)), ag::constant(w))));
    CHECK(test::max_abs_diff(hv->grad, hv2->grad) < 1e-14);
}

TEST_CASE("vq: nearest codeword, lowest index on ties, straight-through gradient") {
    auto cb = ag::leaf(Matrix(3, 2, std::vector<double>{0, 0, 1, 1, 1, 1}));
    auto h = ag::leaf(Matrix(2, 2, std::vector<double>{0.9, 1.2, 0.1, -0.1}));
    auto out = vq_quantize(h, cb, 0.25);
    CHECK(out.tokens == std::vector<int>{1, 0});
    CHECK(out.quantized->value.data == std::vector<double>{1, 1, 0, 0});
    ag::backward(ag::sum(out.quantized));
    for (double g : h->grad.data) CHECK(g == 1.0);
    CHECK(out.commit_loss->scalar() > 0.0);
    CHECK(out.codebook_loss->scalar() == doctest::Approx(out.commit_loss->scalar() / 0.25));
}

TEST_CASE("Quantizer projections: shapes and validation") {
    Rng rng(7);
    nn::ParamStore ps;
    QuantizerConfig cfg{.latent_dim = 6, .downsample_factor = 4, .model_dim = 8, .cond_dim = 5};
    Quantizer qz(ps, "q", cfg, rng);
    auto x = ag::constant(test::random_matrix(12, 8, rng));
    auto down = qz.project_down(x);
    CHECK(down->value.rows == 3);
    CHECK(down->value.cols == 6);
    auto out = qz.quantize(down);
    CHECK(out.tokens.size() == 3);
    auto up = qz.project_up(out.quantized);
    CHECK(up->value.rows == 12);
    CHECK(up->value.cols == 5);
    CHECK(test::max_abs_diff(qz.codes_for(out.tokens), out.quantized->value) < 1e-15);
    CHECK_THROWS(qz.project_down(ag::constant(Matrix(10, 8))));
    QuantizerConfig bad = cfg;
    bad.latent_dim = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK(distinct_tokens(std::vector<int>{1, 5, 1, 2}) == 3);
}

TEST_CASE("token files round trip and reject malformed or out-of-range ids") {
    const auto dir = test::temp_dir("tokens");
    const std::vector<TokenRecord> recs{{"a", {0, 16383, 5}}, {"b", {}}, {"c", {42}}};
    write_token_file(dir / "t.txt", recs);
    const auto back = read_token_file(dir / "t.txt", 1L << 14);
    REQUIRE(back.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
        CHECK(back[i].utt_id == recs[i].utt_id);
        CHECK(back[i].ids == recs[i].ids);
    }
    CHECK_THROWS(read_token_file(dir / "t.txt", 1000));
    std::ofstream(dir / "bad.txt") << "a 1 2 x\n";
    CHECK_THROWS_AS(read_token_file(dir / "bad.txt"), ParseError);
}
