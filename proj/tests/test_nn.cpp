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


// Transformer blocks, timestep features and the optimizer.

#include <doctest.h>

#include <cmath>

#include "tadicodec/nn.hpp"
#include "test_util.hpp"

using namespace tdc;
using namespace tdc::nn;
using ag::Matrix;
using ag::Var;

namespace {

// Frozen by tests/oracles/adam_oracle.py (torch.optim.Adam, float64).
const std::vector<double> kAdamAfter3 = {0.6026872736735166,  0.64723215919049915, 0.6217825377688202,
                                         0.49248831182806496, 0.27641934728629003, 0.0027645053742763326};

BlockConfig block_cfg(AttentionMode mode, NormMode norm = NormMode::rms) {
    return BlockConfig{.hidden_size = 16, .intermediate_size = 32, .n_layers = 2, .n_heads = 4, .n_kv_heads = 2,
                       .attention_mode = mode, .norm_mode = norm};
}

}  // namespace

TEST_CASE("Adam matches torch.optim.Adam without warmup or clipping") {
    ParamStore ps;
    auto p = ps.create("p", test::fill(2, 3, 1));
    const Matrix target = test::fill(2, 3, 2);
    Matrix weight = test::fill(2, 3, 3);
    for (double& w : weight.data) w = w * w + 0.1;
    Adam opt(ps, AdamConfig{.lr = 0.05, .warmup_steps = 0, .clip_norm = 0.0});
    for (int s = 0; s < 3; ++s) {
        ps.zero_grad();
        ag::backward(ag::sum(ag::mul(ag::square(ag::sub(p, ag::constant(target))), ag::constant(weight))));
        opt.step();
    }
    for (size_t i = 0; i < kAdamAfter3.size(); ++i) CHECK(p->value.data[i] == doctest::Approx(kAdamAfter3[i]).epsilon(1e-12));
}

TEST_CASE("learning-rate schedule: linear warmup then optional cosine decay") {
    ParamStore ps;
    Adam warm(ps, AdamConfig{.lr = 1.0, .warmup_steps = 4});
    CHECK(warm.current_lr() == doctest::Approx(0.25));
    Adam decay(ps, AdamConfig{.lr = 1.0, .warmup_steps = 0, .decay_steps = 10, .min_lr_ratio = 0.1});
    CHECK(decay.current_lr() < 1.0);
    CHECK(decay.current_lr() > 0.95);
}

TEST_CASE("gradient clipping bounds the update norm; frozen parameters never move") {
    ParamStore ps;
    auto a = ps.create("enc.a", Matrix(1, 2, 1.0));
    auto b = ps.create("dec.b", Matrix(1, 2, 1.0));
    ps.set_frozen("enc.", true);
    Adam opt(ps, AdamConfig{.lr = 0.1, .warmup_steps = 0, .clip_norm = 1.0});
    ag::backward(ag::scale(ag::sum(ag::add(a, b)), 1000.0));
    const double norm = opt.step();
    CHECK(norm == doctest::Approx(1000.0 * std::sqrt(2.0)));
    CHECK(a->value.data == std::vector<double>{1.0, 1.0});
    CHECK(b->value(0, 0) == doctest::Approx(0.9));
    CHECK(ps.frozen("enc.a"));
    CHECK_FALSE(ps.frozen("dec.b"));
}

TEST_CASE("ParamStore: duplicate names rejected, hashes track values") {
    ParamStore ps;
    auto a = ps.create("x", Matrix(2, 2, 1.0));
    CHECK_THROWS(ps.create("x", Matrix(1, 1)));
    CHECK(ps.scalar_count() == 4);
    const auto h = ps.hash();
    a->value(0, 0) = 2.0;
    CHECK(ps.hash() != h);
    CHECK(ps.hash("y") == ps.hash("z"));
}

TEST_CASE("causal transformer: earlier outputs ignore later inputs") {
    Rng rng(1);
    ParamStore ps;
    Transformer tf(ps, "t", block_cfg(AttentionMode::causal), rng);
    SequenceLayout layout;
    layout.add_segment(6);
    Matrix x = test::random_matrix(6, 16, rng);
    const Matrix y1 = tf.forward(ag::constant(x), layout)->value;
    for (int c = 0; c < 16; ++c) x(5, c) += 3.0;
    const Matrix y2 = tf.forward(ag::constant(x), layout)->value;
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 16; ++c) CHECK(y1(r, c) == y2(r, c));
    CHECK(test::max_abs_diff(y1, y2) > 1e-3);
}

TEST_CASE("packed sequences equal separate forwards") {
    Rng rng(2);
    ParamStore ps;
    Transformer tf(ps, "t", block_cfg(AttentionMode::bidirectional), rng);
    const Matrix a = test::random_matrix(3, 16, rng), b = test::random_matrix(5, 16, rng);
    SequenceLayout la, lb, lab;
    la.add_segment(3);
    lb.add_segment(5);
    lab.add_segment(3);
    lab.add_segment(5);
    const Matrix ya = tf.forward(ag::constant(a), la)->value, yb = tf.forward(ag::constant(b), lb)->value;
    const Matrix yab =
        tf.forward(ag::concat_rows({ag::constant(a), ag::constant(b)}), lab)->value;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 16; ++c) CHECK(yab(r, c) == doctest::Approx(ya(r, c)).epsilon(1e-12));
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 16; ++c) CHECK(yab(3 + r, c) == doctest::Approx(yb(r, c)).epsilon(1e-12));
}

TEST_CASE("adaptive norm starts as plain RMSNorm") {
    Rng rng(3);
    ParamStore ps;
    const auto ada = AdaNorm::create(ps, "ada", 8, 16);
    SequenceLayout layout;
    layout.add_segment(4);
    auto x = ag::constant(test::random_matrix(4, 16, rng));
    auto cond = ag::constant(test::random_matrix(1, 8, rng));
    CHECK(test::max_abs_diff(ada_rmsnorm(x, cond, ada, layout)->value, ag::rms_normalize(x)->value) < 1e-15);
}

TEST_CASE("timestep features: cos/sin halves, range checked") {
    const std::vector<double> t{0.0, 0.5};
    const Matrix f = TimestepEmbedding::features(t, 8);
    for (int i = 0; i < 4; ++i) {
        CHECK(f(0, i) == 1.0);
        CHECK(f(0, 4 + i) == 0.0);
    }
    CHECK(f(1, 0) == doctest::Approx(std::cos(500.0)));
    CHECK(f(1, 4) == doctest::Approx(std::sin(500.0)));
    CHECK_THROWS_AS(TimestepEmbedding::features(std::vector<double>{1.5}, 8), InputError);
}

TEST_CASE("block config validation") {
    BlockConfig c = block_cfg(AttentionMode::causal);
    c.n_heads = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = block_cfg(AttentionMode::causal);
    c.n_kv_heads = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}
