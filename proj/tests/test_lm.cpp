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


// Language models: vocabulary layout, AR loss scoring and generation, the
// MGM schedule, masking and iterative decoding, persistence.

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "tadicodec/lm.hpp"
#include "test_util.hpp"

using namespace tdc;
using namespace tdc::lm;

namespace {

LmConfig small_lm(int bits = 6) {
    LmConfig c;
    c.blocks.hidden_size = 32;
    c.blocks.intermediate_size = 64;
    c.blocks.n_heads = 2;
    c.blocks.n_kv_heads = 2;
    c.vocab.latent_bits = bits;
    c.max_context = 64;
    c.warmup_steps = 5;
    c.lr = 3e-3;
    c.batch = 4;
    return c;
}

std::vector<LmExample> toy_data() {
    return {{{3, 4}, {1, 2, 3, 4}}, {{5}, {7, 7}}, {{6, 7, 8}, {10, 20, 30, 40, 50, 60}}, {{9, 3}, {63, 0, 5}}};
}

}  // namespace

TEST_CASE("joint vocabulary layout") {
    const LmVocab v{.text_vocab = 64, .latent_bits = 14};
    CHECK(v.speech_offset() == 64);
    CHECK(v.bos() == 64 + 16384);
    CHECK(v.eos() == v.bos() + 1);
    CHECK(v.mask() == v.bos() + 2);
    CHECK(v.size() == v.bos() + 4);
    CHECK(v.speech_id(5) == 69);
    CHECK(v.token_of(69) == 5);
    CHECK_THROWS_AS(v.speech_id(16384), InputError);
    CHECK_THROWS_AS(v.token_of(3), InputError);
    CHECK(v.is_text(63));
    CHECK_FALSE(v.is_text(64));
}

TEST_CASE("AR sequence layout and loss scoring") {
    const auto cfg = small_lm();
    ArModel m(cfg);
    const LmExample ex{{3, 4}, {1, 2}};
    const auto seq = m.sequence(ex);
    CHECK(seq == std::vector<int>{cfg.vocab.bos(), 3, 4, 65, 66, cfg.vocab.eos()});
    // Zero-initialized head: uniform over 2^L + 1 classes on every scored row.
    const auto data = std::vector<LmExample>{ex};
    CHECK(ar_loss(m, data)->scalar() == doctest::Approx(std::log(65.0)).epsilon(1e-12));
    LmExample too_long{std::vector<int>(40, 3), std::vector<int>(40, 1)};
    CHECK_THROWS_AS(ar_loss(m, std::vector<LmExample>{too_long}), InputError);
}

TEST_CASE("AR training memorizes a toy set; greedy generation is deterministic") {
    auto cfg = small_lm();
    ArModel m(cfg);
    const auto data = toy_data();
    LmTrainer tr(m.params(), cfg, [&](std::span<const LmExample> b, Rng&) { return ar_loss(m, b); });
    double first = 0, last = 0;
    tr.run(data, 150, [&](long s, double l) {
        if (s == 1) first = l;
        last = l;
    });
    CHECK(last < 0.2 * first);
    Rng r1(1), r2(2);
    for (const auto& ex : data) {
        const auto g1 = ar_generate(m, ex.text, {0.0, 0}, r1, 16);
        const auto g2 = ar_generate(m, ex.text, {0.0, 0}, r2, 16);
        CHECK(g1 == g2);
        CHECK(g1 == ex.tokens);
    }
    // Sampling respects max_tokens.
    Rng r3(3);
    CHECK(ar_generate(m, {3, 4}, {1.0, 5}, r3, 2).size() <= 2);
}

TEST_CASE("gamma schedule and remask counts") {
    const MaskSchedule s{.horizon = 2.0, .steps = 10};
    CHECK(gamma(2.0, s) == doctest::Approx(1.0));
    CHECK(gamma(1.0, s) == doctest::Approx(std::sin(std::numbers::pi / 4)));
    CHECK_THROWS_AS(gamma(0.0, s), InputError);
    CHECK_THROWS_AS(gamma(2.5, s), InputError);
    for (int n : {1, 7, 50}) {
        for (int j = 0; j < s.steps; ++j) {
            const int want = static_cast<int>(std::floor(n * gamma(s.horizon - j * s.horizon / s.steps, s)));
            CHECK(remask_count(n, j, s) == want);
        }
        CHECK(remask_count(n, 0, s) == n);
        CHECK(remask_count(n, s.steps, s) == 0);
    }
}

TEST_CASE("Bernoulli masking fraction tracks gamma(t)") {
    Rng rng(4);
    const LmVocab v{.text_vocab = 64, .latent_bits = 6};
    const std::vector<int> toks(100, 5);
    for (double t : {0.2, 0.5, 0.9}) {
        long masked = 0;
        for (int i = 0; i < 300; ++i) {
            const auto st = mgm_mask(toks, t, rng, v);
            masked += st.masked_count();
            for (size_t k = 0; k < toks.size(); ++k)
                CHECK(st.ids[k] == (st.masked[k] ? v.mask() : v.speech_id(5)));
        }
        CHECK(masked / 30000.0 == doctest::Approx(lm::gamma(t)).epsilon(0.03));
    }
    // p = 1 masks everything.
    const auto all = mgm_mask(toks, 1.0, rng, v);
    CHECK(all.masked_count() == 100);
}

TEST_CASE("MGM loss: empty masks give 0 and are counted") {
    auto cfg = small_lm();
    MgmModel m(cfg);
    const auto data = toy_data();
    std::vector<MgmState> states;
    for (const auto& ex : data) {
        MgmState st;
        for (int t : ex.tokens) st.ids.push_back(cfg.vocab.speech_id(t));
        st.masked.assign(ex.tokens.size(), 0);
        states.push_back(st);
    }
    const long before = empty_mgm_mask_events().load();
    CHECK(mgm_loss_from_states(m, data, states)->scalar() == 0.0);
    CHECK(empty_mgm_mask_events().load() == before + 1);
    Rng rng(5);
    CHECK(mgm_loss(m, data, rng, 1.0)->scalar() == doctest::Approx(std::log(64.0)).epsilon(1e-12));
}

TEST_CASE("MGM decode follows the schedule and unmasks everything") {
    auto cfg = small_lm();
    MgmModel m(cfg);
    const auto data = toy_data();
    LmTrainer tr(m.params(), cfg, [&](std::span<const LmExample> b, Rng& r) { return mgm_loss(m, b, r); });
    tr.run(data, 60);
    for (int S : {1, 5, 10, 25}) {
        const MaskSchedule sched{.horizon = 1.0, .steps = S};
        for (int n : {3, 8}) {
            Rng rng(6);
            std::vector<MgmTraceLine> trace;
            std::vector<MgmState> states;
            const auto out = mgm_decode(m, {3, 4}, n, sched, rng, {}, &trace, &states);
            REQUIRE(trace.size() == static_cast<size_t>(S));
            for (int j = 1; j <= S; ++j) CHECK(trace[j - 1].masked == remask_count(n, j, sched));
            CHECK(states.back().masked_count() == 0);
            for (int id : states.back().ids) CHECK(id != cfg.vocab.mask());
            CHECK(out.size() == static_cast<size_t>(n));
            for (int t : out) CHECK((t >= 0 && t < 64));
        }
    }
    std::ostringstream os;
    write_trace(os, {{1, 3, 0.5}});
    CHECK(os.str().find("step=1 masked=3") != std::string::npos);
}

TEST_CASE("length heuristic") {
    const auto h = LengthHeuristic::fit(toy_data());
    CHECK(h.ratio == doctest::Approx(15.0 / 8.0));
    CHECK(h.predict(4) == 8);
    CHECK(h.predict(0) >= 1);
}

TEST_CASE("LM checkpoints round trip") {
    const auto dir = test::temp_dir("lm");
    auto cfg = small_lm();
    ArModel ar(cfg);
    ar.params().items().back().second->value.data[3] = 0.5;
    save_lm(dir / "ar.ckpt", "ar", cfg, ar.params(), 1.5);
    const auto back = load_lm(dir / "ar.ckpt");
    CHECK(back.kind == "ar");
    REQUIRE(back.ar);
    CHECK(back.ar->params().hash() == ar.params().hash());
    CHECK(back.length_ratio == 1.5);
    CHECK(back.config.vocab == cfg.vocab);
    MgmModel mgm(cfg);
    save_lm(dir / "mgm.ckpt", "mgm", cfg, mgm.params());
    CHECK(load_lm(dir / "mgm.ckpt").mgm != nullptr);
    CHECK_THROWS_AS(load_lm(dir / "none.ckpt"), CheckpointError);
}
