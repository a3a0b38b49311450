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


// Log-mel features against an independent torch/numpy oracle
// (tests/oracles/mel_oracle.py), corpus determinism, array and manifest I/O
// and the template-matching oracle.

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include "tadicodec/corpus.hpp"
#include "test_util.hpp"

using namespace tdc;
using namespace tdc::corpus;

namespace {

std::vector<double> oracle_waveform() {
    std::vector<double> x(2400);
    for (size_t i = 0; i < x.size(); ++i) {
        const double t = static_cast<double>(i) / 24000.0;
        x[i] = 0.3 * std::sin(2 * std::numbers::pi * 440.0 * t) + 0.1 * std::sin(2 * std::numbers::pi * 3000.0 * t + 0.5);
    }
    return x;
}

CorpusSpec small_spec(uint64_t seed = 0) {
    CorpusSpec s;
    s.n_utterances = 6;
    s.seed = seed;
    return s;
}

}  // namespace

TEST_CASE("log-mel matches the torch.stft oracle") {
    const MelConfig cfg;
    const auto mel = mel_spectrogram(oracle_waveform(), cfg);
    REQUIRE(mel.frames() == 10);  // ceil(2400 / 240)
    REQUIRE(mel.bins() == 80);
    // Values are float32-rounded on both sides; allow one float ulp near 1.
    const double tol = 2e-7;
    CHECK(mel.data(0, 5) == doctest::Approx(0.3997146487236023).epsilon(tol));
    CHECK(mel.data(5, 10) == doctest::Approx(-0.36365532875061035).epsilon(tol));
    CHECK(mel.data(5, 12) == doctest::Approx(0.852147102355957).epsilon(tol));
    CHECK(mel.data(5, 13) == doctest::Approx(0.8910350203514099).epsilon(tol));
    CHECK(mel.data(5, 46) == doctest::Approx(0.48972755670547485).epsilon(tol));
    CHECK(mel.data(2, 45) == doctest::Approx(0.48061689734458923).epsilon(tol));
    CHECK(mel.data(9, 14) == doctest::Approx(0.6328718066215515).epsilon(tol));
    double sum = 0.0;
    for (double v : mel.data.data) sum += v;
    CHECK(sum == doctest::Approx(-525.8783995828126).epsilon(1e-6));
}

TEST_CASE("mel filterbank centers and Slaney areas match the oracle") {
    const MelConfig cfg;
    const auto c = mel_center_frequencies(cfg);
    CHECK(c[0] == doctest::Approx(25.500333350804905).epsilon(1e-12));
    CHECK(c[10] == doctest::Approx(337.6081621878745).epsilon(1e-12));
    CHECK(c[40] == doctest::Approx(2335.4331212456696).epsilon(1e-12));
    CHECK(c[79] == doctest::Approx(11553.612564091509).epsilon(1e-12));
    const Matrix fb = mel_filterbank(cfg);
    double s5 = 0, s40 = 0;
    for (int k = 0; k < fb.cols; ++k) s5 += fb(5, k), s40 += fb(40, k);
    CHECK(s5 == doctest::Approx(0.04408065077380995).epsilon(1e-12));
    CHECK(s40 == doctest::Approx(0.04252275092795252).epsilon(1e-12));
}

TEST_CASE("silence maps to the floor value; bad input is rejected") {
    const MelConfig cfg;
    const auto mel = mel_spectrogram(std::vector<double>(960, 0.0), cfg);
    for (double v : mel.data.data) CHECK(v == cfg.floor_value());
    CHECK_THROWS_AS(mel_spectrogram(std::vector<double>{}, cfg), InputError);
    CHECK_THROWS_AS(mel_spectrogram(std::vector<double>{0.0, NAN}, cfg), InputError);
    CHECK_THROWS_AS(mel_spectrogram(std::vector<double>{0.0, INFINITY}, cfg), InputError);
    MelConfig bad = cfg;
    bad.fmax = 20000;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("pad_frames repeats the last frame up to a multiple") {
    Matrix m(5, 2);
    for (int r = 0; r < 5; ++r) m(r, 0) = r, m(r, 1) = -r;
    const Matrix p = pad_frames(m, 4);
    REQUIRE(p.rows == 8);
    for (int r = 5; r < 8; ++r) CHECK((p(r, 0) == 4.0 && p(r, 1) == -4.0));
    CHECK(pad_frames(p, 4).rows == 8);
}

TEST_CASE("griffin-lim reduces spectral convergence error") {
    CorpusSpec spec = small_spec();
    const auto u = make_utterance(spec, "u", {5, 30}, 0.0);
    std::vector<double> conv;
    const auto wav = griffin_lim(u.mel, 16, 1, &conv);
    CHECK(wav.size() == static_cast<size_t>(u.mel.frames()) * spec.mel.hop);
    REQUIRE(conv.size() == 16);
    CHECK(conv.back() < conv.front());
}

TEST_CASE("corpus generation is seed-deterministic and well-formed") {
    const auto a = generate_corpus(small_spec(7));
    const auto b = generate_corpus(small_spec(7));
    const auto c = generate_corpus(small_spec(8));
    REQUIRE(a.size() == 6);
    bool any_diff = false;
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].mel.data.data == b[i].mel.data.data);
        CHECK(a[i].text.ids == b[i].text.ids);
        any_diff = any_diff || a[i].text.ids != c[i].text.ids;
        const int n = static_cast<int>(a[i].text.ids.size());
        CHECK(n >= 2);
        CHECK(n <= 4);
        CHECK(a[i].mel.frames() == n * 32);
        CHECK(a[i].duration_frames == a[i].mel.frames());
        CHECK(std::abs(a[i].speaker_offset) <= 1.0);
        for (int id : a[i].text.ids) CHECK((id >= kFirstSymbolId && id < 64));
    }
    CHECK(any_diff);
}

TEST_CASE("template bank: every symbol has a distinct shape/pitch template") {
    const CorpusSpec spec;
    std::set<std::tuple<double, double, bool>> seen;
    for (int s = kFirstSymbolId; s < spec.vocab_size; ++s) {
        const auto t = symbol_template(spec, s);
        CHECK(t.base_hz >= spec.f_low - 1e-9);
        CHECK(t.base_hz <= spec.f_high + 1e-9);
        seen.insert({t.base_hz, t.chirp, t.decaying});
    }
    CHECK(seen.size() == static_cast<size_t>(spec.symbol_count()));
    CHECK_THROWS(symbol_template(spec, 0));
}

TEST_CASE("template matcher is an exact oracle on clean data") {
    CorpusSpec spec;
    spec.n_utterances = 24;
    spec.seed = 3;
    const auto data = generate_corpus(spec);
    const TemplateMatcher tm(spec);
    double acc = 0, off = 0;
    for (const auto& u : data) {
        const auto d = tm.decode(u.mel.data);
        acc += TemplateMatcher::accuracy(d.symbols, u.text.ids);
        off += std::abs(d.speaker_offset - u.speaker_offset);
    }
    CHECK(acc / data.size() == 1.0);
    CHECK(off / data.size() < 0.1);
    CHECK(TemplateMatcher::accuracy({3, 4}, {3, 4, 5}) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("grammar corpus: 64 distinct three-slot sentences") {
    std::set<std::vector<int>> seen;
    for (int i = 0; i < 64; ++i) {
        const auto s = grammar_symbols(i);
        REQUIRE(s.size() == 3);
        seen.insert(s);
    }
    CHECK(seen.size() == 64);
    CHECK(grammar_symbols(0) == std::vector<int>{3, 23, 43});
    CorpusSpec spec;
    spec.fixed_offset = 0.25;
    const auto g = generate_grammar_corpus(spec, 8);
    REQUIRE(g.size() == 8);
    CHECK(g[5].text.ids == grammar_symbols(5));
    CHECK(g[5].speaker_offset == 0.25);
}

TEST_CASE("array files round-trip bit-exactly and reject corruption") {
    const auto dir = test::temp_dir("arrays");
    const auto u = make_utterance(CorpusSpec{}, "x", {7, 9}, 0.5);
    write_array(dir / "a.f32", u.mel.data);
    const Matrix back = read_array(dir / "a.f32");
    CHECK(back.rows == u.mel.frames());
    CHECK(back.data == u.mel.data.data);
    CHECK(std::filesystem::file_size(dir / "a.f32") == 16 + 4 * u.mel.data.size());
    {
        std::ofstream os(dir / "bad.f32", std::ios::binary);
        os << "not an array file at all";
    }
    CHECK_THROWS_AS(read_array(dir / "bad.f32"), ParseError);
    std::filesystem::resize_file(dir / "a.f32", 40);
    CHECK_THROWS_AS(read_array(dir / "a.f32"), ParseError);
}

TEST_CASE("manifest round trip and missing assets") {
    const auto dir = test::temp_dir("manifest");
    const auto data = generate_corpus(small_spec(2));
    save_manifest(data, dir);
    const auto back = load_manifest(dir);
    REQUIRE(back.size() == data.size());
    for (size_t i = 0; i < data.size(); ++i) {
        CHECK(back[i].utt_id == data[i].utt_id);
        CHECK(back[i].text.ids == data[i].text.ids);
        CHECK(back[i].mel.data.data == data[i].mel.data.data);
        CHECK(back[i].speaker_offset == data[i].speaker_offset);
    }
    std::filesystem::remove(dir / "arrays" / (data[0].utt_id + ".mel.f32"));
    CHECK_THROWS_AS(load_manifest(dir), MissingAssetError);
}
