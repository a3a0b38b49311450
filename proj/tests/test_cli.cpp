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


// End-to-end smoke tests: every subcommand on the tiny preset, in pipeline
// order, each within the 60 s budget. Output is captured by redirecting the
// process's stdout/stderr file descriptors.

#include <doctest.h>

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <fcntl.h>
#include <fstream>
#include <sstream>

#include "tadicodec/cli.hpp"
#include "tadicodec/corpus.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
    int code = 0;
    std::string out, err;
    double seconds = 0;
};

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

Result run(std::vector<std::string> args) {
    static const fs::path cap = tdc::test::temp_dir("cli_capture");
    args.insert(args.begin(), "tadicodec");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    std::fflush(stdout);
    std::fflush(stderr);
    const int saved_out = dup(1), saved_err = dup(2);
    const int fo = open((cap / "out").c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    const int fe = open((cap / "err").c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    dup2(fo, 1);
    dup2(fe, 2);
    Result r;
    const auto t0 = std::chrono::steady_clock::now();
    r.code = tdc::cli(static_cast<int>(args.size()), argv.data());
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::fflush(stdout);
    std::fflush(stderr);
    dup2(saved_out, 1);
    dup2(saved_err, 2);
    close(fo);
    close(fe);
    close(saved_out);
    close(saved_err);
    r.out = slurp(cap / "out");
    r.err = slurp(cap / "err");
    return r;
}

const fs::path& work() {
    static const fs::path dir = tdc::test::temp_dir("cli_work");
    return dir;
}

// Shared flags for the pipeline on the tiny preset.
Result tiny(const std::string& cmd, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"--preset",     "tiny", "--seed", "1", "--corpus-dir", (work() / "corpus").string(),
                                  "--out-dir", (work() / "out").string(), cmd};
    args.insert(args.end(), extra.begin(), extra.end());
    auto r = run(args);
    INFO(cmd, " stderr: ", r.err);
    CHECK(r.seconds < 60.0);
    return r;
}

}  // namespace

TEST_CASE("rate prints the exact bitrate") {
    auto r = run({"rate", "--frame-rate", "6.25", "--bits", "14"});
    CHECK(r.code == 0);
    CHECK(r.out.find("0.0875 kbps") != std::string::npos);
    r = run({"rate", "--frame-rate", "12.5", "--bits", "14"});
    CHECK(r.out.find("0.175 kbps") != std::string::npos);
    r = run({"rate", "--frame-rate", "75", "--tokens-per-frame", "2", "--bits", "10"});
    CHECK(r.out.find("1.5 kbps") != std::string::npos);
    r = run({"rate"});
    CHECK(r.out.find("frame rate: 6.25 Hz") != std::string::npos);
}

TEST_CASE("usage errors exit 1 with usage text") {
    auto r = run({"rate", "--frobnicate"});
    CHECK(r.code == 1);
    CHECK(r.err.find("Usage") != std::string::npos);
    CHECK(run({}).code == 1);
    CHECK(run({"no-such-command"}).code == 1);
    CHECK(run({"rate", "--frame-rate", "fast"}).code == 1);
    CHECK(run({"--preset", "huge", "rate"}).code == 1);
    CHECK(run({"eval", "--sampler", "steps7"}).code == 1);
    CHECK(run({"train"}).code == 1);  // no --corpus-dir
    CHECK(run({"--set", "trainer.colour=red", "rate"}).code == 1);
}

TEST_CASE("runtime failures exit 2 with a message") {
    auto r = run({"--out-dir", (work() / "empty").string(), "tts"});
    CHECK(r.code == 2);
    CHECK(r.err.find("checkpoint not found") != std::string::npos);
    CHECK(run({"--corpus-dir", (work() / "missing").string(), "eval"}).code == 2);
}

TEST_CASE("pipeline: every subcommand on the tiny preset") {
    auto r = tiny("gen-data", {"--n", "4", "--max-symbols", "3"});
    REQUIRE(r.code == 0);
    CHECK(tdc::corpus::load_manifest(work() / "corpus").size() == 4);

    r = tiny("train", {"--steps", "6", "--log-every", "3"});
    REQUIRE(r.code == 0);
    CHECK(fs::exists(work() / "out" / "codec.ckpt"));
    CHECK(fs::exists(work() / "out" / "train_loss.csv"));
    CHECK(r.err.find("step 6 loss") != std::string::npos);

    r = tiny("train", {"--steps", "2", "--resume", (work() / "out" / "codec.ckpt").string()});
    CHECK(r.code == 0);

    r = tiny("continue-train-decoder", {"--steps", "3"});
    CHECK(r.code == 0);
    CHECK(fs::exists(work() / "out" / "codec_dct.ckpt"));

    r = tiny("tokenize");
    REQUIRE(r.code == 0);
    const auto toks = slurp(work() / "out" / "tokens.txt");
    CHECK(!toks.empty());

    r = tiny("detokenize", {"--sampler", "steps5", "--prompt-fraction", "0.25"});
    REQUIRE(r.code == 0);
    // Round trip shape contract: frames = tokens · F for every utterance.
    for (const auto& u : tdc::corpus::load_manifest(work() / "corpus")) {
        const auto mel = tdc::corpus::read_array(work() / "out" / "mels" / (u.utt_id + ".mel.f32"));
        CHECK(mel.rows == (u.mel.frames() + 15) / 16 * 16);
        CHECK(mel.cols == 80);
    }

    r = tiny("train-ar", {"--steps", "10", "--hidden", "32", "--heads", "2"});
    REQUIRE(r.code == 0);
    r = tiny("train-mgm", {"--steps", "10", "--hidden", "32", "--heads", "2"});
    REQUIRE(r.code == 0);

    r = tiny("tts", {"--sampler", "steps5", "--temperature", "0"});
    CHECK(r.code == 0);
    CHECK(r.out.find("tts accuracy") != std::string::npos);
    r = tiny("tts", {"--lm", (work() / "out" / "mgm.ckpt").string(), "--sampler", "steps5", "--mgm-steps", "4",
                     "--text", "3,7,9", "--n-tokens", "5"});
    CHECK(r.code == 0);
    CHECK(r.out.find("tokens=5 frames=80") != std::string::npos);
    CHECK(slurp(work() / "out" / "mgm_trace.txt").find("step=4 masked=0") != std::string::npos);

    r = tiny("eval", {"--sampler", "steps5"});
    CHECK(r.code == 0);
    CHECK(r.out.find("normalized_mse") != std::string::npos);
    CHECK(fs::exists(work() / "out" / "eval.csv"));

    r = tiny("ablate", {"--axis", "inference_steps", "--values", "steps5,steps10", "--steps", "2", "--eval-limit", "2"});
    CHECK(r.code == 0);
    CHECK(fs::exists(work() / "out" / "ablation_inference_steps.csv"));

    r = tiny("gradcheck", {"--probes", "5"});
    CHECK(r.code == 0);
    CHECK(r.out.find("diffusion") != std::string::npos);

    r = tiny("rate");
    CHECK(r.code == 0);
}

TEST_CASE("the seed controls every random stream") {
    const auto a = run({"--preset", "tiny", "--seed", "5", "--corpus-dir", (work() / "s1").string(), "gen-data", "--n", "3"});
    const auto b = run({"--preset", "tiny", "--seed", "5", "--corpus-dir", (work() / "s2").string(), "gen-data", "--n", "3"});
    REQUIRE(a.code == 0);
    REQUIRE(b.code == 0);
    CHECK(slurp(work() / "s1" / "index.jsonl") == slurp(work() / "s2" / "index.jsonl"));
}
