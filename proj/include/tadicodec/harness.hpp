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


#pragma once

// Evaluation, rate accounting, gradient oracles and the ablation runner.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tadicodec/codec.hpp"
#include "tadicodec/corpus.hpp"

namespace tdc::harness {

using ag::Matrix;
using ag::Var;

// Exact rates -------------------------------------------------------------------

/// Non-negative rational with 128-bit intermediate arithmetic.
struct Rational {
    int64_t num = 0;
    int64_t den = 1;

    static Rational of(int64_t n, int64_t d = 1);
    /// Accepts "6.25", "25/4" or "14".
    static Rational parse(const std::string& text);
    Rational operator*(const Rational& o) const;
    Rational operator/(const Rational& o) const;
    bool operator==(const Rational& o) const = default;
    double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }
    /// Exact decimal when the denominator divides a power of ten; otherwise
    /// 12 significant decimals followed by "..." and the exact fraction.
    std::string to_decimal() const;
};

struct RateReport {
    Rational frame_rate;        // Hz
    Rational tokens_per_frame;
    Rational bits_per_token;
    Rational token_rate;        // tokens / s
    Rational bitrate_kbps;
    std::string to_string() const;
};

RateReport rate_report(const Rational& frame_rate, int64_t tokens_per_frame, int64_t bits_per_token);
/// Frame rate = sample_rate / (hop · F); one token per frame of L bits.
RateReport rate_report(const codec::CodecConfig& cfg);

// Reconstruction metrics -------------------------------------------------------------

struct UttRecon {
    std::string utt_id;
    double mse = 0.0;
    double normalized_mse = 0.0;
    double accuracy = 0.0;
    double offset_error = 0.0;
    std::vector<int> decoded_symbols;
};

struct ReconReport {
    std::vector<UttRecon> utterances;
    double mse = 0.0;             // pooled over all scored elements
    double normalized_mse = 0.0;  // pooled squared error / pooled target variance
    double accuracy = 0.0;        // mean template-decode accuracy
    double offset_error = 0.0;    // mean |offset error| in semitones
};

struct EvalOptions {
    flow::SamplerConfig sampler;
    uint64_t seed = 0;
    /// Prompt = this fraction of each target's frames (floored).
    double prompt_fraction = 0.0;
    /// When false, no prompt is supplied but the same leading frames are
    /// still excluded from the error, so runs with and without a prompt
    /// are scored on identical frames.
    bool supply_prompt = true;
};

/// Scores generated mels against references. `skip_frames[i]` leading
/// frames of item i are excluded from the error (not from template decode).
ReconReport score_mels(const std::vector<Matrix>& generated, const std::vector<const corpus::TtsUtterance*>& refs,
                       const corpus::TemplateMatcher& matcher, const std::vector<int>& skip_frames);

/// decode(encode(x)) for every utterance, then score.
ReconReport evaluate_reconstruction(const codec::TaDiCodec& model, const std::vector<corpus::TtsUtterance>& data,
                                    const corpus::TemplateMatcher& matcher, const EvalOptions& options);

// Gradient oracle -----------------------------------------------------------------------

struct GradcheckOptions {
    int n_probes = 20;
    double eps = 1e-5;
    uint64_t seed = 0;
    /// Parameters whose names start with any of these are probed; empty = all.
    std::vector<std::string> prefixes;
    int max_redraws = 200;
};

struct GradcheckReport {
    int probes = 0;
    int redrawn = 0;          // sign-boundary crossings detected and re-drawn
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::vector<std::string> worst;  // descriptions of the largest errors
};

/// `build` constructs the loss graph deterministically (same randomness on
/// every call). `signature` returns the discrete state (e.g. BSQ tokens) the
/// loss depends on; a probe whose ±eps evaluations change it is re-drawn.
/// Throws DivergenceError on a non-finite loss.
GradcheckReport gradcheck(nn::ParamStore& ps, const std::function<Var()>& build,
                          const std::function<std::vector<int>()>& signature, const GradcheckOptions& options);

/// Ready-made oracle runs on 2-layer / 32-dim models. Targets:
/// "quadratic" (calibration), "diffusion", "ar", "mgm". For the diffusion
/// loss, probes cover the decoder and the quantizer's up-projection: upstream
/// of the sign the true derivative is zero almost everywhere and the STE
/// gradient is checked separately.
GradcheckReport run_gradcheck_target(const std::string& target, int n_probes, uint64_t seed);

/// Relative error used by gradcheck: |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-8);

// Ablations -------------------------------------------------------------------------------

enum class AblationAxis { quantizer_variant, prompt_on_off, frame_rate, inference_steps, decoder_continued_training };

AblationAxis parse_axis(const std::string& name);
std::string axis_name(AblationAxis axis);

struct AblationSpec {
    AblationAxis axis = AblationAxis::prompt_on_off;
    std::vector<std::string> values;
    /// The value list mirroring the corresponding ablation row group.
    static AblationSpec defaults(AblationAxis axis);
    void validate() const;
};

struct AblationOptions {
    int train_steps = 2000;
    int extra_decoder_steps = 500;
    EvalOptions eval;
    /// Prompt fraction used by the prompt_on_off axis.
    double prompt_fraction = 0.25;
    std::function<void(const std::string&)> log;
};

struct AblationRow {
    std::string variant;
    bool ok = false;
    std::string error;
    double final_loss = 0.0;
    int sampler_steps = 0;
    ReconReport report;
};

struct AblationTable {
    std::string axis;
    std::vector<AblationRow> rows;
    std::string to_text() const;
    std::string to_csv() const;
};

/// Trains (or reuses) one model per value with a shared seed and evaluates
/// each on `eval_data`. A failing variant is marked and the run continues.
AblationTable run_ablation(const AblationSpec& spec, const codec::CodecConfig& base,
                           const std::vector<corpus::TtsUtterance>& train_data,
                           const std::vector<corpus::TtsUtterance>& eval_data, const corpus::TemplateMatcher& matcher,
                           const AblationOptions& options);

}  // namespace tdc::harness
