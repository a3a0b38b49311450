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

// Flow-matching objective and sampler for the text-aware mel decoder.
//
// Path: x_t = t·x + (1 − t)·ε, velocity v = x − ε. A clean prefix of the
// target (the prompt) is kept noise-free and excluded from the loss. The
// decoder sees [text embeddings ; frame stream] along time, where each frame
// is the sum of a projected x_t frame, the token conditioning and a prompt
// indicator embedding; adaptive RMSNorm injects the timestep.

#include <atomic>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tadicodec/nn.hpp"

namespace tdc::flow {

using ag::Matrix;
using ag::Var;

struct SamplerConfig {
    int n_steps = 32;

    /// `steps5|steps10|steps25|steps32|steps50`.
    static SamplerConfig preset(const std::string& name);
    static const std::vector<std::string>& preset_names();
    void validate() const;
};

Matrix interpolate(const Matrix& x, const Matrix& eps, double t);
Matrix velocity_target(const Matrix& x, const Matrix& eps);
/// floor(u · 0.25 · total_frames), u ~ Uniform[0, 1).
int sample_prompt_len(int total_frames, Rng& rng);

/// Everything one utterance contributes to a training step.
struct FlowBatch {
    Matrix x;
    Matrix eps;
    double t = 0.0;
    Matrix x_t;
    Matrix v;
    int prompt_len = 0;
    std::vector<unsigned char> loss_mask;  // false exactly on prompt frames
    std::vector<int> text;
    Var tokens_cond;  // frames × cond width
};

/// Draws t (unless overridden), ε and the prompt length; builds x_t and v.
/// `use_prompt = false` forces an empty prompt.
FlowBatch assemble_batch(const Matrix& x, std::vector<int> text, Var tokens_cond, Rng& rng,
                         std::optional<double> t_override = std::nullopt, bool use_prompt = true);

struct DecoderConfig {
    nn::BlockConfig blocks{.hidden_size = 64, .intermediate_size = 128, .n_layers = 2, .n_heads = 4,
                           .n_kv_heads = 4, .attention_mode = nn::AttentionMode::bidirectional,
                           .norm_mode = nn::NormMode::adaptive_rms};
    int mel_dim = 80;
    int text_vocab = 64;
    int time_freq_dim = 64;
    bool use_text = true;
    bool l1_loss = false;

    void validate() const;
    bool operator==(const DecoderConfig&) const = default;
};

/// One decoder input: the current frames, their conditioning and context.
struct DecoderItem {
    const Matrix* x_t = nullptr;
    Var tokens_cond;
    int prompt_len = 0;
    const std::vector<int>* text = nullptr;
    double t = 0.0;
};

class FlowDecoder {
public:
    FlowDecoder(nn::ParamStore& ps, const std::string& name, const DecoderConfig& cfg, Rng& rng);

    /// Predicted velocity for every speech frame of every item, stacked in
    /// item order (Σ frames × mel_dim). Text rows produce no output.
    Var forward(std::span<const DecoderItem> items) const;

    const DecoderConfig& config() const { return cfg_; }

private:
    DecoderConfig cfg_;
    nn::Embedding text_embed_;
    nn::Linear mel_in_;
    Var prompt_embed_;  // 2 × hidden: row 0 noisy frame, row 1 prompt frame
    nn::TimestepEmbedding time_embed_;
    nn::Transformer transformer_;
    nn::Linear head_;
};

/// Mean over loss-masked frames and all bins of (v − v̂)² (|·| when the
/// decoder is configured for L1). Zero when no frame is selected; each such
/// call bumps `empty_mask_events()`.
Var diffusion_loss(const FlowDecoder& decoder, std::span<const FlowBatch> batch);
std::atomic<long>& empty_mask_events();

/// Velocity field over a batch of states at time t.
using VelocityField = std::function<std::vector<Matrix>(const std::vector<Matrix>& states, double t)>;

/// Euler integration from t = 0 to 1 in `cfg.n_steps` uniform steps. The first
/// prompts[i].rows frames of state i are clamped to prompts[i] before every
/// evaluation and in the result.
std::vector<Matrix> euler_integrate(std::vector<Matrix> start, const std::vector<Matrix>& prompts,
                                    const SamplerConfig& cfg, const VelocityField& field);

struct SampleRequest {
    Matrix tokens_cond;  // frames × cond width
    std::vector<int> text;
    Matrix prompt;       // prompt_len × mel_dim, may have zero rows
};

/// Decoder-driven Euler sampling for a batch of requests; ε drawn from `rng`.
std::vector<Matrix> euler_sample(const FlowDecoder& decoder, const std::vector<SampleRequest>& requests,
                                 const SamplerConfig& cfg, Rng& rng);

}  // namespace tdc::flow
