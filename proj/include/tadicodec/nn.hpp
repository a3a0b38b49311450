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

// Shared transformer substrate: parameter storage, Llama-style blocks with
// RoPE and (adaptive) RMSNorm, timestep embeddings, and the Adam optimizer.

#include <map>
#include <string>
#include <vector>

#include "tadicodec/autograd.hpp"
#include "tadicodec/common.hpp"

namespace tdc::nn {

using ag::Matrix;
using ag::Var;

/// Named, ordered parameter set. Freezing a parameter turns its leaf into a
/// non-differentiable constant, so no gradient is computed and the optimizer
/// never touches it.
class ParamStore {
public:
    Var create(const std::string& name, Matrix init);
    Var get(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    const std::vector<std::pair<std::string, Var>>& items() const { return params_; }

    void zero_grad();
    /// Freeze/unfreeze every parameter whose name starts with `prefix`.
    void set_frozen(const std::string& prefix, bool frozen);
    bool frozen(const std::string& name) const;
    size_t scalar_count() const;
    /// FNV-1a over names and raw bytes of parameters matching `prefix`.
    uint64_t hash(const std::string& prefix = "") const;
    /// Copies values of every matching name from `other` (shapes must agree).
    void copy_values_from(const ParamStore& other);

private:
    std::vector<std::pair<std::string, Var>> params_;
    std::map<std::string, size_t> index_;
};

Matrix normal_matrix(int rows, int cols, double stddev, Rng& rng);

struct Linear {
    Var weight;
    Var bias;  // may be null

    static Linear create(ParamStore& ps, const std::string& name, int in, int out, Rng& rng, bool with_bias = true,
                         double init_scale = 1.0);
    static Linear zeros(ParamStore& ps, const std::string& name, int in, int out, bool with_bias = true);
    Var operator()(const Var& x) const { return ag::linear(x, weight, bias); }
    int in_features() const { return weight->value.rows; }
    int out_features() const { return weight->value.cols; }
};

struct Embedding {
    Var table;

    static Embedding create(ParamStore& ps, const std::string& name, int vocab, int dim, Rng& rng);
    Var operator()(std::span<const int> ids) const { return ag::gather_rows(table, ids); }
};

/// Packed batch of independent sequences sharing one row-major activation
/// matrix. Each row carries its RoPE position and segment index.
struct SequenceLayout {
    std::vector<kernels::Segment> segments;
    std::vector<int> positions;
    std::vector<int> segment_of_row;

    /// Appends a segment whose rows take positions first_position, +1, ...
    void add_segment(int length, int first_position = 0);
    /// Appends a segment with explicit per-row positions.
    void add_segment(std::span<const int> row_positions);
    int rows() const { return static_cast<int>(positions.size()); }
    int segment_count() const { return static_cast<int>(segments.size()); }
};

enum class AttentionMode { bidirectional, causal };
enum class NormMode { rms, adaptive_rms };

struct BlockConfig {
    int hidden_size = 64;
    int intermediate_size = 128;
    int n_layers = 2;
    int n_heads = 4;
    int n_kv_heads = 4;
    AttentionMode attention_mode = AttentionMode::bidirectional;
    NormMode norm_mode = NormMode::rms;
    double rope_base = 10000.0;
    double norm_eps = 1e-6;

    int head_dim() const { return hidden_size / n_heads; }
    void validate() const;
};

/// Conditioning projections for one adaptive RMSNorm. Zero-initialized so an
/// untrained model behaves like plain RMSNorm.
struct AdaNorm {
    Linear to_scale;
    Linear to_shift;

    static AdaNorm create(ParamStore& ps, const std::string& name, int cond_dim, int hidden);
};

/// rms_normalize(x) ⊙ (1 + s(cond)) + b(cond). `cond` holds one row per
/// segment of `layout`; each row of x uses its segment's conditioning.
Var ada_rmsnorm(const Var& x, const Var& cond, const AdaNorm& proj, const SequenceLayout& layout, double eps = 1e-6);

/// Pre-norm Llama-style block: x + attn(norm(x)), then + mlp(norm(x)), with a
/// SiLU-gated MLP and RoPE on queries and keys.
class TransformerBlock {
public:
    TransformerBlock(ParamStore& ps, const std::string& name, const BlockConfig& cfg, Rng& rng);

    /// `cond` must be non-null iff the block uses adaptive norm.
    Var forward(const Var& x, const SequenceLayout& layout, const Var& cond) const;

    /// Zero the attention and MLP output projections (residual identity).
    void zero_output_projections();

private:
    Var normalize(const Var& x, const SequenceLayout& layout, const Var& cond, int which) const;

    BlockConfig cfg_;
    Var norm_gain_[2];
    AdaNorm ada_[2];
    Linear wq_, wk_, wv_, wo_;
    Linear w_gate_, w_up_, w_down_;
};

/// Stack of blocks followed by a final (adaptive) RMSNorm.
class Transformer {
public:
    Transformer(ParamStore& ps, const std::string& name, const BlockConfig& cfg, Rng& rng);

    Var forward(const Var& x, const SequenceLayout& layout, const Var& cond = nullptr) const;
    const BlockConfig& config() const { return cfg_; }
    std::vector<TransformerBlock>& blocks() { return blocks_; }

private:
    BlockConfig cfg_;
    std::vector<TransformerBlock> blocks_;
    Var final_gain_;
    AdaNorm final_ada_;
};

/// Sinusoidal features of t ∈ [0,1] followed by Linear → SiLU → Linear.
class TimestepEmbedding {
public:
    TimestepEmbedding(ParamStore& ps, const std::string& name, int freq_dim, int hidden, Rng& rng);

    /// One output row per entry of `t`. Throws InputError for t ∉ [0,1].
    Var operator()(std::span<const double> t) const;
    /// The fixed sinusoidal feature rows (no learned part).
    static Matrix features(std::span<const double> t, int freq_dim);

private:
    int freq_dim_;
    Linear fc1_, fc2_;
};

struct AdamConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int warmup_steps = 100;
    double clip_norm = 1.0;  // <= 0 disables clipping
    int decay_steps = 0;     // cosine decay horizon, 0 keeps lr constant
    double min_lr_ratio = 0.1;
};

/// Adam with linear warmup and global-norm gradient clipping. Frozen
/// parameters are skipped entirely, including their moments.
class Adam {
public:
    Adam(ParamStore& ps, AdamConfig cfg) : ps_(&ps), cfg_(cfg) {}

    /// Applies one update from the accumulated gradients; returns the
    /// pre-clipping global gradient norm.
    double step();
    long steps_taken() const { return step_; }
    double current_lr() const;

    /// Moments exported as "adam.m/<param>" and "adam.v/<param>".
    std::vector<std::pair<std::string, Matrix>> export_state() const;
    void import_state(long step, const std::map<std::string, Matrix>& arrays);
    void set_step(long s) { step_ = s; }

private:
    ParamStore* ps_;
    AdamConfig cfg_;
    long step_ = 0;
    std::map<std::string, Matrix> m_, v_;
};

}  // namespace tdc::nn
