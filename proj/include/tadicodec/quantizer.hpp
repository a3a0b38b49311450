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

// Binary spherical quantization of latent sequences.
//
// h (T_q × L) is projected row-wise onto the unit sphere and each coordinate is
// replaced by ±1/√L. The sign pattern *is* the token: bit i of the id is set
// when coordinate i is non-negative, so the codebook of 2^L corners never has
// to be stored. A plain nearest-neighbour VQ with an explicit codebook of the
// same size is kept as the ablation baseline.

#include <filesystem>
#include <string>
#include <vector>

#include "tadicodec/nn.hpp"

namespace tdc::quant {

using ag::Matrix;
using ag::Var;

enum class Variant { bsq, vq };

struct QuantizerConfig {
    int latent_dim = 14;         // L
    int downsample_factor = 16;  // F, mel frames per token
    int model_dim = 256;         // encoder width feeding project_down
    int cond_dim = 256;          // decoder width produced by project_up
    Variant variant = Variant::bsq;
    double vq_commit_weight = 0.25;

    long codebook_size() const { return 1L << latent_dim; }
    void validate() const;
    bool operator==(const QuantizerConfig&) const = default;
};

/// sign with sign(0) = +1.
inline double sign_of(double x) { return x >= 0.0 ? 1.0 : -1.0; }

/// h / ‖h‖; the zero vector maps to (1/√L, …, 1/√L).
std::vector<double> sphere_project(std::span<const double> h);
/// k = Σ 1[h_i ≥ 0]·2^i (zero counts as positive, matching sign(0) = 1).
int token_index(std::span<const double> h);
/// Corner of the scaled hypercube for id k: entry i = (2·bit_i(k) − 1)/√L.
std::vector<double> code_of_index(long k, int latent_dim);

struct BsqOutput {
    Matrix quantized;         // T_q × L rows on the unit sphere
    std::vector<int> tokens;  // T_q ids
};
/// Non-differentiable reference quantizer.
BsqOutput bsq_quantize(const Matrix& h);

/// Differentiable BSQ: sign_STE(h/‖h‖)/√L. Token ids written to `tokens`.
Var bsq_quantize(const Var& h, std::vector<int>* tokens);

struct VqOutput {
    Var quantized;            // straight-through: value of the codeword, gradient to h
    std::vector<int> tokens;
    Var commit_loss;          // weight · mean ‖h − sg(ĥ)‖²
    Var codebook_loss;        // mean ‖sg(h) − ĥ‖², trains the codebook
};
/// Nearest codeword (Euclidean) per row; ties resolve to the lowest index.
VqOutput vq_quantize(const Var& h, const Var& codebook, double commit_weight);

/// Number of distinct ids, e.g. codebook utilization of a batch.
int distinct_tokens(std::span<const int> ids);

/// Learned projections around the quantizer.
class Quantizer {
public:
    Quantizer(nn::ParamStore& ps, const std::string& name, const QuantizerConfig& cfg, Rng& rng);

    /// Stack F consecutive frames and map F·model_dim → L. Rows must be a
    /// multiple of F (padding is the caller's job).
    Var project_down(const Var& encoder_out) const;
    /// Map L → F·cond_dim and unstack to F frames per token.
    Var project_up(const Var& quantized) const;

    struct Output {
        Var quantized;
        std::vector<int> tokens;
        Var aux_loss;  // null for BSQ
    };
    Output quantize(const Var& h) const;
    /// Quantized rows for given ids (hypercube corners or codebook rows).
    Matrix codes_for(std::span<const int> tokens) const;

    const QuantizerConfig& config() const { return cfg_; }

private:
    QuantizerConfig cfg_;
    nn::Linear down_, up_;
    Var codebook_;
};

// ---- token interchange files -------------------------------------------------

struct TokenRecord {
    std::string utt_id;
    std::vector<int> ids;
};

/// One line per utterance: `utt_id id id id ...`.
void write_token_file(const std::filesystem::path& path, const std::vector<TokenRecord>& records);
std::vector<TokenRecord> read_token_file(const std::filesystem::path& path, long codebook_size = -1);

}  // namespace tdc::quant
