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

// The tokenizer proper: encoder -> BSQ (or VQ) -> flow-matching decoder,
// trained end to end on the diffusion loss.

#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tadicodec/corpus.hpp"
#include "tadicodec/flow.hpp"
#include "tadicodec/nn.hpp"
#include "tadicodec/quantizer.hpp"

namespace tdc::codec {

using ag::Matrix;
using ag::Var;

struct TrainerConfig {
    double lr = 3e-4;
    int warmup_steps = 100;
    int total_steps = 2000;
    int batch_utterances = 4;  // fixed utterance count; no dynamic batching
    uint64_t seed = 0;
    double clip_norm = 1.0;
    bool cosine_decay = false;  // decay to 0.1·lr over total_steps
    bool use_prompt = true;
    int checkpoint_every = 0;  // 0 disables periodic checkpoints
    int history_size = 1000;   // loss ring buffer length
    bool operator==(const TrainerConfig&) const = default;
};

struct CodecConfig {
    std::string preset = "desk";
    corpus::MelConfig mel;
    nn::BlockConfig encoder;
    flow::DecoderConfig decoder;
    quant::QuantizerConfig quantizer;
    TrainerConfig trainer;

    /// Presets: tiny (smoke tests, gradient checks), small (acceptance
    /// runs), desk (default), paper-scale (never trained by tests).
    static CodecConfig from_preset(const std::string& name);
    static const std::vector<std::string>& preset_names();

    /// Re-derives the dependent widths (quantizer model/cond dims, decoder
    /// mel_dim) from the primary fields.
    void sync();
    void validate() const;

    /// Flat key -> value view; the schema of the config file.
    std::map<std::string, std::string> to_kv() const;
    /// Throws ConfigError on an unknown key or a malformed value.
    void set(const std::string& key, const std::string& value);

    std::string to_json() const;
    static CodecConfig from_json(const std::string& text);

    double token_rate() const { return mel.frame_rate() / quantizer.downsample_factor; }
};

/// Reads `key = value` lines ('#' starts a comment). A `preset` key, if
/// present, is applied before every other key regardless of position.
CodecConfig load_config_file(const std::filesystem::path& path);
void save_config_file(const std::filesystem::path& path, const CodecConfig& cfg);

/// Keys whose values differ and that change the parameter layout or the
/// feature pipeline (trainer.* keys never count).
std::vector<std::string> structural_diff(const CodecConfig& a, const CodecConfig& b);

class TaDiCodec {
public:
    explicit TaDiCodec(const CodecConfig& cfg);
    TaDiCodec(const TaDiCodec&) = delete;
    TaDiCodec& operator=(const TaDiCodec&) = delete;

    const CodecConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return ps_; }
    const nn::ParamStore& params() const { return ps_; }

    struct Encoded {
        Var cond;                      // Σ padded frames × decoder width
        std::vector<std::vector<int>> tokens;
        std::vector<int> frames;       // padded frame count per item
        Var aux_loss;                  // VQ only
    };
    /// Differentiable encoder path for a batch of mels (padded internally).
    Encoded encode_graph(const std::vector<const Matrix*>& mels) const;

    /// Token ids; mel width must equal the configured bin count.
    std::vector<int> encode(const Matrix& mel) const;
    std::vector<std::vector<int>> encode_batch(const std::vector<const Matrix*>& mels) const;

    struct DecodeRequest {
        std::vector<int> tokens;
        std::vector<int> text;
        Matrix prompt;  // may have zero rows
    };
    /// Output frames = tokens · F.
    Matrix decode(const std::vector<int>& tokens, const std::vector<int>& text, const Matrix& prompt,
                  const flow::SamplerConfig& sampler, Rng& rng) const;
    std::vector<Matrix> decode_batch(const std::vector<DecodeRequest>& requests, const flow::SamplerConfig& sampler,
                                     Rng& rng) const;

    struct Loss {
        Var total;
        double diffusion = 0.0;
    };
    /// Training objective on a batch. BSQ: exactly the diffusion loss.
    Loss training_loss(const std::vector<const corpus::TtsUtterance*>& batch, Rng& rng, bool use_prompt,
                       std::optional<double> t_override = std::nullopt) const;

private:
    CodecConfig cfg_;
    nn::ParamStore ps_;
    std::unique_ptr<nn::Linear> enc_in_;
    std::unique_ptr<nn::Transformer> encoder_;
    std::unique_ptr<quant::Quantizer> quantizer_;
    std::unique_ptr<flow::FlowDecoder> decoder_;
};

class Trainer {
public:
    Trainer(TaDiCodec& model, const TrainerConfig& cfg);

    /// One optimizer step; returns the loss. Throws DivergenceError on a
    /// non-finite loss after writing `diagnostic_path` (if set).
    double step(const std::vector<corpus::TtsUtterance>& data);

    using Callback = std::function<void(long step, double loss)>;
    /// Runs `steps` optimizer steps. Periodic checkpoints go to
    /// `checkpoint_path` when it is set and checkpoint_every > 0.
    void run(const std::vector<corpus::TtsUtterance>& data, int steps, const Callback& on_step = {});

    /// Freezes every parameter under `prefix`; frozen parameters get no updates.
    void freeze(const std::string& prefix);
    const std::vector<std::string>& frozen_prefixes() const { return frozen_; }

    long steps_taken() const { return adam_.steps_taken(); }
    const std::deque<double>& loss_history() const { return history_; }
    TaDiCodec& model() { return *model_; }
    const TrainerConfig& config() const { return cfg_; }
    Rng& rng() { return rng_; }
    nn::Adam& optimizer() { return adam_; }

    void restore(long step, const std::map<std::string, Matrix>& optimizer_arrays, const std::string& rng_state,
                 const std::vector<double>& history, const std::vector<std::string>& frozen,
                 const std::vector<int>& epoch = {});
    /// Position in the current shuffled epoch: [cursor, order...].
    std::vector<int> epoch_state() const;

    std::filesystem::path checkpoint_path;
    std::filesystem::path diagnostic_path;

private:
    TaDiCodec* model_;
    TrainerConfig cfg_;
    nn::Adam adam_;
    Rng rng_;
    std::deque<double> history_;
    std::vector<std::string> frozen_;
    std::vector<int> order_;
    size_t cursor_ = 0;
};

/// Freezes encoder and quantizer, then trains the decoder only.
void continue_train_decoder(Trainer& trainer, const std::vector<corpus::TtsUtterance>& data, int extra_steps,
                            const Trainer::Callback& on_step = {});

// Checkpoints ---------------------------------------------------------------

/// Saves parameters, config, and (when given) optimizer state, step, rng and
/// loss history.
void save_checkpoint(const std::filesystem::path& path, const TaDiCodec& model, const Trainer* trainer = nullptr);

struct LoadedCodec {
    std::unique_ptr<TaDiCodec> model;
    long step = 0;
    std::string rng_state;
    std::map<std::string, Matrix> optimizer;
    std::vector<double> history;
    std::vector<std::string> frozen;
    std::vector<int> epoch;

    /// A trainer that continues exactly where the saved one stopped.
    std::unique_ptr<Trainer> make_trainer(const TrainerConfig& cfg) const;
};

/// When `runtime` is given, a structural mismatch raises CheckpointError
/// with a per-key diff.
LoadedCodec load_checkpoint(const std::filesystem::path& path, const CodecConfig* runtime = nullptr);

}  // namespace tdc::codec
