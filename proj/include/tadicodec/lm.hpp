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

// Token language models over codec ids: an autoregressive text-to-token
// model and a masked generative model with schedule-driven decoding.

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "tadicodec/nn.hpp"

namespace tdc::lm {

using ag::Matrix;
using ag::Var;

/// Joint id space: [0, V_text) text, [V_text, V_text + 2^L) speech, then
/// BOS, EOS, MASK, PAD.
struct LmVocab {
    int text_vocab = 64;
    int latent_bits = 14;

    int speech_size() const { return 1 << latent_bits; }
    int speech_offset() const { return text_vocab; }
    int bos() const { return text_vocab + speech_size(); }
    int eos() const { return bos() + 1; }
    int mask() const { return bos() + 2; }
    int pad() const { return bos() + 3; }
    int size() const { return bos() + 4; }

    bool is_text(int id) const { return id >= 0 && id < text_vocab; }
    bool is_speech(int id) const { return id >= speech_offset() && id < speech_offset() + speech_size(); }
    int speech_id(int token) const;  // throws InputError when out of range
    int token_of(int id) const;      // inverse of speech_id
    void validate() const;
    bool operator==(const LmVocab&) const = default;
};

struct LmConfig {
    nn::BlockConfig blocks{.hidden_size = 64, .intermediate_size = 128, .n_layers = 2, .n_heads = 4, .n_kv_heads = 4};
    LmVocab vocab;
    int max_context = 256;
    uint64_t seed = 0;
    double lr = 1e-3;
    int warmup_steps = 50;
    double clip_norm = 1.0;
    int batch = 8;

    void validate() const;
    std::string to_json() const;
    static LmConfig from_json(const std::string& text);
};

/// One (text, speech tokens) pair; tokens are codec ids in [0, 2^L).
struct LmExample {
    std::vector<int> text;
    std::vector<int> tokens;
};

// Autoregressive model --------------------------------------------------------

class ArModel {
public:
    explicit ArModel(const LmConfig& cfg);
    ArModel(const ArModel&) = delete;
    ArModel& operator=(const ArModel&) = delete;

    const LmConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return ps_; }
    const nn::ParamStore& params() const { return ps_; }

    /// Layout [BOS, text, speech + V_text, EOS].
    std::vector<int> sequence(const LmExample& ex) const;

    /// Logits over the head space (2^L speech ids, then EOS) for the given
    /// rows of each packed input sequence.
    Var head_logits(const std::vector<std::vector<int>>& inputs, const std::vector<std::vector<int>>& rows) const;

private:
    LmConfig cfg_;
    nn::ParamStore ps_;
    nn::Embedding embed_;
    std::unique_ptr<nn::Transformer> transformer_;
    nn::Linear head_;
};

/// Mean NLL over speech positions and the closing EOS; text positions are
/// never scored. Throws InputError when a sequence exceeds max_context.
Var ar_loss(const ArModel& model, std::span<const LmExample> batch);

struct SamplingConfig {
    double temperature = 1.0;  // <= 0 means greedy
    int top_k = 20;            // <= 0 disables the cut
};

/// Samples until EOS or max_tokens; returns codec ids.
std::vector<int> ar_generate(const ArModel& model, const std::vector<int>& text, const SamplingConfig& sampling,
                             Rng& rng, int max_tokens);

// Masked generative model -----------------------------------------------------

struct MaskSchedule {
    double horizon = 1.0;  // T_m
    int steps = 10;        // S
};

/// sin(π t / (2 T_m)); InputError for t <= 0 or t > T_m.
double gamma(double t, const MaskSchedule& schedule = {});

/// Number of positions still masked after decode step j of S.
int remask_count(int n, int j, const MaskSchedule& schedule);

struct MgmState {
    std::vector<int> ids;                // joint ids, MASK where masked
    std::vector<unsigned char> masked;
    std::vector<double> scores;
    int step = 0;
    int masked_count() const;
};

MgmState mgm_mask(std::span<const int> tokens, double t, Rng& rng, const LmVocab& vocab,
                  const MaskSchedule& schedule = {});

class MgmModel {
public:
    explicit MgmModel(const LmConfig& cfg);
    MgmModel(const MgmModel&) = delete;
    MgmModel& operator=(const MgmModel&) = delete;

    const LmConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return ps_; }
    const nn::ParamStore& params() const { return ps_; }

    /// Speech-position logits over 2^L ids for each [text ; x_t] pair,
    /// stacked in item order.
    Var logits(const std::vector<std::vector<int>>& texts, const std::vector<std::vector<int>>& states) const;

private:
    LmConfig cfg_;
    nn::ParamStore ps_;
    nn::Embedding embed_;
    std::unique_ptr<nn::Transformer> transformer_;
    nn::Linear head_;
};

/// Counts batches whose every item had zero masked positions.
std::atomic<long>& empty_mgm_mask_events();

/// Masked cross-entropy normalized by the masked count. `t` fixes the mask
/// level for every item; otherwise it is drawn uniformly from (0, T_m].
Var mgm_loss(const MgmModel& model, std::span<const LmExample> batch, Rng& rng, std::optional<double> t = std::nullopt,
             const MaskSchedule& schedule = {});
/// Loss for pre-masked states (used by gradient checks).
Var mgm_loss_from_states(const MgmModel& model, std::span<const LmExample> batch, std::span<const MgmState> states);

struct MgmDecodeOptions {
    double temperature = 1.0;  // <= 0 takes the argmax
    bool gumbel_ties = false;  // random tie-breaking instead of position order
};

struct MgmTraceLine {
    int step;
    int masked;
    double mean_confidence;
};

std::vector<int> mgm_decode(const MgmModel& model, const std::vector<int>& text, int n, const MaskSchedule& schedule,
                            Rng& rng, const MgmDecodeOptions& options = {}, std::vector<MgmTraceLine>* trace = nullptr,
                            std::vector<MgmState>* states = nullptr);

void write_trace(std::ostream& os, const std::vector<MgmTraceLine>& trace);

/// Tokens-per-text-symbol ratio fitted on a corpus; length = round(ratio · |text|).
struct LengthHeuristic {
    double ratio = 2.0;
    static LengthHeuristic fit(std::span<const LmExample> data);
    int predict(size_t text_length) const;
};

// Training and persistence ----------------------------------------------------

/// Adam over any loss closure; batches are drawn by shuffled epochs.
class LmTrainer {
public:
    using LossFn = std::function<Var(std::span<const LmExample>, Rng&)>;
    LmTrainer(nn::ParamStore& ps, const LmConfig& cfg, LossFn loss);
    double step(const std::vector<LmExample>& data);
    void run(const std::vector<LmExample>& data, int steps, const std::function<void(long, double)>& on_step = {});
    long steps_taken() const { return adam_.steps_taken(); }

private:
    LmConfig cfg_;
    nn::ParamStore* ps_;
    LossFn loss_;
    nn::Adam adam_;
    Rng rng_;
    std::vector<int> order_;
    size_t cursor_ = 0;
};

void save_lm(const std::filesystem::path& path, const std::string& kind, const LmConfig& cfg,
             const nn::ParamStore& ps, double length_ratio = 0.0);

struct LoadedLm {
    std::string kind;  // "ar" or "mgm"
    LmConfig config;
    double length_ratio = 0.0;
    std::unique_ptr<ArModel> ar;
    std::unique_ptr<MgmModel> mgm;
};
LoadedLm load_lm(const std::filesystem::path& path);

}  // namespace tdc::lm
