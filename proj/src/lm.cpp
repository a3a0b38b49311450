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


#include "tadicodec/lm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "json.hpp"
#include "tadicodec/checkpoint.hpp"

namespace tdc::lm {

namespace {

nn::BlockConfig with_mode(nn::BlockConfig b, nn::AttentionMode mode) {
    b.attention_mode = mode;
    b.norm_mode = nn::NormMode::rms;
    return b;
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
    std::vector<double> p(logits.size());
    const double inv = temperature > 0 ? 1.0 / temperature : 1.0;
    double mx = -INFINITY;
    for (double v : logits) mx = std::max(mx, v * inv);
    double z = 0.0;
    for (size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(logits[i] * inv - mx));
    for (double& v : p) v /= z;
    return p;
}

int argmax(std::span<const double> v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

int sample_index(std::span<const double> probs, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return static_cast<int>(i);
    }
    // Rounding left a sliver above the last bucket; take the last nonzero.
    for (size_t i = probs.size(); i-- > 0;)
        if (probs[i] > 0) return static_cast<int>(i);
    return 0;
}

}  // namespace

// Vocabulary / config -----------------------------------------------------------

int LmVocab::speech_id(int token) const {
    if (token < 0 || token >= speech_size())
        throw InputError("speech token " + std::to_string(token) + " outside [0, " + std::to_string(speech_size()) + ")");
    return speech_offset() + token;
}

int LmVocab::token_of(int id) const {
    if (!is_speech(id)) throw InputError("id " + std::to_string(id) + " is not a speech id");
    return id - speech_offset();
}

void LmVocab::validate() const {
    if (text_vocab < 1) throw ConfigError("LmVocab: text vocabulary must be non-empty");
    if (latent_bits < 1 || latent_bits > 20) throw ConfigError("LmVocab: latent_bits must be in [1, 20]");
}

void LmConfig::validate() const {
    blocks.validate();
    vocab.validate();
    if (max_context < 2) throw ConfigError("LmConfig: max_context must be >= 2");
    if (lr <= 0 || batch < 1) throw ConfigError("LmConfig: lr > 0 and batch >= 1 required");
}

std::string LmConfig::to_json() const {
    nlohmann::json j;
    j["hidden_size"] = blocks.hidden_size;
    j["intermediate_size"] = blocks.intermediate_size;
    j["layers"] = blocks.n_layers;
    j["heads"] = blocks.n_heads;
    j["kv_heads"] = blocks.n_kv_heads;
    j["rope_base"] = blocks.rope_base;
    j["text_vocab"] = vocab.text_vocab;
    j["latent_bits"] = vocab.latent_bits;
    j["max_context"] = max_context;
    j["seed"] = seed;
    j["lr"] = lr;
    j["warmup_steps"] = warmup_steps;
    j["clip_norm"] = clip_norm;
    j["batch"] = batch;
    return j.dump();
}

LmConfig LmConfig::from_json(const std::string& text) {
    LmConfig c;
    try {
        const auto j = nlohmann::json::parse(text);
        c.blocks.hidden_size = j.at("hidden_size");
        c.blocks.intermediate_size = j.at("intermediate_size");
        c.blocks.n_layers = j.at("layers");
        c.blocks.n_heads = j.at("heads");
        c.blocks.n_kv_heads = j.at("kv_heads");
        c.blocks.rope_base = j.at("rope_base");
        c.vocab.text_vocab = j.at("text_vocab");
        c.vocab.latent_bits = j.at("latent_bits");
        c.max_context = j.at("max_context");
        c.seed = j.at("seed");
        c.lr = j.at("lr");
        c.warmup_steps = j.at("warmup_steps");
        c.clip_norm = j.at("clip_norm");
        c.batch = j.at("batch");
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("LM config JSON: ") + e.what());
    }
    c.validate();
    return c;
}

// AR ------------------------------------------------------------------------------

ArModel::ArModel(const LmConfig& cfg) : cfg_(cfg) {
    cfg_.blocks = with_mode(cfg_.blocks, nn::AttentionMode::causal);
    cfg_.validate();
    Rng rng = Rng(cfg_.seed).split(11);
    embed_ = nn::Embedding::create(ps_, "ar.embed", cfg_.vocab.size(), cfg_.blocks.hidden_size, rng);
    transformer_ = std::make_unique<nn::Transformer>(ps_, "ar.transformer", cfg_.blocks, rng);
    head_ = nn::Linear::zeros(ps_, "ar.head", cfg_.blocks.hidden_size, cfg_.vocab.speech_size() + 1);
}

std::vector<int> ArModel::sequence(const LmExample& ex) const {
    const auto& v = cfg_.vocab;
    std::vector<int> seq{v.bos()};
    for (int id : ex.text) {
        if (!v.is_text(id)) throw InputError("ar: text id " + std::to_string(id) + " outside the text range");
        seq.push_back(id);
    }
    for (int tok : ex.tokens) seq.push_back(v.speech_id(tok));
    seq.push_back(v.eos());
    return seq;
}

Var ArModel::head_logits(const std::vector<std::vector<int>>& inputs, const std::vector<std::vector<int>>& rows) const {
    std::vector<int> flat, picked;
    nn::SequenceLayout layout;
    for (size_t i = 0; i < inputs.size(); ++i) {
        if (static_cast<int>(inputs[i].size()) > cfg_.max_context)
            throw InputError("ar: sequence of " + std::to_string(inputs[i].size()) + " exceeds context " +
                             std::to_string(cfg_.max_context));
        const int base = static_cast<int>(flat.size());
        for (int r : rows[i]) picked.push_back(base + r);
        flat.insert(flat.end(), inputs[i].begin(), inputs[i].end());
        layout.add_segment(static_cast<int>(inputs[i].size()));
    }
    auto h = transformer_->forward(embed_(flat), layout);
    return head_(ag::gather_rows(h, picked));
}

Var ar_loss(const ArModel& model, std::span<const LmExample> batch) {
    if (batch.empty()) throw InputError("ar_loss: empty batch");
    const auto& v = model.config().vocab;
    std::vector<std::vector<int>> inputs, rows;
    std::vector<int> targets;
    for (const auto& ex : batch) {
        auto seq = model.sequence(ex);
        if (static_cast<int>(seq.size()) > model.config().max_context)
            throw InputError("ar_loss: sequence of " + std::to_string(seq.size()) + " exceeds context " +
                             std::to_string(model.config().max_context));
        // Row r predicts seq[r + 1]; scoring starts at the last text row.
        const int first = static_cast<int>(ex.text.size());
        std::vector<int> rs;
        for (int r = first; r + 1 < static_cast<int>(seq.size()); ++r) {
            rs.push_back(r);
            const int next = seq[static_cast<size_t>(r) + 1];
            targets.push_back(next == v.eos() ? v.speech_size() : v.token_of(next));
        }
        seq.pop_back();
        inputs.push_back(std::move(seq));
        rows.push_back(std::move(rs));
    }
    return ag::cross_entropy(model.head_logits(inputs, rows), targets);
}

std::vector<int> ar_generate(const ArModel& model, const std::vector<int>& text, const SamplingConfig& sampling,
                             Rng& rng, int max_tokens) {
    ag::NoGradGuard guard;
    const auto& v = model.config().vocab;
    std::vector<int> seq = model.sequence({text, {}});
    seq.pop_back();  // drop EOS
    std::vector<int> out;
    while (static_cast<int>(out.size()) < max_tokens && static_cast<int>(seq.size()) < model.config().max_context) {
        const auto logits = model.head_logits({seq}, {{static_cast<int>(seq.size()) - 1}})->value;
        std::span<const double> row(logits.data);
        int pick;
        if (sampling.temperature <= 0) {
            pick = argmax(row);
        } else {
            auto p = softmax(row, sampling.temperature);
            if (sampling.top_k > 0 && sampling.top_k < static_cast<int>(p.size())) {
                std::vector<int> idx(p.size());
                std::iota(idx.begin(), idx.end(), 0);
                std::partial_sort(idx.begin(), idx.begin() + sampling.top_k, idx.end(),
                                  [&](int a, int b) { return p[a] > p[b] || (p[a] == p[b] && a < b); });
                std::vector<double> kept(p.size(), 0.0);
                double z = 0.0;
                for (int k = 0; k < sampling.top_k; ++k) z += (kept[idx[k]] = p[idx[k]]);
                for (double& x : kept) x /= z;
                p = std::move(kept);
            }
            pick = sample_index(p, rng);
        }
        if (pick == v.speech_size()) break;  // EOS
        out.push_back(pick);
        seq.push_back(v.speech_id(pick));
    }
    return out;
}

// MGM -----------------------------------------------------------------------------

double gamma(double t, const MaskSchedule& schedule) {
    if (!(t > 0.0)) throw InputError("gamma: t must be > 0");
    if (t > schedule.horizon * (1.0 + 1e-12)) throw InputError("gamma: t exceeds the horizon");
    return std::sin(std::numbers::pi * t / (2.0 * schedule.horizon));
}

int remask_count(int n, int j, const MaskSchedule& schedule) {
    if (j >= schedule.steps) return 0;
    const double T = schedule.horizon;
    return static_cast<int>(std::floor(n * gamma(T - j * T / schedule.steps, schedule)));
}

int MgmState::masked_count() const {
    return static_cast<int>(std::count(masked.begin(), masked.end(), 1));
}

MgmState mgm_mask(std::span<const int> tokens, double t, Rng& rng, const LmVocab& vocab, const MaskSchedule& schedule) {
    const double p = gamma(t, schedule);
    MgmState s;
    for (int tok : tokens) {
        const bool m = p >= 1.0 || rng.bernoulli(p);
        s.ids.push_back(m ? vocab.mask() : vocab.speech_id(tok));
        s.masked.push_back(m ? 1 : 0);
        s.scores.push_back(m ? 0.0 : 1.0);
    }
    return s;
}

MgmModel::MgmModel(const LmConfig& cfg) : cfg_(cfg) {
    cfg_.blocks = with_mode(cfg_.blocks, nn::AttentionMode::bidirectional);
    cfg_.validate();
    Rng rng = Rng(cfg_.seed).split(13);
    embed_ = nn::Embedding::create(ps_, "mgm.embed", cfg_.vocab.size(), cfg_.blocks.hidden_size, rng);
    transformer_ = std::make_unique<nn::Transformer>(ps_, "mgm.transformer", cfg_.blocks, rng);
    head_ = nn::Linear::zeros(ps_, "mgm.head", cfg_.blocks.hidden_size, cfg_.vocab.speech_size());
}

Var MgmModel::logits(const std::vector<std::vector<int>>& texts, const std::vector<std::vector<int>>& states) const {
    const auto& v = cfg_.vocab;
    std::vector<int> flat, speech_rows;
    nn::SequenceLayout layout;
    for (size_t i = 0; i < states.size(); ++i) {
        const int n = static_cast<int>(texts[i].size() + states[i].size());
        if (n > cfg_.max_context)
            throw InputError("mgm: sequence of " + std::to_string(n) + " exceeds context " + std::to_string(cfg_.max_context));
        for (int id : texts[i]) {
            if (!v.is_text(id)) throw InputError("mgm: text id " + std::to_string(id) + " outside the text range");
            flat.push_back(id);
        }
        for (int id : states[i]) {
            if (!v.is_speech(id) && id != v.mask()) throw InputError("mgm: state id " + std::to_string(id) + " invalid");
            speech_rows.push_back(static_cast<int>(flat.size()));
            flat.push_back(id);
        }
        layout.add_segment(n);
    }
    auto h = transformer_->forward(embed_(flat), layout);
    return head_(ag::gather_rows(h, speech_rows));
}

std::atomic<long>& empty_mgm_mask_events() {
    static std::atomic<long> events{0};
    return events;
}

Var mgm_loss_from_states(const MgmModel& model, std::span<const LmExample> batch, std::span<const MgmState> states) {
    if (batch.empty() || batch.size() != states.size()) throw InputError("mgm_loss: one state per example required");
    std::vector<std::vector<int>> texts, ids;
    std::vector<int> targets;
    for (size_t i = 0; i < batch.size(); ++i) {
        if (states[i].ids.size() != batch[i].tokens.size()) throw InputError("mgm_loss: state length mismatch");
        texts.push_back(batch[i].text);
        ids.push_back(states[i].ids);
        for (size_t p = 0; p < batch[i].tokens.size(); ++p) targets.push_back(states[i].masked[p] ? batch[i].tokens[p] : -1);
    }
    if (std::none_of(targets.begin(), targets.end(), [](int t) { return t >= 0; })) {
        ++empty_mgm_mask_events();
        return ag::constant(Matrix(1, 1));
    }
    return ag::cross_entropy(model.logits(texts, ids), targets);
}

Var mgm_loss(const MgmModel& model, std::span<const LmExample> batch, Rng& rng, std::optional<double> t,
             const MaskSchedule& schedule) {
    std::vector<MgmState> states;
    for (const auto& ex : batch) {
        // 1 - U[0,1) lies in (0, 1], so the draw never hits gamma's excluded 0.
        const double tt = t ? *t : schedule.horizon * (1.0 - rng.uniform());
        states.push_back(mgm_mask(ex.tokens, tt, rng, model.config().vocab, schedule));
    }
    return mgm_loss_from_states(model, batch, states);
}

std::vector<int> mgm_decode(const MgmModel& model, const std::vector<int>& text, int n, const MaskSchedule& schedule,
                            Rng& rng, const MgmDecodeOptions& options, std::vector<MgmTraceLine>* trace,
                            std::vector<MgmState>* states) {
    if (n < 1) throw InputError("mgm_decode: length must be >= 1");
    if (schedule.steps < 1) throw InputError("mgm_decode: steps must be >= 1");
    ag::NoGradGuard guard;
    const auto& v = model.config().vocab;
    MgmState s;
    s.ids.assign(static_cast<size_t>(n), v.mask());
    s.masked.assign(static_cast<size_t>(n), 1);
    s.scores.assign(static_cast<size_t>(n), 0.0);
    std::vector<double> tie(static_cast<size_t>(n));
    for (int j = 1; j <= schedule.steps; ++j) {
        const auto logits = model.logits({text}, {s.ids})->value;
        std::vector<unsigned char> was_unmasked(static_cast<size_t>(n));
        double conf = 0.0;
        int predicted = 0;
        for (int i = 0; i < n; ++i) {
            if (!s.masked[i]) {
                was_unmasked[i] = 1;
                s.scores[i] = 1.0;
                continue;
            }
            const auto row = logits.row(i);
            const auto p = softmax(row, options.temperature > 0 ? options.temperature : 1.0);
            const int tok = options.temperature > 0 ? sample_index(p, rng) : argmax(p);
            s.ids[i] = v.speech_id(tok);
            s.masked[i] = 0;
            s.scores[i] = p[static_cast<size_t>(tok)];
            conf += s.scores[i];
            ++predicted;
        }
        for (int i = 0; i < n; ++i) tie[i] = options.gumbel_ties ? rng.uniform() : static_cast<double>(i);
        const int keep_masked = remask_count(n, j, schedule);
        std::vector<int> order(static_cast<size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        // Lowest confidence first; finalized positions lose ties; then position.
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            if (s.scores[a] != s.scores[b]) return s.scores[a] < s.scores[b];
            if (was_unmasked[a] != was_unmasked[b]) return was_unmasked[a] < was_unmasked[b];
            return tie[a] < tie[b];
        });
        for (int k = 0; k < keep_masked; ++k) {
            const int i = order[static_cast<size_t>(k)];
            s.ids[i] = v.mask();
            s.masked[i] = 1;
            s.scores[i] = 0.0;
        }
        s.step = j;
        if (trace) trace->push_back({j, s.masked_count(), predicted ? conf / predicted : 1.0});
        if (states) states->push_back(s);
    }
    std::vector<int> out;
    for (int id : s.ids) out.push_back(v.token_of(id));
    return out;
}

void write_trace(std::ostream& os, const std::vector<MgmTraceLine>& trace) {
    for (const auto& t : trace)
        os << "step=" << t.step << " masked=" << t.masked << " mean_confidence=" << t.mean_confidence << "\n";
}

LengthHeuristic LengthHeuristic::fit(std::span<const LmExample> data) {
    double tok = 0, txt = 0;
    for (const auto& ex : data) {
        tok += static_cast<double>(ex.tokens.size());
        txt += static_cast<double>(ex.text.size());
    }
    LengthHeuristic h;
    if (txt > 0) h.ratio = tok / txt;
    return h;
}

int LengthHeuristic::predict(size_t text_length) const {
    return std::max(1, static_cast<int>(std::lround(ratio * static_cast<double>(text_length))));
}

// Training / persistence --------------------------------------------------------------

LmTrainer::LmTrainer(nn::ParamStore& ps, const LmConfig& cfg, LossFn loss)
    : cfg_(cfg),
      ps_(&ps),
      loss_(std::move(loss)),
      adam_(ps, nn::AdamConfig{.lr = cfg.lr, .warmup_steps = cfg.warmup_steps, .clip_norm = cfg.clip_norm}),
      rng_(Rng(cfg.seed).split(17)) {}

double LmTrainer::step(const std::vector<LmExample>& data) {
    if (data.empty()) throw InputError("lm training: no examples");
    const size_t bs = std::min<size_t>(static_cast<size_t>(cfg_.batch), data.size());
    std::vector<LmExample> batch;
    while (batch.size() < bs) {
        if (cursor_ >= order_.size() || order_.size() != data.size()) {
            order_.resize(data.size());
            std::iota(order_.begin(), order_.end(), 0);
            std::shuffle(order_.begin(), order_.end(), rng_.engine());
            cursor_ = 0;
        }
        batch.push_back(data[static_cast<size_t>(order_[cursor_++])]);
    }
    ps_->zero_grad();
    auto loss = loss_(batch, rng_);
    const double value = loss->value.data[0];
    if (!std::isfinite(value)) throw DivergenceError("lm loss became non-finite at step " + std::to_string(steps_taken()));
    ag::backward(loss);
    adam_.step();
    return value;
}

void LmTrainer::run(const std::vector<LmExample>& data, int steps, const std::function<void(long, double)>& on_step) {
    for (int i = 0; i < steps; ++i) {
        const double l = step(data);
        if (on_step) on_step(steps_taken(), l);
    }
}

void save_lm(const std::filesystem::path& path, const std::string& kind, const LmConfig& cfg, const nn::ParamStore& ps,
             double length_ratio) {
    ckpt::CheckpointData d;
    nlohmann::json meta;
    meta["kind"] = kind;
    meta["config"] = nlohmann::json::parse(cfg.to_json());
    meta["length_ratio"] = length_ratio;
    d.config_json = meta.dump();
    for (const auto& [name, p] : ps.items()) d.arrays.emplace_back("param/" + name, p->value);
    ckpt::write_checkpoint(path, d);
}

LoadedLm load_lm(const std::filesystem::path& path) {
    auto d = ckpt::read_checkpoint(path);
    LoadedLm out;
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(d.config_json);
        out.kind = meta.at("kind").get<std::string>();
        out.length_ratio = meta.value("length_ratio", 0.0);
    } catch (const nlohmann::json::exception&) {
        throw CheckpointError(path.string() + ": malformed LM metadata");
    }
    out.config = LmConfig::from_json(meta["config"].dump());
    nn::ParamStore* ps;
    if (out.kind == "ar") {
        out.ar = std::make_unique<ArModel>(out.config);
        ps = &out.ar->params();
    } else if (out.kind == "mgm") {
        out.mgm = std::make_unique<MgmModel>(out.config);
        ps = &out.mgm->params();
    } else {
        throw CheckpointError(path.string() + ": not an LM checkpoint (kind '" + out.kind + "')");
    }
    size_t matched = 0;
    for (auto& [name, m] : d.arrays) {
        if (name.rfind("param/", 0) != 0) continue;
        const auto pname = name.substr(6);
        if (!ps->contains(pname)) throw CheckpointError(path.string() + ": unexpected array '" + name + "'");
        auto p = ps->get(pname);
        if (!p->value.same_shape(m)) throw CheckpointError(path.string() + ": array '" + name + "' has the wrong shape");
        p->value = m;
        ++matched;
    }
    if (matched != ps->items().size()) throw CheckpointError(path.string() + ": checkpoint is missing parameters");
    return out;
}

}  // namespace tdc::lm
