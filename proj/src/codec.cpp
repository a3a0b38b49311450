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


#include "tadicodec/codec.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "tadicodec/checkpoint.hpp"

namespace tdc::codec {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& v) {
    double out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
    return out;
}

long parse_long(const std::string& key, const std::string& v) {
    long out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
    return out;
}

int parse_int(const std::string& key, const std::string& v) { return static_cast<int>(parse_long(key, v)); }

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

nn::BlockConfig block(int hidden, int inter, int layers, int heads, nn::NormMode norm) {
    nn::BlockConfig b;
    b.hidden_size = hidden;
    b.intermediate_size = inter;
    b.n_layers = layers;
    b.n_heads = heads;
    b.n_kv_heads = heads;
    b.attention_mode = nn::AttentionMode::bidirectional;
    b.norm_mode = norm;
    return b;
}

void put_block(std::map<std::string, std::string>& kv, const std::string& p, const nn::BlockConfig& b) {
    kv[p + ".hidden_size"] = std::to_string(b.hidden_size);
    kv[p + ".intermediate_size"] = std::to_string(b.intermediate_size);
    kv[p + ".layers"] = std::to_string(b.n_layers);
    kv[p + ".heads"] = std::to_string(b.n_heads);
    kv[p + ".kv_heads"] = std::to_string(b.n_kv_heads);
    kv[p + ".rope_base"] = fmt_double(b.rope_base);
}

bool set_block(nn::BlockConfig& b, const std::string& field, const std::string& key, const std::string& v) {
    if (field == "hidden_size") b.hidden_size = parse_int(key, v);
    else if (field == "intermediate_size") b.intermediate_size = parse_int(key, v);
    else if (field == "layers") b.n_layers = parse_int(key, v);
    else if (field == "heads") b.n_heads = parse_int(key, v);
    else if (field == "kv_heads") b.n_kv_heads = parse_int(key, v);
    else if (field == "rope_base") b.rope_base = parse_double(key, v);
    else return false;
    return true;
}

}  // namespace

// Config ---------------------------------------------------------------------

const std::vector<std::string>& CodecConfig::preset_names() {
    static const std::vector<std::string> names{"tiny", "small", "desk", "paper-scale"};
    return names;
}

CodecConfig CodecConfig::from_preset(const std::string& name) {
    CodecConfig c;
    c.preset = name;
    if (name == "tiny") {
        c.encoder = block(32, 64, 2, 2, nn::NormMode::rms);
        c.decoder.blocks = block(32, 64, 2, 2, nn::NormMode::adaptive_rms);
        c.decoder.time_freq_dim = 32;
    } else if (name == "small") {
        c.encoder = block(64, 128, 2, 4, nn::NormMode::rms);
        c.decoder.blocks = block(128, 256, 2, 4, nn::NormMode::adaptive_rms);
        c.decoder.time_freq_dim = 64;
        c.trainer.lr = 3e-3;
        c.trainer.cosine_decay = true;
        c.trainer.total_steps = 2000;
    } else if (name == "desk") {
        c.encoder = block(256, 768, 4, 4, nn::NormMode::rms);
        c.decoder.blocks = block(256, 768, 6, 4, nn::NormMode::adaptive_rms);
        c.decoder.time_freq_dim = 256;
    } else if (name == "paper-scale") {
        c.encoder = block(1024, 4096, 8, 16, nn::NormMode::rms);
        c.decoder.blocks = block(1024, 4096, 16, 16, nn::NormMode::adaptive_rms);
        c.decoder.time_freq_dim = 256;
        c.trainer.lr = 7.5e-5;
        c.trainer.warmup_steps = 32000;
        c.trainer.total_steps = 800000;
    } else {
        throw ConfigError("unknown preset '" + name + "' (expected tiny|small|desk|paper-scale)");
    }
    c.sync();
    return c;
}

void CodecConfig::sync() {
    quantizer.model_dim = encoder.hidden_size;
    quantizer.cond_dim = decoder.blocks.hidden_size;
    decoder.mel_dim = mel.n_mels;
    encoder.attention_mode = nn::AttentionMode::bidirectional;
    encoder.norm_mode = nn::NormMode::rms;
    decoder.blocks.attention_mode = nn::AttentionMode::bidirectional;
    decoder.blocks.norm_mode = nn::NormMode::adaptive_rms;
}

void CodecConfig::validate() const {
    mel.validate();
    encoder.validate();
    decoder.validate();
    quantizer.validate();
    if (decoder.blocks.attention_mode != nn::AttentionMode::bidirectional)
        throw ConfigError("decoder attention must be bidirectional");
    if (quantizer.model_dim != encoder.hidden_size || quantizer.cond_dim != decoder.blocks.hidden_size ||
        decoder.mel_dim != mel.n_mels)
        throw ConfigError("dependent widths out of sync (call sync())");
    if (trainer.lr <= 0 || trainer.batch_utterances < 1 || trainer.warmup_steps < 0 || trainer.total_steps < 0)
        throw ConfigError("trainer: lr > 0, batch >= 1, warmup >= 0, total_steps >= 0 required");
}

std::map<std::string, std::string> CodecConfig::to_kv() const {
    std::map<std::string, std::string> kv;
    kv["preset"] = preset;
    kv["mel.sample_rate"] = std::to_string(mel.sample_rate);
    kv["mel.hop"] = std::to_string(mel.hop);
    kv["mel.window"] = std::to_string(mel.window);
    kv["mel.n_mels"] = std::to_string(mel.n_mels);
    kv["mel.fmin"] = fmt_double(mel.fmin);
    kv["mel.fmax"] = fmt_double(mel.fmax);
    kv["mel.log_floor"] = fmt_double(mel.log_floor);
    kv["mel.norm_offset"] = fmt_double(mel.norm_offset);
    kv["mel.norm_scale"] = fmt_double(mel.norm_scale);
    put_block(kv, "encoder", encoder);
    put_block(kv, "decoder", decoder.blocks);
    kv["decoder.time_freq_dim"] = std::to_string(decoder.time_freq_dim);
    kv["decoder.text_vocab"] = std::to_string(decoder.text_vocab);
    kv["decoder.use_text"] = decoder.use_text ? "true" : "false";
    kv["decoder.l1_loss"] = decoder.l1_loss ? "true" : "false";
    kv["quantizer.latent_dim"] = std::to_string(quantizer.latent_dim);
    kv["quantizer.downsample_factor"] = std::to_string(quantizer.downsample_factor);
    kv["quantizer.variant"] = quantizer.variant == quant::Variant::bsq ? "bsq" : "vq";
    kv["quantizer.vq_commit_weight"] = fmt_double(quantizer.vq_commit_weight);
    kv["trainer.lr"] = fmt_double(trainer.lr);
    kv["trainer.warmup_steps"] = std::to_string(trainer.warmup_steps);
    kv["trainer.total_steps"] = std::to_string(trainer.total_steps);
    kv["trainer.batch_utterances"] = std::to_string(trainer.batch_utterances);
    kv["trainer.seed"] = std::to_string(trainer.seed);
    kv["trainer.clip_norm"] = fmt_double(trainer.clip_norm);
    kv["trainer.cosine_decay"] = trainer.cosine_decay ? "true" : "false";
    kv["trainer.use_prompt"] = trainer.use_prompt ? "true" : "false";
    kv["trainer.checkpoint_every"] = std::to_string(trainer.checkpoint_every);
    kv["trainer.history_size"] = std::to_string(trainer.history_size);
    return kv;
}

void CodecConfig::set(const std::string& key, const std::string& v) {
    const auto dot = key.find('.');
    const std::string group = dot == std::string::npos ? key : key.substr(0, dot);
    const std::string field = dot == std::string::npos ? "" : key.substr(dot + 1);
    bool ok = true;
    if (key == "preset") {
        *this = from_preset(v);
        return;
    } else if (group == "mel") {
        if (field == "sample_rate") mel.sample_rate = parse_int(key, v);
        else if (field == "hop") mel.hop = parse_int(key, v);
        else if (field == "window") mel.window = parse_int(key, v);
        else if (field == "n_mels") mel.n_mels = parse_int(key, v);
        else if (field == "fmin") mel.fmin = parse_double(key, v);
        else if (field == "fmax") mel.fmax = parse_double(key, v);
        else if (field == "log_floor") mel.log_floor = parse_double(key, v);
        else if (field == "norm_offset") mel.norm_offset = parse_double(key, v);
        else if (field == "norm_scale") mel.norm_scale = parse_double(key, v);
        else ok = false;
    } else if (group == "encoder") {
        ok = set_block(encoder, field, key, v);
    } else if (group == "decoder") {
        if (set_block(decoder.blocks, field, key, v)) {
        } else if (field == "time_freq_dim") decoder.time_freq_dim = parse_int(key, v);
        else if (field == "text_vocab") decoder.text_vocab = parse_int(key, v);
        else if (field == "use_text") decoder.use_text = parse_bool(key, v);
        else if (field == "l1_loss") decoder.l1_loss = parse_bool(key, v);
        else ok = false;
    } else if (group == "quantizer") {
        if (field == "latent_dim") quantizer.latent_dim = parse_int(key, v);
        else if (field == "downsample_factor") quantizer.downsample_factor = parse_int(key, v);
        else if (field == "vq_commit_weight") quantizer.vq_commit_weight = parse_double(key, v);
        else if (field == "variant") {
            if (v == "bsq") quantizer.variant = quant::Variant::bsq;
            else if (v == "vq") quantizer.variant = quant::Variant::vq;
            else throw ConfigError("config key 'quantizer.variant': expected bsq|vq, got '" + v + "'");
        } else ok = false;
    } else if (group == "trainer") {
        if (field == "lr") trainer.lr = parse_double(key, v);
        else if (field == "warmup_steps") trainer.warmup_steps = parse_int(key, v);
        else if (field == "total_steps") trainer.total_steps = parse_int(key, v);
        else if (field == "batch_utterances") trainer.batch_utterances = parse_int(key, v);
        else if (field == "seed") trainer.seed = static_cast<uint64_t>(parse_long(key, v));
        else if (field == "clip_norm") trainer.clip_norm = parse_double(key, v);
        else if (field == "cosine_decay") trainer.cosine_decay = parse_bool(key, v);
        else if (field == "use_prompt") trainer.use_prompt = parse_bool(key, v);
        else if (field == "checkpoint_every") trainer.checkpoint_every = parse_int(key, v);
        else if (field == "history_size") trainer.history_size = parse_int(key, v);
        else ok = false;
    } else {
        ok = false;
    }
    if (!ok) throw ConfigError("unknown config key '" + key + "'");
    sync();
}

std::string CodecConfig::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : to_kv()) j[k] = v;
    return j.dump();
}

CodecConfig CodecConfig::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config JSON: expected an object");
    CodecConfig c = from_preset(j.value("preset", std::string("desk")));
    for (const auto& [k, v] : j.items())
        if (k != "preset") c.set(k, v.get<std::string>());
    c.validate();
    return c;
}

CodecConfig load_config_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path.string());
    std::vector<std::pair<std::string, std::string>> entries;
    std::string line;
    int lineno = 0;
    std::string preset = "desk";
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected 'key = value'");
        const std::string k = trim(line.substr(0, eq)), v = trim(line.substr(eq + 1));
        if (k == "preset") preset = v;
        else entries.emplace_back(k, v);
    }
    CodecConfig c = CodecConfig::from_preset(preset);
    for (const auto& [k, v] : entries) c.set(k, v);
    c.validate();
    return c;
}

void save_config_file(const std::filesystem::path& path, const CodecConfig& cfg) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write config file " + path.string());
    os << "# codec configuration (key = value)\n";
    for (const auto& [k, v] : cfg.to_kv()) os << k << " = " << v << "\n";
}

std::vector<std::string> structural_diff(const CodecConfig& a, const CodecConfig& b) {
    std::vector<std::string> out;
    const auto ka = a.to_kv(), kb = b.to_kv();
    for (const auto& [k, v] : ka) {
        if (k == "preset" || k.rfind("trainer.", 0) == 0) continue;
        const auto it = kb.find(k);
        const std::string other = it == kb.end() ? "<missing>" : it->second;
        if (other != v) out.push_back(k + ": " + v + " vs " + other);
    }
    return out;
}

// Model ----------------------------------------------------------------------

TaDiCodec::TaDiCodec(const CodecConfig& cfg) : cfg_(cfg) {
    cfg_.sync();
    cfg_.validate();
    Rng root(cfg_.trainer.seed);
    Rng r_enc = root.split(1), r_q = root.split(2), r_dec = root.split(3);
    enc_in_ = std::make_unique<nn::Linear>(
        nn::Linear::create(ps_, "encoder.mel_in", cfg_.mel.n_mels, cfg_.encoder.hidden_size, r_enc));
    encoder_ = std::make_unique<nn::Transformer>(ps_, "encoder.transformer", cfg_.encoder, r_enc);
    quantizer_ = std::make_unique<quant::Quantizer>(ps_, "quantizer", cfg_.quantizer, r_q);
    decoder_ = std::make_unique<flow::FlowDecoder>(ps_, "decoder", cfg_.decoder, r_dec);
}

TaDiCodec::Encoded TaDiCodec::encode_graph(const std::vector<const Matrix*>& mels) const {
    const int F = cfg_.quantizer.downsample_factor;
    Encoded out;
    std::vector<Var> xs;
    nn::SequenceLayout layout;
    for (const Matrix* m : mels) {
        if (m->cols != cfg_.mel.n_mels)
            throw InputError("encode: mel has " + std::to_string(m->cols) + " bins, expected " +
                             std::to_string(cfg_.mel.n_mels));
        if (m->rows == 0) throw InputError("encode: empty mel");
        Matrix padded = corpus::pad_frames(*m, F);
        out.frames.push_back(padded.rows);
        layout.add_segment(padded.rows);
        xs.push_back(ag::constant(std::move(padded)));
    }
    auto h = encoder_->forward((*enc_in_)(ag::concat_rows(xs)), layout);
    // Items are contiguous and each is a multiple of F, so one reshape keeps
    // every token inside its own utterance.
    auto latent = quantizer_->project_down(h);
    auto q = quantizer_->quantize(latent);
    out.cond = quantizer_->project_up(q.quantized);
    out.aux_loss = q.aux_loss;
    size_t cursor = 0;
    for (int frames : out.frames) {
        const size_t n = static_cast<size_t>(frames / F);
        out.tokens.emplace_back(q.tokens.begin() + static_cast<long>(cursor),
                                q.tokens.begin() + static_cast<long>(cursor + n));
        cursor += n;
    }
    return out;
}

std::vector<std::vector<int>> TaDiCodec::encode_batch(const std::vector<const Matrix*>& mels) const {
    ag::NoGradGuard guard;
    return encode_graph(mels).tokens;
}

std::vector<int> TaDiCodec::encode(const Matrix& mel) const { return encode_batch({&mel}).front(); }

std::vector<Matrix> TaDiCodec::decode_batch(const std::vector<DecodeRequest>& requests,
                                            const flow::SamplerConfig& sampler, Rng& rng) const {
    ag::NoGradGuard guard;
    const int F = cfg_.quantizer.downsample_factor;
    const long K = cfg_.quantizer.codebook_size();
    std::vector<flow::SampleRequest> reqs;
    std::vector<size_t> live;
    std::vector<Matrix> out(requests.size());
    for (size_t i = 0; i < requests.size(); ++i) {
        const auto& r = requests[i];
        for (int id : r.tokens)
            if (id < 0 || id >= K)
                throw InputError("decode: token id " + std::to_string(id) + " outside [0, " + std::to_string(K) + ")");
        if (r.tokens.empty()) {
            out[i] = Matrix(0, cfg_.mel.n_mels);
            continue;
        }
        if (r.prompt.rows > 0 && r.prompt.cols != cfg_.mel.n_mels) throw InputError("decode: prompt width mismatch");
        if (r.prompt.rows >= static_cast<int>(r.tokens.size()) * F)
            throw InputError("decode: prompt must be shorter than the output");
        flow::SampleRequest s;
        s.tokens_cond = quantizer_->project_up(ag::constant(quantizer_->codes_for(r.tokens)))->value;
        s.text = cfg_.decoder.use_text ? r.text : std::vector<int>{};
        s.prompt = r.prompt.rows > 0 ? r.prompt : Matrix(0, cfg_.mel.n_mels);
        reqs.push_back(std::move(s));
        live.push_back(i);
    }
    if (!reqs.empty()) {
        auto mels = flow::euler_sample(*decoder_, reqs, sampler, rng);
        for (size_t j = 0; j < live.size(); ++j) out[live[j]] = std::move(mels[j]);
    }
    return out;
}

Matrix TaDiCodec::decode(const std::vector<int>& tokens, const std::vector<int>& text, const Matrix& prompt,
                         const flow::SamplerConfig& sampler, Rng& rng) const {
    return decode_batch({DecodeRequest{tokens, text, prompt}}, sampler, rng).front();
}

TaDiCodec::Loss TaDiCodec::training_loss(const std::vector<const corpus::TtsUtterance*>& batch, Rng& rng,
                                         bool use_prompt, std::optional<double> t_override) const {
    if (batch.empty()) throw InputError("training_loss: empty batch");
    std::vector<const Matrix*> mels;
    for (const auto* u : batch) mels.push_back(&u->mel.data);
    auto enc = encode_graph(mels);
    std::vector<flow::FlowBatch> items;
    int row = 0;
    for (size_t i = 0; i < batch.size(); ++i) {
        const int frames = enc.frames[i];
        Matrix target = corpus::pad_frames(batch[i]->mel.data, cfg_.quantizer.downsample_factor);
        auto cond = ag::slice_rows(enc.cond, row, frames);
        row += frames;
        std::vector<int> text = cfg_.decoder.use_text ? batch[i]->text.ids : std::vector<int>{};
        items.push_back(flow::assemble_batch(target, std::move(text), cond, rng, t_override, use_prompt));
    }
    Loss out;
    auto diff = flow::diffusion_loss(*decoder_, items);
    out.diffusion = diff->value.data[0];
    out.total = enc.aux_loss ? ag::add(diff, enc.aux_loss) : diff;
    return out;
}

// Training -------------------------------------------------------------------

Trainer::Trainer(TaDiCodec& model, const TrainerConfig& cfg)
    : model_(&model),
      cfg_(cfg),
      adam_(model.params(), nn::AdamConfig{.lr = cfg.lr,
                                           .warmup_steps = cfg.warmup_steps,
                                           .clip_norm = cfg.clip_norm,
                                           .decay_steps = cfg.cosine_decay ? cfg.total_steps : 0}),
      rng_(Rng(cfg.seed).split(7)) {}

void Trainer::freeze(const std::string& prefix) {
    model_->params().set_frozen(prefix, true);
    if (std::find(frozen_.begin(), frozen_.end(), prefix) == frozen_.end()) frozen_.push_back(prefix);
}

double Trainer::step(const std::vector<corpus::TtsUtterance>& data) {
    if (data.empty()) throw InputError("train: corpus is empty");
    const size_t bs = std::min<size_t>(static_cast<size_t>(cfg_.batch_utterances), data.size());
    std::vector<const corpus::TtsUtterance*> batch;
    while (batch.size() < bs) {
        if (cursor_ >= order_.size() || order_.size() != data.size()) {
            order_.resize(data.size());
            std::iota(order_.begin(), order_.end(), 0);
            std::shuffle(order_.begin(), order_.end(), rng_.engine());
            cursor_ = 0;
        }
        batch.push_back(&data[static_cast<size_t>(order_[cursor_++])]);
    }
    auto& ps = model_->params();
    ps.zero_grad();
    auto loss = model_->training_loss(batch, rng_, cfg_.use_prompt);
    const double value = loss.total->value.data[0];
    if (!std::isfinite(value)) {
        if (!diagnostic_path.empty()) save_checkpoint(diagnostic_path, *model_, this);
        throw DivergenceError("loss became non-finite at step " + std::to_string(steps_taken()) +
                              (diagnostic_path.empty() ? "" : "; diagnostic checkpoint at " + diagnostic_path.string()));
    }
    ag::backward(loss.total);
    adam_.step();
    history_.push_back(value);
    while (static_cast<int>(history_.size()) > std::max(1, cfg_.history_size)) history_.pop_front();
    return value;
}

void Trainer::run(const std::vector<corpus::TtsUtterance>& data, int steps, const Callback& on_step) {
    for (int i = 0; i < steps; ++i) {
        const double loss = step(data);
        if (on_step) on_step(steps_taken(), loss);
        if (cfg_.checkpoint_every > 0 && !checkpoint_path.empty() && steps_taken() % cfg_.checkpoint_every == 0)
            save_checkpoint(checkpoint_path, *model_, this);
    }
}

std::vector<int> Trainer::epoch_state() const {
    std::vector<int> out{static_cast<int>(cursor_)};
    out.insert(out.end(), order_.begin(), order_.end());
    return out;
}

void Trainer::restore(long step, const std::map<std::string, Matrix>& optimizer_arrays, const std::string& rng_state,
                      const std::vector<double>& history, const std::vector<std::string>& frozen,
                      const std::vector<int>& epoch) {
    adam_.import_state(step, optimizer_arrays);
    if (!epoch.empty()) {
        cursor_ = static_cast<size_t>(epoch[0]);
        order_.assign(epoch.begin() + 1, epoch.end());
    }
    if (!rng_state.empty()) rng_.set_state(rng_state);
    history_.assign(history.begin(), history.end());
    for (const auto& p : frozen) freeze(p);
}

void continue_train_decoder(Trainer& trainer, const std::vector<corpus::TtsUtterance>& data, int extra_steps,
                            const Trainer::Callback& on_step) {
    trainer.freeze("encoder.");
    trainer.freeze("quantizer.");
    trainer.run(data, extra_steps, on_step);
}

// Checkpoints ----------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const TaDiCodec& model, const Trainer* trainer) {
    ckpt::CheckpointData d;
    nlohmann::json meta;
    meta["kind"] = "codec";
    meta["config"] = nlohmann::json::parse(model.config().to_json());
    meta["frozen"] = trainer ? trainer->frozen_prefixes() : std::vector<std::string>{};
    d.config_json = meta.dump();
    for (const auto& [name, p] : model.params().items()) d.arrays.emplace_back("param/" + name, p->value);
    if (trainer) {
        auto* t = const_cast<Trainer*>(trainer);
        d.step = static_cast<uint64_t>(trainer->steps_taken());
        d.rng_state = t->rng().state();
        for (auto& kv : t->optimizer().export_state()) d.arrays.push_back(std::move(kv));
        const auto& h = trainer->loss_history();
        Matrix hist(1, static_cast<int>(h.size()));
        std::copy(h.begin(), h.end(), hist.data.begin());
        d.arrays.emplace_back("trainer.loss_history", std::move(hist));
        // Epoch position: [cursor, order...], so a resumed run draws the same batches.
        const auto ep = trainer->epoch_state();
        Matrix epoch(1, static_cast<int>(ep.size()));
        std::copy(ep.begin(), ep.end(), epoch.data.begin());
        d.arrays.emplace_back("trainer.epoch", std::move(epoch));
    }
    ckpt::write_checkpoint(path, d);
}

LoadedCodec load_checkpoint(const std::filesystem::path& path, const CodecConfig* runtime) {
    auto d = ckpt::read_checkpoint(path);
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(d.config_json);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(path.string() + ": config blob is not valid JSON");
    }
    if (meta.value("kind", std::string()) != "codec")
        throw CheckpointError(path.string() + ": not a codec checkpoint (kind '" + meta.value("kind", std::string()) + "')");
    CodecConfig cfg = CodecConfig::from_json(meta["config"].dump());
    if (runtime) {
        const auto diff = structural_diff(cfg, *runtime);
        if (!diff.empty()) {
            std::string msg = path.string() + ": checkpoint config differs from runtime config (checkpoint vs runtime):";
            for (const auto& line : diff) msg += "\n  " + line;
            throw CheckpointError(msg);
        }
    }
    LoadedCodec out;
    out.model = std::make_unique<TaDiCodec>(cfg);
    auto& ps = out.model->params();
    size_t matched = 0;
    for (auto& [name, m] : d.arrays) {
        if (name.rfind("param/", 0) == 0) {
            const std::string pname = name.substr(6);
            if (!ps.contains(pname)) throw CheckpointError(path.string() + ": unexpected array '" + name + "'");
            auto p = ps.get(pname);
            if (p->value.rows != m.rows || p->value.cols != m.cols)
                throw CheckpointError(path.string() + ": array '" + name + "' has shape " + m.shape_str() +
                                      ", expected " + p->value.shape_str());
            p->value = m;
            ++matched;
        } else if (name.rfind("adam.", 0) == 0) {
            out.optimizer[name] = m;
        } else if (name == "trainer.loss_history") {
            out.history = m.data;
        } else if (name == "trainer.epoch") {
            out.epoch.assign(m.data.begin(), m.data.end());
        }
    }
    if (matched != ps.items().size()) throw CheckpointError(path.string() + ": checkpoint is missing parameters");
    out.step = static_cast<long>(d.step);
    out.rng_state = d.rng_state;
    if (meta.contains("frozen")) out.frozen = meta["frozen"].get<std::vector<std::string>>();
    return out;
}

std::unique_ptr<Trainer> LoadedCodec::make_trainer(const TrainerConfig& cfg) const {
    auto t = std::make_unique<Trainer>(*model, cfg);
    t->restore(step, optimizer, rng_state, history, frozen, epoch);
    return t;
}

}  // namespace tdc::codec
