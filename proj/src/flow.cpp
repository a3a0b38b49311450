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

#include "tadicodec/flow.hpp"

#include <cmath>

namespace tdc::flow {

const std::vector<std::string>& SamplerConfig::preset_names() {
    static const std::vector<std::string> names{"steps5", "steps10", "steps25", "steps32", "steps50"};
    return names;
}

SamplerConfig SamplerConfig::preset(const std::string& name) {
    for (const auto& n : preset_names())
        if (n == name) return {std::stoi(name.substr(5))};
    throw ConfigError("unknown sampler preset '" + name + "' (expected steps5|steps10|steps25|steps32|steps50)");
}

void SamplerConfig::validate() const {
    if (n_steps < 1) throw ConfigError("SamplerConfig: n_steps must be >= 1, got " + std::to_string(n_steps));
}

Matrix interpolate(const Matrix& x, const Matrix& eps, double t) {
    if (!x.same_shape(eps)) throw InputError("interpolate: shape mismatch " + x.shape_str() + " vs " + eps.shape_str());
    if (!(t >= 0.0 && t <= 1.0)) throw InputError("interpolate: t outside [0,1]");
    Matrix out(x.rows, x.cols);
    for (size_t i = 0; i < x.size(); ++i) out.data[i] = t * x.data[i] + (1.0 - t) * eps.data[i];
    return out;
}

Matrix velocity_target(const Matrix& x, const Matrix& eps) {
    if (!x.same_shape(eps)) throw InputError("velocity_target: shape mismatch");
    Matrix v(x.rows, x.cols);
    for (size_t i = 0; i < x.size(); ++i) v.data[i] = x.data[i] - eps.data[i];
    return v;
}

int sample_prompt_len(int total_frames, Rng& rng) {
    if (total_frames <= 0) return 0;
    return static_cast<int>(std::floor(rng.uniform() * 0.25 * total_frames));
}

FlowBatch assemble_batch(const Matrix& x, std::vector<int> text, Var tokens_cond, Rng& rng,
                         std::optional<double> t_override, bool use_prompt) {
    if (tokens_cond && tokens_cond->value.rows != x.rows)
        throw InputError("assemble_batch: conditioning has " + std::to_string(tokens_cond->value.rows) +
                         " frames, target has " + std::to_string(x.rows));
    FlowBatch b;
    b.x = x;
    b.t = t_override ? *t_override : rng.uniform();
    if (!(b.t >= 0.0 && b.t <= 1.0)) throw InputError("assemble_batch: t outside [0,1]");
    b.eps = Matrix(x.rows, x.cols);
    for (auto& e : b.eps.data) e = rng.normal();
    b.prompt_len = use_prompt ? sample_prompt_len(x.rows, rng) : 0;
    b.x_t = interpolate(x, b.eps, b.t);
    for (int r = 0; r < b.prompt_len; ++r) std::copy(x.row(r).begin(), x.row(r).end(), b.x_t.row(r).begin());
    b.v = velocity_target(x, b.eps);
    b.loss_mask.assign(static_cast<size_t>(x.rows), 1);
    for (int r = 0; r < b.prompt_len; ++r) b.loss_mask[r] = 0;
    b.text = std::move(text);
    b.tokens_cond = std::move(tokens_cond);
    return b;
}

void DecoderConfig::validate() const {
    blocks.validate();
    if (blocks.attention_mode != nn::AttentionMode::bidirectional)
        throw ConfigError("decoder attention must be bidirectional");
    if (blocks.norm_mode != nn::NormMode::adaptive_rms) throw ConfigError("decoder norm must be adaptive RMSNorm");
    if (mel_dim < 1 || text_vocab < 1) throw ConfigError("DecoderConfig: mel_dim and text_vocab must be positive");
    if (time_freq_dim < 2 || time_freq_dim % 2 != 0) throw ConfigError("DecoderConfig: time_freq_dim must be even");
}

FlowDecoder::FlowDecoder(nn::ParamStore& ps, const std::string& name, const DecoderConfig& cfg, Rng& rng)
    : cfg_((cfg.validate(), cfg)),
      text_embed_(nn::Embedding::create(ps, name + ".text_embed", cfg.text_vocab, cfg.blocks.hidden_size, rng)),
      mel_in_(nn::Linear::create(ps, name + ".mel_in", cfg.mel_dim, cfg.blocks.hidden_size, rng)),
      prompt_embed_(ps.create(name + ".prompt_embed", nn::normal_matrix(2, cfg.blocks.hidden_size, 0.02, rng))),
      time_embed_(ps, name + ".time_embed", cfg.time_freq_dim, cfg.blocks.hidden_size, rng),
      transformer_(ps, name + ".transformer", cfg.blocks, rng),
      head_(nn::Linear::zeros(ps, name + ".head", cfg.blocks.hidden_size, cfg.mel_dim)) {}

Var FlowDecoder::forward(std::span<const DecoderItem> items) const {
    if (items.empty()) throw InputError("FlowDecoder: empty batch");
    const int h = cfg_.blocks.hidden_size;
    std::vector<Var> xs, conds;
    std::vector<int> prompt_flag, text_ids;
    std::vector<double> ts;
    for (const auto& it : items) {
        if (!it.x_t || it.x_t->cols != cfg_.mel_dim) throw InputError("FlowDecoder: frame width must equal mel_dim");
        if (!it.tokens_cond || it.tokens_cond->value.rows != it.x_t->rows || it.tokens_cond->value.cols != h)
            throw InternalError("FlowDecoder: token conditioning does not match the frame stream");
        if (it.prompt_len < 0 || it.prompt_len > it.x_t->rows) throw InputError("FlowDecoder: bad prompt length");
        xs.push_back(ag::constant(*it.x_t));
        conds.push_back(it.tokens_cond);
        for (int r = 0; r < it.x_t->rows; ++r) prompt_flag.push_back(r < it.prompt_len ? 1 : 0);
        if (cfg_.use_text && it.text)
            for (int id : *it.text) {
                if (id < 0 || id >= cfg_.text_vocab) throw InputError("FlowDecoder: text id out of range");
                text_ids.push_back(id);
            }
        ts.push_back(it.t);
    }
    auto frames = ag::add(ag::add(mel_in_(ag::concat_rows(xs)), ag::concat_rows(conds)),
                          ag::gather_rows(prompt_embed_, prompt_flag));
    Var text = text_ids.empty() ? nullptr : text_embed_(text_ids);

    nn::SequenceLayout layout;
    std::vector<Var> parts;
    std::vector<int> speech_rows;
    int frame_pos = 0, text_pos = 0;
    for (const auto& it : items) {
        const int n_text = (cfg_.use_text && it.text) ? static_cast<int>(it.text->size()) : 0;
        const int n_frames = it.x_t->rows;
        if (n_text > 0) parts.push_back(ag::slice_rows(text, text_pos, n_text));
        parts.push_back(ag::slice_rows(frames, frame_pos, n_frames));
        const int base = layout.rows();
        for (int r = 0; r < n_frames; ++r) speech_rows.push_back(base + n_text + r);
        layout.add_segment(n_text + n_frames, 0);
        text_pos += n_text;
        frame_pos += n_frames;
    }
    auto seq = parts.size() == 1 ? parts.front() : ag::concat_rows(parts);
    auto cond = time_embed_(ts);
    auto out = transformer_.forward(seq, layout, cond);
    return head_(ag::gather_rows(out, speech_rows));
}

std::atomic<long>& empty_mask_events() {
    static std::atomic<long> events{0};
    return events;
}

Var diffusion_loss(const FlowDecoder& decoder, std::span<const FlowBatch> batch) {
    std::vector<DecoderItem> items;
    std::vector<unsigned char> mask;
    int total = 0;
    for (const auto& b : batch) {
        items.push_back({&b.x_t, b.tokens_cond, b.prompt_len, &b.text, b.t});
        mask.insert(mask.end(), b.loss_mask.begin(), b.loss_mask.end());
        total += b.x.rows;
    }
    Matrix target(total, decoder.config().mel_dim);
    int row = 0;
    for (const auto& b : batch) {
        std::copy(b.v.data.begin(), b.v.data.end(), target.data.begin() + static_cast<long>(row) * target.cols);
        row += b.v.rows;
    }
    if (std::find(mask.begin(), mask.end(), 1) == mask.end()) ++empty_mask_events();
    auto pred = decoder.forward(items);
    return ag::masked_regression(pred, target, mask, decoder.config().l1_loss);
}

std::vector<Matrix> euler_integrate(std::vector<Matrix> state, const std::vector<Matrix>& prompts,
                                    const SamplerConfig& cfg, const VelocityField& field) {
    cfg.validate();
    if (prompts.size() != state.size()) throw InputError("euler_integrate: one prompt per state required");
    auto clamp = [&]() {
        for (size_t i = 0; i < state.size(); ++i) {
            if (prompts[i].rows >= state[i].rows && prompts[i].rows > 0)
                throw InputError("euler_integrate: prompt must be shorter than the output");
            if (prompts[i].rows > 0 && prompts[i].cols != state[i].cols) throw InputError("euler_integrate: prompt width");
            std::copy(prompts[i].data.begin(), prompts[i].data.end(), state[i].data.begin());
        }
    };
    clamp();
    const double dt = 1.0 / cfg.n_steps;
    for (int k = 0; k < cfg.n_steps; ++k) {
        const double t = k * dt;
        const auto vel = field(state, t);
        for (size_t i = 0; i < state.size(); ++i) {
            if (!vel[i].same_shape(state[i])) throw InternalError("euler_integrate: velocity shape mismatch");
            for (size_t j = 0; j < state[i].size(); ++j) state[i].data[j] += dt * vel[i].data[j];
        }
        clamp();
    }
    return state;
}

std::vector<Matrix> euler_sample(const FlowDecoder& decoder, const std::vector<SampleRequest>& requests,
                                 const SamplerConfig& cfg, Rng& rng) {
    cfg.validate();
    ag::NoGradGuard no_grad;
    const int d = decoder.config().mel_dim;
    std::vector<Matrix> start, prompts;
    std::vector<Var> conds;
    for (const auto& r : requests) {
        Matrix eps(r.tokens_cond.rows, d);
        for (auto& e : eps.data) e = rng.normal();
        start.push_back(std::move(eps));
        prompts.push_back(r.prompt.rows > 0 ? r.prompt : Matrix(0, d));
        conds.push_back(ag::constant(r.tokens_cond));
    }
    auto field = [&](const std::vector<Matrix>& xs, double t) {
        std::vector<DecoderItem> items;
        for (size_t i = 0; i < xs.size(); ++i)
            items.push_back({&xs[i], conds[i], prompts[i].rows, &requests[i].text, t});
        const auto v = decoder.forward(items)->value;
        std::vector<Matrix> out;
        int row = 0;
        for (const auto& x : xs) {
            Matrix m(x.rows, x.cols);
            std::copy_n(v.data.begin() + static_cast<long>(row) * d, x.size(), m.data.begin());
            out.push_back(std::move(m));
            row += x.rows;
        }
        return out;
    };
    return euler_integrate(std::move(start), prompts, cfg, field);
}

}  // namespace tdc::flow
