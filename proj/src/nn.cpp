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

#include "tadicodec/nn.hpp"

#include <cmath>
#include <cstring>
#include <numbers>

namespace tdc::nn {

// ---------------------------------------------------------------------------
// ParamStore
// ---------------------------------------------------------------------------

Var ParamStore::create(const std::string& name, Matrix init) {
    if (index_.count(name)) throw InternalError("ParamStore: duplicate parameter " + name);
    auto v = ag::leaf(std::move(init));
    index_[name] = params_.size();
    params_.emplace_back(name, v);
    return v;
}

Var ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw InputError("ParamStore: no parameter named " + name);
    return params_[it->second].second;
}

void ParamStore::zero_grad() {
    for (auto& [name, p] : params_)
        if (!p->grad.empty()) std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0);
}

void ParamStore::set_frozen(const std::string& prefix, bool frozen) {
    for (auto& [name, p] : params_)
        if (name.rfind(prefix, 0) == 0) p->requires_grad = !frozen;
}

bool ParamStore::frozen(const std::string& name) const { return !get(name)->requires_grad; }

size_t ParamStore::scalar_count() const {
    size_t n = 0;
    for (const auto& [name, p] : params_) n += p->value.size();
    return n;
}

uint64_t ParamStore::hash(const std::string& prefix) const {
    uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* data, size_t len) {
        const auto* b = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < len; ++i) {
            h ^= b[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& [name, p] : params_) {
        if (name.rfind(prefix, 0) != 0) continue;
        mix(name.data(), name.size());
        mix(p->value.data.data(), p->value.data.size() * sizeof(double));
    }
    return h;
}

void ParamStore::copy_values_from(const ParamStore& other) {
    for (auto& [name, p] : params_) {
        if (!other.contains(name)) continue;
        const auto& src = other.get(name)->value;
        if (!src.same_shape(p->value)) throw InputError("copy_values_from: shape mismatch for " + name);
        p->value.data = src.data;
    }
}

Matrix normal_matrix(int rows, int cols, double stddev, Rng& rng) {
    Matrix m(rows, cols);
    for (auto& v : m.data) v = rng.normal() * stddev;
    return m;
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

Linear Linear::create(ParamStore& ps, const std::string& name, int in, int out, Rng& rng, bool with_bias,
                      double init_scale) {
    Linear l;
    l.weight = ps.create(name + ".weight", normal_matrix(in, out, init_scale / std::sqrt(static_cast<double>(in)), rng));
    if (with_bias) l.bias = ps.create(name + ".bias", Matrix(1, out));
    return l;
}

Linear Linear::zeros(ParamStore& ps, const std::string& name, int in, int out, bool with_bias) {
    Linear l;
    l.weight = ps.create(name + ".weight", Matrix(in, out));
    if (with_bias) l.bias = ps.create(name + ".bias", Matrix(1, out));
    return l;
}

Embedding Embedding::create(ParamStore& ps, const std::string& name, int vocab, int dim, Rng& rng) {
    Embedding e;
    e.table = ps.create(name + ".table", normal_matrix(vocab, dim, 1.0, rng));
    return e;
}

void SequenceLayout::add_segment(int length, int first_position) {
    std::vector<int> pos(static_cast<size_t>(length));
    for (int i = 0; i < length; ++i) pos[i] = first_position + i;
    add_segment(pos);
}

void SequenceLayout::add_segment(std::span<const int> row_positions) {
    const int seg = segment_count();
    segments.push_back({rows(), static_cast<int>(row_positions.size())});
    positions.insert(positions.end(), row_positions.begin(), row_positions.end());
    segment_of_row.insert(segment_of_row.end(), row_positions.size(), seg);
}

void BlockConfig::validate() const {
    if (hidden_size <= 0 || n_layers < 0 || intermediate_size <= 0) throw ConfigError("BlockConfig: sizes must be positive");
    if (n_heads <= 0 || hidden_size % n_heads != 0)
        throw ConfigError("BlockConfig: hidden_size " + std::to_string(hidden_size) + " not divisible by n_heads " +
                          std::to_string(n_heads));
    if (n_kv_heads <= 0 || n_heads % n_kv_heads != 0) throw ConfigError("BlockConfig: n_kv_heads must divide n_heads");
    if (head_dim() % 2 != 0) throw ConfigError("BlockConfig: head dimension must be even for RoPE");
}

AdaNorm AdaNorm::create(ParamStore& ps, const std::string& name, int cond_dim, int hidden) {
    return {Linear::zeros(ps, name + ".scale", cond_dim, hidden), Linear::zeros(ps, name + ".shift", cond_dim, hidden)};
}

Var ada_rmsnorm(const Var& x, const Var& cond, const AdaNorm& proj, const SequenceLayout& layout, double eps) {
    if (!cond) throw InputError("ada_rmsnorm: conditioning required");
    if (cond->value.rows != layout.segment_count())
        throw InputError("ada_rmsnorm: need one conditioning row per segment");
    auto n = ag::rms_normalize(x, eps);
    auto s = ag::gather_rows(proj.to_scale(cond), layout.segment_of_row);
    auto b = ag::gather_rows(proj.to_shift(cond), layout.segment_of_row);
    return ag::add(ag::add(n, ag::mul(n, s)), b);
}

TransformerBlock::TransformerBlock(ParamStore& ps, const std::string& name, const BlockConfig& cfg, Rng& rng)
    : cfg_(cfg) {
    cfg.validate();
    const int h = cfg.hidden_size;
    const int dh = cfg.head_dim();
    for (int i = 0; i < 2; ++i) {
        const std::string nm = name + (i == 0 ? ".attn_norm" : ".mlp_norm");
        if (cfg.norm_mode == NormMode::rms)
            norm_gain_[i] = ps.create(nm + ".gain", Matrix(1, h, 1.0));
        else
            ada_[i] = AdaNorm::create(ps, nm, h, h);
    }
    // Output projections are scaled down with depth so the residual stream
    // stays O(1) at initialization.
    const double out_scale = 1.0 / std::sqrt(2.0 * std::max(1, cfg.n_layers));
    wq_ = Linear::create(ps, name + ".wq", h, cfg.n_heads * dh, rng, false);
    wk_ = Linear::create(ps, name + ".wk", h, cfg.n_kv_heads * dh, rng, false);
    wv_ = Linear::create(ps, name + ".wv", h, cfg.n_kv_heads * dh, rng, false);
    wo_ = Linear::create(ps, name + ".wo", cfg.n_heads * dh, h, rng, false, out_scale);
    w_gate_ = Linear::create(ps, name + ".w_gate", h, cfg.intermediate_size, rng, false);
    w_up_ = Linear::create(ps, name + ".w_up", h, cfg.intermediate_size, rng, false);
    w_down_ = Linear::create(ps, name + ".w_down", cfg.intermediate_size, h, rng, false, out_scale);
}

void TransformerBlock::zero_output_projections() {
    std::fill(wo_.weight->value.data.begin(), wo_.weight->value.data.end(), 0.0);
    std::fill(w_down_.weight->value.data.begin(), w_down_.weight->value.data.end(), 0.0);
}

Var TransformerBlock::normalize(const Var& x, const SequenceLayout& layout, const Var& cond, int which) const {
    if (cfg_.norm_mode == NormMode::rms) return ag::mul_row(ag::rms_normalize(x, cfg_.norm_eps), norm_gain_[which]);
    return ada_rmsnorm(x, cond, ada_[which], layout, cfg_.norm_eps);
}

Var TransformerBlock::forward(const Var& x, const SequenceLayout& layout, const Var& cond) const {
    if (x->value.cols != cfg_.hidden_size || x->value.rows != layout.rows())
        throw InputError("TransformerBlock: input " + x->value.shape_str() + " does not match layout/hidden size");
    if ((cfg_.norm_mode == NormMode::adaptive_rms) != (cond != nullptr))
        throw InputError("TransformerBlock: conditioning must be given exactly when norm mode is adaptive");
    const int dh = cfg_.head_dim();
    auto h = normalize(x, layout, cond, 0);
    auto q = ag::rope(wq_(h), layout.positions, cfg_.n_heads, dh, cfg_.rope_base);
    auto k = ag::rope(wk_(h), layout.positions, cfg_.n_kv_heads, dh, cfg_.rope_base);
    auto v = wv_(h);
    kernels::AttentionShape shape{layout.rows(), cfg_.n_heads, cfg_.n_kv_heads, dh,
                                  cfg_.attention_mode == AttentionMode::causal};
    auto a = ag::attention(q, k, v, layout.segments, shape);
    auto x1 = ag::add(x, wo_(a));
    auto h2 = normalize(x1, layout, cond, 1);
    auto m = w_down_(ag::mul(ag::silu(w_gate_(h2)), w_up_(h2)));
    return ag::add(x1, m);
}

Transformer::Transformer(ParamStore& ps, const std::string& name, const BlockConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    for (int i = 0; i < cfg.n_layers; ++i) blocks_.emplace_back(ps, name + ".layers." + std::to_string(i), cfg, rng);
    if (cfg.norm_mode == NormMode::rms)
        final_gain_ = ps.create(name + ".final_norm.gain", Matrix(1, cfg.hidden_size, 1.0));
    else
        final_ada_ = AdaNorm::create(ps, name + ".final_norm", cfg.hidden_size, cfg.hidden_size);
}

Var Transformer::forward(const Var& x, const SequenceLayout& layout, const Var& cond) const {
    Var h = x;
    for (const auto& b : blocks_) h = b.forward(h, layout, cond);
    if (cfg_.norm_mode == NormMode::rms) return ag::mul_row(ag::rms_normalize(h, cfg_.norm_eps), final_gain_);
    return ada_rmsnorm(h, cond, final_ada_, layout, cfg_.norm_eps);
}

// ---------------------------------------------------------------------------
// Timestep embedding
// ---------------------------------------------------------------------------

TimestepEmbedding::TimestepEmbedding(ParamStore& ps, const std::string& name, int freq_dim, int hidden, Rng& rng)
    : freq_dim_(freq_dim) {
    if (freq_dim <= 0 || freq_dim % 2 != 0) throw ConfigError("TimestepEmbedding: freq_dim must be positive and even");
    fc1_ = Linear::create(ps, name + ".fc1", freq_dim, hidden, rng);
    fc2_ = Linear::create(ps, name + ".fc2", hidden, hidden, rng);
}

Matrix TimestepEmbedding::features(std::span<const double> t, int freq_dim) {
    const int half = freq_dim / 2;
    Matrix f(static_cast<int>(t.size()), freq_dim);
    for (size_t r = 0; r < t.size(); ++r) {
        if (!(t[r] >= 0.0 && t[r] <= 1.0)) throw InputError("timestep must lie in [0,1], got " + std::to_string(t[r]));
        for (int i = 0; i < half; ++i) {
            const double freq = std::exp(-std::log(10000.0) * i / half);
            const double arg = 1000.0 * t[r] * freq;
            f(static_cast<int>(r), i) = std::cos(arg);
            f(static_cast<int>(r), half + i) = std::sin(arg);
        }
    }
    return f;
}

Var TimestepEmbedding::operator()(std::span<const double> t) const {
    auto f = ag::constant(features(t, freq_dim_));
    return fc2_(ag::silu(fc1_(f)));
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

double Adam::current_lr() const {
    const double s = static_cast<double>(step_ + 1);
    double lr = cfg_.lr;
    if (cfg_.warmup_steps > 0) lr *= std::min(1.0, s / cfg_.warmup_steps);
    if (cfg_.decay_steps > 0 && step_ >= cfg_.warmup_steps) {
        // Cosine from lr down to min_lr_ratio·lr, then held.
        const double span = std::max(1, cfg_.decay_steps - cfg_.warmup_steps);
        const double p = std::min(1.0, (s - cfg_.warmup_steps) / span);
        lr *= cfg_.min_lr_ratio + (1.0 - cfg_.min_lr_ratio) * 0.5 * (1.0 + std::cos(std::numbers::pi * p));
    }
    return lr;
}

double Adam::step() {
    double sq = 0.0;
    for (const auto& [name, p] : ps_->items()) {
        if (!p->requires_grad || p->grad.empty()) continue;
        for (double g : p->grad.data) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    const double clip = (cfg_.clip_norm > 0 && norm > cfg_.clip_norm) ? cfg_.clip_norm / norm : 1.0;
    const double lr = current_lr();
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (auto& [name, p] : ps_->items()) {
        if (!p->requires_grad || p->grad.empty()) continue;
        auto& m = m_[name];
        auto& v = v_[name];
        if (m.size() != p->value.size()) {
            m = Matrix(p->value.rows, p->value.cols);
            v = Matrix(p->value.rows, p->value.cols);
        }
        for (size_t i = 0; i < p->value.size(); ++i) {
            const double g = p->grad.data[i] * clip;
            m.data[i] = cfg_.beta1 * m.data[i] + (1.0 - cfg_.beta1) * g;
            v.data[i] = cfg_.beta2 * v.data[i] + (1.0 - cfg_.beta2) * g * g;
            p->value.data[i] -= lr * (m.data[i] / bc1) / (std::sqrt(v.data[i] / bc2) + cfg_.eps);
        }
    }
    return norm;
}

std::vector<std::pair<std::string, Matrix>> Adam::export_state() const {
    std::vector<std::pair<std::string, Matrix>> out;
    for (const auto& [name, m] : m_) out.emplace_back("adam.m/" + name, m);
    for (const auto& [name, v] : v_) out.emplace_back("adam.v/" + name, v);
    return out;
}

void Adam::import_state(long step, const std::map<std::string, Matrix>& arrays) {
    step_ = step;
    m_.clear();
    v_.clear();
    for (const auto& [key, mat] : arrays) {
        if (key.rfind("adam.m/", 0) == 0) m_[key.substr(7)] = mat;
        else if (key.rfind("adam.v/", 0) == 0) v_[key.substr(7)] = mat;
    }
}

}  // namespace tdc::nn
