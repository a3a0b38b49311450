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

#include "tadicodec/quantizer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace tdc::quant {

void QuantizerConfig::validate() const {
    if (latent_dim < 1 || latent_dim > 24) throw ConfigError("QuantizerConfig: latent_dim must be in [1, 24]");
    if (downsample_factor < 1) throw ConfigError("QuantizerConfig: downsample_factor must be >= 1");
    if (model_dim < 1 || cond_dim < 1) throw ConfigError("QuantizerConfig: model_dim and cond_dim must be >= 1");
    if (vq_commit_weight < 0) throw ConfigError("QuantizerConfig: vq_commit_weight must be >= 0");
}

std::vector<double> sphere_project(std::span<const double> h) {
    double ss = 0.0;
    for (double v : h) ss += v * v;
    std::vector<double> u(h.begin(), h.end());
    if (ss == 0.0) {
        std::fill(u.begin(), u.end(), 1.0 / std::sqrt(static_cast<double>(h.size())));
        return u;
    }
    const double inv = 1.0 / std::sqrt(ss);
    for (auto& v : u) v *= inv;
    return u;
}

int token_index(std::span<const double> h) {
    int k = 0;
    for (size_t i = 0; i < h.size(); ++i)
        if (h[i] >= 0.0) k |= 1 << i;
    return k;
}

std::vector<double> code_of_index(long k, int latent_dim) {
    if (latent_dim < 1 || k < 0 || k >= (1L << latent_dim))
        throw InputError("code_of_index: id " + std::to_string(k) + " outside [0, 2^" + std::to_string(latent_dim) + ")");
    const double a = 1.0 / std::sqrt(static_cast<double>(latent_dim));
    std::vector<double> c(static_cast<size_t>(latent_dim));
    for (int i = 0; i < latent_dim; ++i) c[i] = ((k >> i) & 1) ? a : -a;
    return c;
}

BsqOutput bsq_quantize(const Matrix& h) {
    BsqOutput out{Matrix(h.rows, h.cols), {}};
    const double a = 1.0 / std::sqrt(static_cast<double>(h.cols));
    for (int r = 0; r < h.rows; ++r) {
        const auto u = sphere_project(h.row(r));
        for (int c = 0; c < h.cols; ++c) out.quantized(r, c) = a * sign_of(u[c]);
        out.tokens.push_back(token_index(u));
    }
    return out;
}

Var bsq_quantize(const Var& h, std::vector<int>* tokens) {
    const int L = h->value.cols;
    auto u = ag::normalize_rows(h);
    if (tokens) {
        tokens->clear();
        for (int r = 0; r < u->value.rows; ++r) tokens->push_back(token_index(u->value.row(r)));
    }
    return ag::scale(ag::ste_sign(u), 1.0 / std::sqrt(static_cast<double>(L)));
}

VqOutput vq_quantize(const Var& h, const Var& codebook, double commit_weight) {
    const Matrix& H = h->value;
    const Matrix& C = codebook->value;
    if (H.cols != C.cols) throw InputError("vq_quantize: latent width differs from codebook width");
    VqOutput out;
    out.tokens.resize(static_cast<size_t>(H.rows));
    Matrix chosen(H.rows, H.cols);
    for (int r = 0; r < H.rows; ++r) {
        double best = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (int k = 0; k < C.rows; ++k) {
            double d = 0.0;
            for (int c = 0; c < H.cols; ++c) {
                const double e = H(r, c) - C(k, c);
                d += e * e;
            }
            if (d < best) {  // strict: the lowest index wins ties
                best = d;
                arg = k;
            }
        }
        out.tokens[r] = arg;
        std::copy(C.row(arg).begin(), C.row(arg).end(), chosen.row(r).begin());
    }
    out.quantized = ag::straight_through(h, chosen);
    std::vector<unsigned char> all(static_cast<size_t>(H.rows), 1);
    // masked_regression averages over rows·cols; rescale to a per-row squared norm.
    const double per_row = static_cast<double>(H.cols);
    out.commit_loss = ag::scale(ag::masked_regression(h, chosen, all), commit_weight * per_row);
    out.codebook_loss = ag::scale(ag::masked_regression(ag::gather_rows(codebook, out.tokens), H, all), per_row);
    return out;
}

int distinct_tokens(std::span<const int> ids) {
    return static_cast<int>(std::unordered_set<int>(ids.begin(), ids.end()).size());
}

Quantizer::Quantizer(nn::ParamStore& ps, const std::string& name, const QuantizerConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    const int F = cfg.downsample_factor;
    down_ = nn::Linear::create(ps, name + ".down", F * cfg.model_dim, cfg.latent_dim, rng);
    up_ = nn::Linear::create(ps, name + ".up", cfg.latent_dim, F * cfg.cond_dim, rng);
    if (cfg.variant == Variant::vq)
        codebook_ = ps.create(name + ".codebook",
                              nn::normal_matrix(static_cast<int>(cfg.codebook_size()), cfg.latent_dim,
                                                1.0 / std::sqrt(static_cast<double>(cfg.latent_dim)), rng));
}

Var Quantizer::project_down(const Var& encoder_out) const {
    const int F = cfg_.downsample_factor;
    const Matrix& x = encoder_out->value;
    if (x.cols != cfg_.model_dim) throw InputError("project_down: width " + std::to_string(x.cols) + " != model_dim");
    if (x.rows % F != 0)
        throw InternalError("project_down: " + std::to_string(x.rows) + " frames is not a multiple of " + std::to_string(F));
    return down_(ag::reshape(encoder_out, x.rows / F, F * x.cols));
}

Var Quantizer::project_up(const Var& quantized) const {
    const int F = cfg_.downsample_factor;
    if (quantized->value.cols != cfg_.latent_dim) throw InputError("project_up: latent width mismatch");
    return ag::reshape(up_(quantized), quantized->value.rows * F, cfg_.cond_dim);
}

Quantizer::Output Quantizer::quantize(const Var& h) const {
    Output out;
    if (cfg_.variant == Variant::bsq) {
        out.quantized = bsq_quantize(h, &out.tokens);
        return out;
    }
    auto vq = vq_quantize(h, codebook_, cfg_.vq_commit_weight);
    out.quantized = vq.quantized;
    out.tokens = std::move(vq.tokens);
    out.aux_loss = ag::add(vq.commit_loss, vq.codebook_loss);
    return out;
}

Matrix Quantizer::codes_for(std::span<const int> tokens) const {
    Matrix m(static_cast<int>(tokens.size()), cfg_.latent_dim);
    for (size_t r = 0; r < tokens.size(); ++r) {
        if (tokens[r] < 0 || tokens[r] >= cfg_.codebook_size())
            throw InputError("token id " + std::to_string(tokens[r]) + " outside codebook of size " +
                             std::to_string(cfg_.codebook_size()));
        if (cfg_.variant == Variant::bsq) {
            const auto c = code_of_index(tokens[r], cfg_.latent_dim);
            std::copy(c.begin(), c.end(), m.row(static_cast<int>(r)).begin());
        } else {
            const auto row = codebook_->value.row(tokens[r]);
            std::copy(row.begin(), row.end(), m.row(static_cast<int>(r)).begin());
        }
    }
    return m;
}

void write_token_file(const std::filesystem::path& path, const std::vector<TokenRecord>& records) {
    std::ofstream os(path);
    if (!os) throw InputError("write_token_file: cannot open " + path.string());
    for (const auto& r : records) {
        if (r.utt_id.empty() || r.utt_id.find_first_of(" \t\n") != std::string::npos)
            throw InputError("write_token_file: utterance id must be a non-empty word");
        os << r.utt_id;
        for (int id : r.ids) os << ' ' << id;
        os << '\n';
    }
    if (!os) throw InputError("write_token_file: write failed for " + path.string());
}

std::vector<TokenRecord> read_token_file(const std::filesystem::path& path, long codebook_size) {
    std::ifstream is(path);
    if (!is) throw MissingAssetError("token file not found: " + path.string());
    std::vector<TokenRecord> out;
    std::string line;
    long lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        TokenRecord rec;
        ls >> rec.utt_id;
        std::string word;
        while (ls >> word) {
            size_t used = 0;
            long v = 0;
            try {
                v = std::stol(word, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != word.size() || v < 0 || (codebook_size > 0 && v >= codebook_size))
                throw ParseError("token file " + path.string() + ": bad token '" + word + "'", lineno);
            rec.ids.push_back(static_cast<int>(v));
        }
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace tdc::quant
