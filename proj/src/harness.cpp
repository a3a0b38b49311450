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


#include "tadicodec/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "tadicodec/lm.hpp"

namespace tdc::harness {

// Rational ----------------------------------------------------------------------------

namespace {

using i128 = __int128;

int64_t narrow(i128 v, const char* what) {
    if (v > INT64_MAX || v < INT64_MIN) throw InputError(std::string("rational overflow in ") + what);
    return static_cast<int64_t>(v);
}

i128 gcd128(i128 a, i128 b) {
    if (a < 0) a = -a;
    if (b < 0) b = -b;
    while (b != 0) {
        const i128 t = a % b;
        a = b;
        b = t;
    }
    return a;
}

Rational reduce(i128 n, i128 d, const char* what) {
    if (d == 0) throw InputError(std::string("division by zero in ") + what);
    if (d < 0) {
        n = -n;
        d = -d;
    }
    const i128 g = gcd128(n, d);
    if (g > 1) {
        n /= g;
        d /= g;
    }
    return {narrow(n, what), narrow(d, what)};
}

std::string i128_to_string(i128 v) {
    if (v == 0) return "0";
    std::string s;
    const bool neg = v < 0;
    if (neg) v = -v;
    while (v > 0) {
        s.push_back(static_cast<char>('0' + static_cast<int>(v % 10)));
        v /= 10;
    }
    if (neg) s.push_back('-');
    std::reverse(s.begin(), s.end());
    return s;
}

}  // namespace

Rational Rational::of(int64_t n, int64_t d) { return reduce(n, d, "Rational::of"); }

Rational Rational::parse(const std::string& text) {
    const auto slash = text.find('/');
    auto parse_int = [&](const std::string& s) -> int64_t {
        if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; }))
            throw InputError("not a non-negative rational: '" + text + "'");
        i128 v = 0;
        for (char c : s) v = v * 10 + (c - '0');
        return narrow(v, "parse");
    };
    if (slash != std::string::npos) return of(parse_int(text.substr(0, slash)), parse_int(text.substr(slash + 1)));
    const auto dot = text.find('.');
    if (dot == std::string::npos) return of(parse_int(text), 1);
    const std::string whole = text.substr(0, dot), frac = text.substr(dot + 1);
    if (frac.empty() || frac.size() > 18) throw InputError("not a non-negative rational: '" + text + "'");
    i128 den = 1;
    for (size_t i = 0; i < frac.size(); ++i) den *= 10;
    const i128 num = static_cast<i128>(whole.empty() ? 0 : parse_int(whole)) * den + parse_int(frac);
    return reduce(num, den, "parse");
}

Rational Rational::operator*(const Rational& o) const {
    return reduce(static_cast<i128>(num) * o.num, static_cast<i128>(den) * o.den, "multiply");
}

Rational Rational::operator/(const Rational& o) const {
    return reduce(static_cast<i128>(num) * o.den, static_cast<i128>(den) * o.num, "divide");
}

std::string Rational::to_decimal() const {
    int64_t d = den;
    int twos = 0, fives = 0;
    while (d % 2 == 0) {
        d /= 2;
        ++twos;
    }
    while (d % 5 == 0) {
        d /= 5;
        ++fives;
    }
    if (d != 1) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.12g", to_double());
        return std::string(buf) + "... (" + std::to_string(num) + "/" + std::to_string(den) + ")";
    }
    const int k = std::max(twos, fives);
    i128 scaled = num;
    for (int i = 0; i < k; ++i) scaled *= 10;
    scaled /= den;  // exact: den divides 10^k
    std::string digits = i128_to_string(scaled);
    if (k == 0) return digits;
    if (static_cast<int>(digits.size()) <= k) digits.insert(0, static_cast<size_t>(k + 1) - digits.size(), '0');
    std::string out = digits.substr(0, digits.size() - static_cast<size_t>(k)) + "." + digits.substr(digits.size() - k);
    while (out.back() == '0') out.pop_back();
    if (out.back() == '.') out.pop_back();
    return out;
}

RateReport rate_report(const Rational& frame_rate, int64_t tokens_per_frame, int64_t bits_per_token) {
    if (tokens_per_frame < 1 || bits_per_token < 1) throw InputError("rate_report: counts must be positive");
    RateReport r;
    r.frame_rate = frame_rate;
    r.tokens_per_frame = Rational::of(tokens_per_frame);
    r.bits_per_token = Rational::of(bits_per_token);
    r.token_rate = frame_rate * r.tokens_per_frame;
    r.bitrate_kbps = r.token_rate * r.bits_per_token / Rational::of(1000);
    return r;
}

RateReport rate_report(const codec::CodecConfig& cfg) {
    const auto fr = Rational::of(cfg.mel.sample_rate,
                                 static_cast<int64_t>(cfg.mel.hop) * cfg.quantizer.downsample_factor);
    return rate_report(fr, 1, cfg.quantizer.latent_dim);
}

std::string RateReport::to_string() const {
    std::ostringstream os;
    os << "frame rate: " << frame_rate.to_decimal() << " Hz\n"
       << "tokens per frame: " << tokens_per_frame.to_decimal() << "\n"
       << "codebook: 2^" << bits_per_token.to_decimal() << " (single codebook)\n"
       << "token rate: " << token_rate.to_decimal() << " tokens/s\n"
       << "bitrate: " << bitrate_kbps.to_decimal() << " kbps\n";
    return os.str();
}

// Reconstruction ---------------------------------------------------------------------------

ReconReport score_mels(const std::vector<Matrix>& generated, const std::vector<const corpus::TtsUtterance*>& refs,
                       const corpus::TemplateMatcher& matcher, const std::vector<int>& skip_frames) {
    if (generated.size() != refs.size() || skip_frames.size() != refs.size())
        throw InputError("score_mels: one generated mel and skip count per reference required");
    ReconReport rep;
    // Pooled target mean over every scored element.
    double sum = 0.0;
    long count = 0;
    for (size_t i = 0; i < refs.size(); ++i) {
        const Matrix& x = refs[i]->mel.data;
        const int rows = std::min(x.rows, generated[i].rows);
        for (int r = skip_frames[i]; r < rows; ++r)
            for (double v : x.row(r)) sum += v, ++count;
    }
    const double mean = count ? sum / static_cast<double>(count) : 0.0;
    double err_total = 0.0, var_total = 0.0;
    for (size_t i = 0; i < refs.size(); ++i) {
        const Matrix& x = refs[i]->mel.data;
        const Matrix& y = generated[i];
        if (y.cols != x.cols) throw InputError("score_mels: bin count mismatch");
        UttRecon u;
        u.utt_id = refs[i]->utt_id;
        double err = 0.0, var = 0.0;
        long n = 0;
        const int rows = std::min(x.rows, y.rows);
        for (int r = skip_frames[i]; r < rows; ++r) {
            const auto xr = x.row(r), yr = y.row(r);
            for (size_t c = 0; c < xr.size(); ++c) {
                err += (yr[c] - xr[c]) * (yr[c] - xr[c]);
                var += (xr[c] - mean) * (xr[c] - mean);
                ++n;
            }
        }
        u.mse = n ? err / static_cast<double>(n) : 0.0;
        u.normalized_mse = var > 0 ? err / var : 0.0;
        err_total += err;
        var_total += var;
        const auto dec = matcher.decode(y);
        u.decoded_symbols = dec.symbols;
        u.accuracy = corpus::TemplateMatcher::accuracy(dec.symbols, refs[i]->text.ids);
        u.offset_error = std::abs(dec.speaker_offset - refs[i]->speaker_offset);
        rep.accuracy += u.accuracy;
        rep.offset_error += u.offset_error;
        rep.utterances.push_back(std::move(u));
    }
    if (!refs.empty()) {
        rep.accuracy /= static_cast<double>(refs.size());
        rep.offset_error /= static_cast<double>(refs.size());
    }
    rep.mse = count ? err_total / static_cast<double>(count) : 0.0;
    rep.normalized_mse = var_total > 0 ? err_total / var_total : 0.0;
    return rep;
}

ReconReport evaluate_reconstruction(const codec::TaDiCodec& model, const std::vector<corpus::TtsUtterance>& data,
                                    const corpus::TemplateMatcher& matcher, const EvalOptions& options) {
    if (options.prompt_fraction < 0.0 || options.prompt_fraction >= 1.0)
        throw InputError("evaluate_reconstruction: prompt fraction must be in [0, 1)");
    Rng rng(options.seed);
    constexpr size_t kChunk = 8;
    std::vector<Matrix> generated;
    std::vector<const corpus::TtsUtterance*> refs;
    std::vector<int> skip;
    for (size_t start = 0; start < data.size(); start += kChunk) {
        const size_t end = std::min(data.size(), start + kChunk);
        std::vector<const Matrix*> mels;
        for (size_t i = start; i < end; ++i) mels.push_back(&data[i].mel.data);
        const auto tokens = model.encode_batch(mels);
        std::vector<codec::TaDiCodec::DecodeRequest> reqs;
        for (size_t i = start; i < end; ++i) {
            const Matrix& x = data[i].mel.data;
            const int pl = static_cast<int>(std::floor(options.prompt_fraction * x.rows));
            Matrix prompt(options.supply_prompt ? pl : 0, x.cols);
            std::copy_n(x.data.begin(), prompt.size(), prompt.data.begin());
            reqs.push_back({tokens[i - start], data[i].text.ids, std::move(prompt)});
            refs.push_back(&data[i]);
            skip.push_back(pl);
        }
        for (auto& m : model.decode_batch(reqs, options.sampler, rng)) generated.push_back(std::move(m));
    }
    return score_mels(generated, refs, matcher, skip);
}

// Gradcheck -------------------------------------------------------------------------------------

double relative_error(double analytic, double numeric, double floor) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

GradcheckReport gradcheck(nn::ParamStore& ps, const std::function<Var()>& build,
                          const std::function<std::vector<int>()>& signature, const GradcheckOptions& options) {
    std::vector<std::pair<std::string, Var>> cands;
    for (const auto& [name, p] : ps.items()) {
        if (!p->requires_grad || p->value.size() == 0) continue;
        bool match = options.prefixes.empty();
        for (const auto& pre : options.prefixes) match = match || name.rfind(pre, 0) == 0;
        if (match) cands.emplace_back(name, p);
    }
    if (cands.empty()) throw InputError("gradcheck: no parameters match the requested prefixes");

    ps.zero_grad();
    auto loss = build();
    if (!std::isfinite(loss->value.data[0])) throw DivergenceError("gradcheck: loss is not finite");
    ag::backward(loss);
    std::vector<Matrix> grads;
    for (const auto& c : cands) grads.push_back(c.second->grad.empty() ? Matrix(c.second->value.rows, c.second->value.cols)
                                                                       : c.second->grad);
    const auto base_sig = signature ? signature() : std::vector<int>{};

    auto eval = [&]() {
        ag::NoGradGuard g;
        const double v = build()->value.data[0];
        if (!std::isfinite(v)) throw DivergenceError("gradcheck: perturbed loss is not finite");
        return std::make_pair(v, signature ? signature() : std::vector<int>{});
    };

    GradcheckReport rep;
    Rng rng(options.seed);
    std::vector<std::pair<double, std::string>> errors;
    while (rep.probes < options.n_probes) {
        const size_t pi = static_cast<size_t>(rng.randint(0, static_cast<int64_t>(cands.size()) - 1));
        auto& p = cands[pi].second;
        const size_t idx = static_cast<size_t>(rng.randint(0, static_cast<int64_t>(p->value.size()) - 1));
        const double orig = p->value.data[idx];
        p->value.data[idx] = orig + options.eps;
        const auto [lp, sp] = eval();
        p->value.data[idx] = orig - options.eps;
        const auto [lm, sm] = eval();
        p->value.data[idx] = orig;
        if (sp != base_sig || sm != base_sig) {
            if (++rep.redrawn > options.max_redraws) throw InternalError("gradcheck: too many sign-boundary redraws");
            continue;
        }
        const double numeric = (lp - lm) / (2.0 * options.eps);
        const double analytic = grads[pi].data[idx];
        const double rel = relative_error(analytic, numeric, 1e-6);
        const double abs_err = std::abs(analytic - numeric);
        rep.max_rel_error = std::max(rep.max_rel_error, rel);
        rep.max_abs_error = std::max(rep.max_abs_error, abs_err);
        std::ostringstream os;
        os << cands[pi].first << "[" << idx << "] analytic=" << analytic << " numeric=" << numeric << " rel=" << rel;
        errors.emplace_back(rel, os.str());
        ++rep.probes;
    }
    std::sort(errors.begin(), errors.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (size_t i = 0; i < std::min<size_t>(3, errors.size()); ++i) rep.worst.push_back(errors[i].second);
    return rep;
}

namespace {

void jitter(nn::ParamStore& ps, double scale, Rng& rng) {
    // Moves zero-initialized heads and gates off their symmetric start so
    // every probed gradient is non-trivial.
    for (const auto& [name, p] : ps.items())
        for (double& v : p->value.data) v += scale * rng.normal();
}

}  // namespace

GradcheckReport run_gradcheck_target(const std::string& target, int n_probes, uint64_t seed) {
    GradcheckOptions opt;
    opt.n_probes = n_probes;
    opt.seed = seed;
    Rng rng(seed);
    if (target == "quadratic") {
        nn::ParamStore ps;
        auto w = ps.create("w", nn::normal_matrix(4, 8, 1.0, rng));
        const Matrix c = nn::normal_matrix(4, 8, 1.0, rng);
        auto build = [&]() { return ag::scale(ag::sum(ag::square(ag::sub(w, ag::constant(c)))), 0.5); };
        return gradcheck(ps, build, {}, opt);
    }
    if (target == "diffusion") {
        auto cfg = codec::CodecConfig::from_preset("tiny");
        cfg.trainer.seed = seed;
        codec::TaDiCodec model(cfg);
        jitter(model.params(), 0.05, rng);
        corpus::CorpusSpec spec;
        spec.seed = seed;
        const auto a = corpus::make_utterance(spec, "g0", {3, 9}, 0.3);
        const auto b = corpus::make_utterance(spec, "g1", {12}, -0.5);
        const std::vector<const corpus::TtsUtterance*> batch{&a, &b};
        auto build = [&]() {
            Rng r(seed + 1);
            return model.training_loss(batch, r, true).total;
        };
        auto sig = [&]() {
            auto toks = model.encode_batch({&a.mel.data, &b.mel.data});
            std::vector<int> flat;
            for (auto& t : toks) flat.insert(flat.end(), t.begin(), t.end());
            return flat;
        };
        opt.prefixes = {"decoder.", "quantizer.up"};
        return gradcheck(model.params(), build, sig, opt);
    }
    lm::LmConfig lc;
    lc.blocks.hidden_size = 32;
    lc.blocks.intermediate_size = 64;
    lc.blocks.n_layers = 2;
    lc.blocks.n_heads = 2;
    lc.blocks.n_kv_heads = 2;
    lc.seed = seed;
    std::vector<lm::LmExample> ex{{{3, 7, 11}, {5, 16000, 42, 42}}, {{9}, {1, 2}}};
    if (target == "ar") {
        lm::ArModel m(lc);
        jitter(m.params(), 0.05, rng);
        auto build = [&]() { return lm::ar_loss(m, ex); };
        return gradcheck(m.params(), build, {}, opt);
    }
    if (target == "mgm") {
        lm::MgmModel m(lc);
        jitter(m.params(), 0.05, rng);
        std::vector<lm::MgmState> states;
        Rng mr(seed + 2);
        for (const auto& e : ex) {
            auto st = lm::mgm_mask(e.tokens, 0.7, mr, lc.vocab);
            if (st.masked_count() == 0) st = lm::mgm_mask(e.tokens, 1.0, mr, lc.vocab);
            states.push_back(std::move(st));
        }
        auto build = [&]() { return lm::mgm_loss_from_states(m, ex, states); };
        return gradcheck(m.params(), build, {}, opt);
    }
    throw ConfigError("unknown gradcheck target '" + target + "' (quadratic|diffusion|ar|mgm)");
}

// Ablations ---------------------------------------------------------------------------------------------

AblationAxis parse_axis(const std::string& name) {
    if (name == "quantizer_variant") return AblationAxis::quantizer_variant;
    if (name == "prompt_on_off") return AblationAxis::prompt_on_off;
    if (name == "frame_rate") return AblationAxis::frame_rate;
    if (name == "inference_steps") return AblationAxis::inference_steps;
    if (name == "decoder_continued_training") return AblationAxis::decoder_continued_training;
    throw ConfigError("unknown ablation axis '" + name +
                      "' (quantizer_variant|prompt_on_off|frame_rate|inference_steps|decoder_continued_training)");
}

std::string axis_name(AblationAxis axis) {
    switch (axis) {
        case AblationAxis::quantizer_variant: return "quantizer_variant";
        case AblationAxis::prompt_on_off: return "prompt_on_off";
        case AblationAxis::frame_rate: return "frame_rate";
        case AblationAxis::inference_steps: return "inference_steps";
        case AblationAxis::decoder_continued_training: return "decoder_continued_training";
    }
    return "?";
}

AblationSpec AblationSpec::defaults(AblationAxis axis) {
    AblationSpec s;
    s.axis = axis;
    switch (axis) {
        case AblationAxis::quantizer_variant: s.values = {"bsq", "vq"}; break;
        case AblationAxis::prompt_on_off: s.values = {"w-prompt", "wo-prompt"}; break;
        case AblationAxis::frame_rate: s.values = {"6.25", "12.5"}; break;
        case AblationAxis::inference_steps: s.values = {"steps50", "steps32", "steps10", "steps5"}; break;
        case AblationAxis::decoder_continued_training: s.values = {"base", "dct"}; break;
    }
    return s;
}

void AblationSpec::validate() const {
    if (values.empty()) throw ConfigError("ablation: empty value list");
    for (const auto& v : values) {
        bool ok = false;
        switch (axis) {
            case AblationAxis::quantizer_variant: ok = v == "bsq" || v == "vq"; break;
            case AblationAxis::prompt_on_off: ok = v == "w-prompt" || v == "wo-prompt"; break;
            case AblationAxis::frame_rate: ok = v == "6.25" || v == "12.5"; break;
            case AblationAxis::inference_steps: {
                const auto& names = flow::SamplerConfig::preset_names();
                ok = std::find(names.begin(), names.end(), v) != names.end();
                break;
            }
            case AblationAxis::decoder_continued_training: ok = v == "base" || v == "dct"; break;
        }
        if (!ok) throw ConfigError("ablation: value '" + v + "' is not valid for axis " + axis_name(axis));
    }
}

namespace {

struct Trained {
    std::unique_ptr<codec::TaDiCodec> model;
    std::unique_ptr<codec::Trainer> trainer;
    double final_loss = 0.0;
};

Trained train_variant(const codec::CodecConfig& cfg, const std::vector<corpus::TtsUtterance>& data, int steps,
                      const AblationOptions& opt, const std::string& label) {
    Trained t;
    t.model = std::make_unique<codec::TaDiCodec>(cfg);
    auto tc = cfg.trainer;
    tc.total_steps = steps;
    t.trainer = std::make_unique<codec::Trainer>(*t.model, tc);
    t.trainer->run(data, steps, [&](long s, double l) {
        t.final_loss = l;
        if (opt.log && (s % 250 == 0 || s == steps)) opt.log(label + " step " + std::to_string(s) + " loss " + std::to_string(l));
    });
    return t;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

AblationTable run_ablation(const AblationSpec& spec, const codec::CodecConfig& base,
                           const std::vector<corpus::TtsUtterance>& train_data,
                           const std::vector<corpus::TtsUtterance>& eval_data, const corpus::TemplateMatcher& matcher,
                           const AblationOptions& options) {
    spec.validate();
    AblationTable table;
    table.axis = axis_name(spec.axis);
    auto attempt = [&](const std::string& variant, const std::function<void(AblationRow&)>& body) {
        AblationRow row;
        row.variant = variant;
        try {
            body(row);
            row.ok = true;
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
        }
        table.rows.push_back(std::move(row));
    };

    // Axes that share one trained model.
    if (spec.axis == AblationAxis::inference_steps || spec.axis == AblationAxis::decoder_continued_training) {
        Trained shared;
        std::string shared_error;
        try {
            shared = train_variant(base, train_data, options.train_steps, options, "shared");
        } catch (const std::exception& e) {
            shared_error = e.what();
        }
        bool continued = false;
        for (const auto& v : spec.values) {
            attempt(v, [&](AblationRow& row) {
                if (!shared.model) throw DivergenceError("shared training failed: " + shared_error);
                auto eval = options.eval;
                if (spec.axis == AblationAxis::inference_steps) eval.sampler = flow::SamplerConfig::preset(v);
                if (v == "dct" && !continued) {
                    codec::continue_train_decoder(*shared.trainer, train_data, options.extra_decoder_steps,
                                                  [&](long, double l) { shared.final_loss = l; });
                    continued = true;
                } else if (v == "base" && continued) {
                    throw ConfigError("'base' must precede 'dct' in the value list");
                }
                row.final_loss = shared.final_loss;
                row.sampler_steps = eval.sampler.n_steps;
                row.report = evaluate_reconstruction(*shared.model, eval_data, matcher, eval);
            });
        }
        return table;
    }

    for (const auto& v : spec.values) {
        attempt(v, [&](AblationRow& row) {
            codec::CodecConfig cfg = base;
            auto eval = options.eval;
            switch (spec.axis) {
                case AblationAxis::quantizer_variant:
                    cfg.quantizer.variant = v == "vq" ? quant::Variant::vq : quant::Variant::bsq;
                    break;
                case AblationAxis::prompt_on_off:
                    cfg.trainer.use_prompt = v == "w-prompt";
                    eval.prompt_fraction = options.prompt_fraction;
                    eval.supply_prompt = v == "w-prompt";
                    break;
                case AblationAxis::frame_rate:
                    cfg.quantizer.downsample_factor = v == "12.5" ? 8 : 16;
                    break;
                default:
                    break;
            }
            cfg.sync();
            cfg.validate();
            auto t = train_variant(cfg, train_data, options.train_steps, options, v);
            row.final_loss = t.final_loss;
            row.sampler_steps = eval.sampler.n_steps;
            row.report = evaluate_reconstruction(*t.model, eval_data, matcher, eval);
        });
    }
    return table;
}

std::string AblationTable::to_text() const {
    std::ostringstream os;
    char line[256];
    std::snprintf(line, sizeof(line), "%-12s %-6s %-7s %-12s %-12s %-10s %-10s\n", "variant", "status", "steps",
                  "final_loss", "norm_mse", "accuracy", "offset_err");
    os << "ablation axis: " << axis << "\n" << line;
    for (const auto& r : rows) {
        if (r.ok)
            std::snprintf(line, sizeof(line), "%-12s %-6s %-7d %-12s %-12s %-10s %-10s\n", r.variant.c_str(), "ok",
                          r.sampler_steps, fmt(r.final_loss).c_str(), fmt(r.report.normalized_mse).c_str(),
                          fmt(r.report.accuracy).c_str(), fmt(r.report.offset_error).c_str());
        else
            std::snprintf(line, sizeof(line), "%-12s %-6s %s\n", r.variant.c_str(), "failed", r.error.c_str());
        os << line;
    }
    return os.str();
}

std::string AblationTable::to_csv() const {
    std::ostringstream os;
    os << "axis,variant,status,sampler_steps,final_loss,normalized_mse,accuracy,offset_error\n";
    for (const auto& r : rows) {
        os << axis << "," << r.variant << "," << (r.ok ? "ok" : "failed") << ",";
        if (r.ok)
            os << r.sampler_steps << "," << fmt(r.final_loss) << "," << fmt(r.report.normalized_mse) << ","
               << fmt(r.report.accuracy) << "," << fmt(r.report.offset_error);
        else
            os << ",,,,";
        os << "\n";
    }
    return os.str();
}

}  // namespace tdc::harness
