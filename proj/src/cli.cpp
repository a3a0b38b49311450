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


#include "tadicodec/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "tadicodec/codec.hpp"
#include "tadicodec/corpus.hpp"
#include "tadicodec/harness.hpp"
#include "tadicodec/lm.hpp"

namespace tdc {
namespace {

namespace fs = std::filesystem;
using ag::Matrix;

struct Globals {
    uint64_t seed = 0;
    std::string config;
    std::string corpus_dir;
    std::string out_dir = "out";
    std::string preset;
    std::vector<std::string> overrides;
    bool seed_given = false;
};

// Resolved configuration shared by every subcommand.
struct Context {
    Globals g;
    codec::CodecConfig cfg;

    fs::path out() const {
        fs::create_directories(g.out_dir);
        return g.out_dir;
    }
    fs::path out_file(const std::string& name) const { return out() / name; }

    std::vector<corpus::TtsUtterance> corpus() const {
        if (g.corpus_dir.empty()) throw ConfigError("--corpus-dir is required for this subcommand");
        auto data = corpus::load_manifest(g.corpus_dir);
        if (data.empty()) throw InputError("corpus at " + g.corpus_dir + " is empty");
        return data;
    }

    corpus::CorpusSpec spec() const {
        corpus::CorpusSpec s;
        s.seed = g.seed;
        s.mel = cfg.mel;
        return s;
    }
};

codec::CodecConfig resolve_config(const Globals& g) {
    codec::CodecConfig cfg = g.config.empty() ? codec::CodecConfig::from_preset(g.preset.empty() ? "desk" : g.preset)
                                              : codec::load_config_file(g.config);
    if (!g.config.empty() && !g.preset.empty()) throw ConfigError("--preset and --config are mutually exclusive");
    for (const auto& kv : g.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (g.seed_given) cfg.trainer.seed = g.seed;
    cfg.sync();
    cfg.validate();
    return cfg;
}

std::vector<int> parse_ids(const std::string& text) {
    std::vector<int> ids;
    std::string s = text;
    for (char& c : s)
        if (c == ',') c = ' ';
    std::istringstream is(s);
    std::string tok;
    while (is >> tok) {
        try {
            size_t used = 0;
            ids.push_back(std::stoi(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw ConfigError("not an integer id: '" + tok + "'");
        }
    }
    return ids;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

void log_step(long step, double loss, int every, long total) {
    if (every > 0 && (step % every == 0 || step == total))
        std::fprintf(stderr, "step %ld loss %.6f\n", step, loss);
}

void write_loss_csv(const fs::path& path, const std::vector<std::pair<long, double>>& losses) {
    std::ofstream os(path);
    os << "step,loss\n";
    char buf[64];
    for (const auto& [s, l] : losses) {
        std::snprintf(buf, sizeof buf, "%ld,%.9g\n", s, l);
        os << buf;
    }
}

const corpus::TtsUtterance* find_utt(const std::vector<corpus::TtsUtterance>& data, const std::string& id) {
    for (const auto& u : data)
        if (u.utt_id == id) return &u;
    return nullptr;
}

Matrix prompt_of(const corpus::TtsUtterance* ref, int frames, int bins) {
    if (!ref || frames <= 0) return Matrix(0, bins);
    frames = std::min(frames, ref->mel.frames() - 1);
    Matrix p(frames, bins);
    for (int r = 0; r < frames; ++r)
        for (int c = 0; c < bins; ++c) p(r, c) = ref->mel.data(r, c);
    return p;
}

std::string format_report(const harness::ReconReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "normalized_mse %.6f\nmse %.6f\naccuracy %.6f\noffset_error %.6f\n",
                  r.normalized_mse, r.mse, r.accuracy, r.offset_error);
    return buf;
}

void write_recon_table(const fs::path& path, const harness::ReconReport& r) {
    std::ofstream os(path);
    os << "utt_id,mse,normalized_mse,accuracy,offset_error\n";
    char buf[256];
    for (const auto& u : r.utterances) {
        std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f\n", u.utt_id.c_str(), u.mse, u.normalized_mse,
                      u.accuracy, u.offset_error);
        os << buf;
    }
}

// Subcommands -------------------------------------------------------------------------

struct GenDataOpts {
    int n = 16;
    int min_symbols = 2;
    int max_symbols = 4;
    bool grammar = false;
    std::optional<double> offset;
};

int cmd_gen_data(const Context& ctx, const GenDataOpts& o) {
    const std::string dir = ctx.g.corpus_dir.empty() ? ctx.g.out_dir : ctx.g.corpus_dir;
    corpus::CorpusSpec spec = ctx.spec();
    spec.n_utterances = o.n;
    spec.min_symbols = o.min_symbols;
    spec.max_symbols = o.max_symbols;
    spec.fixed_offset = o.offset;
    spec.validate();
    const auto data = o.grammar ? corpus::generate_grammar_corpus(spec, o.n) : corpus::generate_corpus(spec);
    corpus::save_manifest(data, dir);
    std::printf("wrote %zu utterances to %s\n", data.size(), dir.c_str());
    return 0;
}

struct TrainOpts {
    int steps = -1;
    int log_every = 50;
    std::string resume;
};

int cmd_train(const Context& ctx, const TrainOpts& o) {
    const auto data = ctx.corpus();
    const int steps = o.steps >= 0 ? o.steps : ctx.cfg.trainer.total_steps;
    const auto ckpt = ctx.out_file("codec.ckpt");
    std::unique_ptr<codec::TaDiCodec> model;
    std::unique_ptr<codec::Trainer> trainer;
    if (!o.resume.empty()) {
        auto loaded = codec::load_checkpoint(o.resume, &ctx.cfg);
        trainer = loaded.make_trainer(ctx.cfg.trainer);
        model = std::move(loaded.model);
    } else {
        model = std::make_unique<codec::TaDiCodec>(ctx.cfg);
        trainer = std::make_unique<codec::Trainer>(*model, ctx.cfg.trainer);
    }
    trainer->checkpoint_path = ckpt;
    trainer->diagnostic_path = ctx.out_file("diverged.ckpt");
    std::vector<std::pair<long, double>> losses;
    const long start = trainer->steps_taken();
    trainer->run(data, steps, [&](long s, double l) {
        losses.emplace_back(s, l);
        log_step(s, l, o.log_every, start + steps);
    });
    codec::save_checkpoint(ckpt, *model, trainer.get());
    codec::save_config_file(ctx.out_file("config.txt"), model->config());
    write_loss_csv(ctx.out_file("train_loss.csv"), losses);
    std::printf("trained %d steps; final loss %.6f; checkpoint %s\n", steps,
                losses.empty() ? 0.0 : losses.back().second, ckpt.c_str());
    return 0;
}

struct ContinueOpts {
    std::string checkpoint;
    std::string output;
    int steps = 500;
    int log_every = 50;
};

int cmd_continue(const Context& ctx, const ContinueOpts& o) {
    const auto data = ctx.corpus();
    const fs::path in = o.checkpoint.empty() ? ctx.out_file("codec.ckpt") : fs::path(o.checkpoint);
    auto loaded = codec::load_checkpoint(in, ctx.g.config.empty() ? nullptr : &ctx.cfg);
    auto trainer = loaded.make_trainer(loaded.model->config().trainer);
    const uint64_t frozen_before = loaded.model->params().hash("encoder.") ^ loaded.model->params().hash("quantizer.");
    std::vector<std::pair<long, double>> losses;
    const long start = trainer->steps_taken();
    codec::continue_train_decoder(*trainer, data, o.steps, [&](long s, double l) {
        losses.emplace_back(s, l);
        log_step(s, l, o.log_every, start + o.steps);
    });
    const uint64_t frozen_after = loaded.model->params().hash("encoder.") ^ loaded.model->params().hash("quantizer.");
    if (frozen_before != frozen_after) throw InternalError("frozen parameters changed during decoder training");
    const fs::path out = o.output.empty() ? ctx.out_file("codec_dct.ckpt") : fs::path(o.output);
    codec::save_checkpoint(out, *loaded.model, trainer.get());
    write_loss_csv(ctx.out_file("dct_loss.csv"), losses);
    std::printf("decoder-only steps %d; final loss %.6f; checkpoint %s\n", o.steps,
                losses.empty() ? 0.0 : losses.back().second, out.c_str());
    return 0;
}

int cmd_tokenize(const Context& ctx, const std::string& checkpoint, const std::string& output) {
    const auto data = ctx.corpus();
    auto loaded = codec::load_checkpoint(checkpoint.empty() ? ctx.out_file("codec.ckpt") : fs::path(checkpoint));
    std::vector<quant::TokenRecord> records;
    for (const auto& u : data) records.push_back({u.utt_id, loaded.model->encode(u.mel.data)});
    const fs::path out = output.empty() ? ctx.out_file("tokens.txt") : fs::path(output);
    quant::write_token_file(out, records);
    std::printf("tokenized %zu utterances (%.4g tokens/s) to %s\n", records.size(), loaded.model->config().token_rate(),
                out.c_str());
    return 0;
}

struct DetokOpts {
    std::string checkpoint;
    std::string tokens;
    std::string sampler = "steps32";
    double prompt_fraction = 0.0;
};

int cmd_detokenize(const Context& ctx, const DetokOpts& o) {
    const auto data = ctx.corpus();
    auto loaded = codec::load_checkpoint(o.checkpoint.empty() ? ctx.out_file("codec.ckpt") : fs::path(o.checkpoint));
    const auto& model = *loaded.model;
    const auto records = quant::read_token_file(o.tokens.empty() ? ctx.out_file("tokens.txt") : fs::path(o.tokens),
                                                model.config().quantizer.codebook_size());
    const int F = model.config().quantizer.downsample_factor;
    const int bins = model.config().mel.n_mels;
    std::vector<codec::TaDiCodec::DecodeRequest> reqs;
    for (const auto& rec : records) {
        const auto* ref = find_utt(data, rec.utt_id);
        if (!ref) throw InputError("token file names utterance '" + rec.utt_id + "' absent from the corpus");
        const int prompt = static_cast<int>(o.prompt_fraction * static_cast<double>(rec.ids.size()) * F);
        reqs.push_back({rec.ids, ref->text.ids, prompt_of(ref, prompt, bins)});
    }
    Rng rng = Rng(ctx.g.seed).split(31);
    const auto mels = model.decode_batch(reqs, flow::SamplerConfig::preset(o.sampler), rng);
    const fs::path dir = ctx.out_file("mels");
    fs::create_directories(dir);
    for (size_t i = 0; i < mels.size(); ++i) {
        corpus::write_array(dir / (records[i].utt_id + ".mel.f32"), mels[i]);
        std::printf("%s frames=%d bins=%d\n", records[i].utt_id.c_str(), mels[i].rows, mels[i].cols);
    }
    return 0;
}

struct LmOpts {
    std::string checkpoint;  // codec, used when no token file is given
    std::string tokens;
    int steps = 1000;
    double lr = 1e-3;
    int hidden = 64;
    int layers = 2;
    int heads = 4;
    int batch = 8;
    int log_every = 100;
};

std::vector<lm::LmExample> lm_examples(const Context& ctx, const LmOpts& o, int latent_bits) {
    const auto data = ctx.corpus();
    const fs::path tok = o.tokens.empty() ? ctx.out_file("tokens.txt") : fs::path(o.tokens);
    if (!fs::exists(tok)) throw MissingAssetError("token file not found: " + tok.string() + " (run tokenize first)");
    std::vector<lm::LmExample> ex;
    for (const auto& rec : quant::read_token_file(tok, 1L << latent_bits)) {
        const auto* ref = find_utt(data, rec.utt_id);
        if (!ref) throw InputError("token file names utterance '" + rec.utt_id + "' absent from the corpus");
        ex.push_back({ref->text.ids, rec.ids});
    }
    return ex;
}

int cmd_train_lm(const Context& ctx, const LmOpts& o, const std::string& kind) {
    lm::LmConfig lc;
    lc.blocks.hidden_size = o.hidden;
    lc.blocks.intermediate_size = 2 * o.hidden;
    lc.blocks.n_layers = o.layers;
    lc.blocks.n_heads = o.heads;
    lc.blocks.n_kv_heads = o.heads;
    lc.vocab.latent_bits = ctx.cfg.quantizer.latent_dim;
    lc.seed = ctx.g.seed;
    lc.lr = o.lr;
    lc.batch = o.batch;
    const auto ex = lm_examples(ctx, o, lc.vocab.latent_bits);
    size_t longest = 0;
    for (const auto& e : ex) longest = std::max(longest, e.text.size() + e.tokens.size() + 2);
    lc.max_context = std::max<int>(lc.max_context, static_cast<int>(longest) + 16);
    lc.validate();

    std::vector<std::pair<long, double>> losses;
    auto on_step = [&](long s, double l) {
        losses.emplace_back(s, l);
        log_step(s, l, o.log_every, o.steps);
    };
    const fs::path out = ctx.out_file(kind + ".ckpt");
    const double ratio = lm::LengthHeuristic::fit(ex).ratio;
    if (kind == "ar") {
        lm::ArModel m(lc);
        lm::LmTrainer t(m.params(), lc, [&](std::span<const lm::LmExample> b, Rng&) { return lm::ar_loss(m, b); });
        t.run(ex, o.steps, on_step);
        lm::save_lm(out, kind, lc, m.params(), ratio);
    } else {
        lm::MgmModel m(lc);
        lm::LmTrainer t(m.params(), lc,
                        [&](std::span<const lm::LmExample> b, Rng& r) { return lm::mgm_loss(m, b, r); });
        t.run(ex, o.steps, on_step);
        lm::save_lm(out, kind, lc, m.params(), ratio);
    }
    write_loss_csv(ctx.out_file(kind + "_loss.csv"), losses);
    std::printf("%s model: %d steps; final loss %.6f; checkpoint %s\n", kind.c_str(), o.steps,
                losses.empty() ? 0.0 : losses.back().second, out.c_str());
    return 0;
}

struct TtsOpts {
    std::string codec;
    std::string lm;
    std::string text;
    std::string sampler = "steps32";
    int mgm_steps = 10;
    double temperature = 1.0;
    int top_k = 20;
    int n_tokens = 0;
    int prompt_frames = 0;
};

int cmd_tts(const Context& ctx, const TtsOpts& o) {
    auto codec_ckpt = codec::load_checkpoint(o.codec.empty() ? ctx.out_file("codec.ckpt") : fs::path(o.codec));
    const auto lmod = lm::load_lm(o.lm.empty() ? ctx.out_file("ar.ckpt") : fs::path(o.lm));
    const auto& model = *codec_ckpt.model;
    if (lmod.config.vocab.latent_bits != model.config().quantizer.latent_dim)
        throw InputError("language model and codec disagree on bits per token");

    // Targets: an explicit --text, or every utterance of the corpus.
    std::vector<corpus::TtsUtterance> data;
    std::vector<std::pair<std::string, std::vector<int>>> texts;
    if (!o.text.empty()) {
        texts.emplace_back("text", parse_ids(o.text));
    } else {
        data = ctx.corpus();
        for (const auto& u : data) texts.emplace_back(u.utt_id, u.text.ids);
    }

    Rng rng = Rng(ctx.g.seed).split(41);
    const int bins = model.config().mel.n_mels;
    const lm::LengthHeuristic length{lmod.length_ratio > 0 ? lmod.length_ratio : 2.0};
    std::vector<quant::TokenRecord> records;
    std::vector<codec::TaDiCodec::DecodeRequest> reqs;
    std::ofstream trace_os;
    if (lmod.kind == "mgm") trace_os.open(ctx.out_file("mgm_trace.txt"));
    for (const auto& [id, text] : texts) {
        std::vector<int> toks;
        if (lmod.kind == "ar") {
            const int budget = lmod.config.max_context - static_cast<int>(text.size()) - 2;
            toks = lm::ar_generate(*lmod.ar, text, {o.temperature, o.top_k}, rng,
                                   o.n_tokens > 0 ? std::min(o.n_tokens, budget) : budget);
        } else {
            const int n = o.n_tokens > 0 ? o.n_tokens : length.predict(text.size());
            std::vector<lm::MgmTraceLine> trace;
            toks = lm::mgm_decode(*lmod.mgm, text, n, {1.0, o.mgm_steps}, rng, {o.temperature, false}, &trace);
            trace_os << "# " << id << "\n";
            lm::write_trace(trace_os, trace);
        }
        if (toks.empty()) throw DivergenceError("language model produced no tokens for '" + id + "'");
        records.push_back({id, toks});
        const auto* ref = data.empty() ? nullptr : find_utt(data, id);
        reqs.push_back({toks, text, prompt_of(ref, o.prompt_frames, bins)});
    }
    quant::write_token_file(ctx.out_file("tts_tokens.txt"), records);
    const auto mels = model.decode_batch(reqs, flow::SamplerConfig::preset(o.sampler), rng);
    const fs::path dir = ctx.out_file("tts");
    fs::create_directories(dir);
    for (size_t i = 0; i < mels.size(); ++i) {
        corpus::write_array(dir / (records[i].utt_id + ".mel.f32"), mels[i]);
        std::printf("%s tokens=%zu frames=%d\n", records[i].utt_id.c_str(), records[i].ids.size(), mels[i].rows);
    }
    if (!data.empty()) {
        std::vector<const corpus::TtsUtterance*> refs;
        for (const auto& u : data) refs.push_back(&u);
        const corpus::TemplateMatcher matcher(ctx.spec());
        const auto rep = harness::score_mels(mels, refs, matcher, std::vector<int>(mels.size(), 0));
        std::printf("tts accuracy %.6f offset_error %.6f\n", rep.accuracy, rep.offset_error);
        write_recon_table(ctx.out_file("tts_report.csv"), rep);
    }
    return 0;
}

struct EvalOpts {
    std::string checkpoint;
    std::string sampler = "steps32";
    double prompt_fraction = 0.0;
    int limit = 0;
};

int cmd_eval(const Context& ctx, const EvalOpts& o) {
    auto data = ctx.corpus();
    if (o.limit > 0 && static_cast<size_t>(o.limit) < data.size()) data.resize(o.limit);
    auto loaded = codec::load_checkpoint(o.checkpoint.empty() ? ctx.out_file("codec.ckpt") : fs::path(o.checkpoint));
    harness::EvalOptions eo;
    eo.sampler = flow::SamplerConfig::preset(o.sampler);
    eo.seed = ctx.g.seed;
    eo.prompt_fraction = o.prompt_fraction;
    const corpus::TemplateMatcher matcher(ctx.spec());
    const auto rep = harness::evaluate_reconstruction(*loaded.model, data, matcher, eo);
    const std::string summary = format_report(rep);
    std::ofstream(ctx.out_file("eval.txt")) << summary;
    write_recon_table(ctx.out_file("eval.csv"), rep);
    std::printf("%s", summary.c_str());
    return 0;
}

struct AblateOpts {
    std::string axis = "prompt_on_off";
    std::string values;
    int steps = -1;
    int extra_steps = 500;
    double prompt_fraction = 0.25;
    std::string sampler = "steps32";
    int eval_limit = 0;
};

int cmd_ablate(const Context& ctx, const AblateOpts& o) {
    const auto data = ctx.corpus();
    harness::AblationSpec spec = harness::AblationSpec::defaults(harness::parse_axis(o.axis));
    if (!o.values.empty()) spec.values = split_list(o.values);
    spec.validate();
    harness::AblationOptions ao;
    ao.train_steps = o.steps >= 0 ? o.steps : ctx.cfg.trainer.total_steps;
    ao.extra_decoder_steps = o.extra_steps;
    ao.prompt_fraction = o.prompt_fraction;
    ao.eval.sampler = flow::SamplerConfig::preset(o.sampler);
    ao.eval.seed = ctx.g.seed;
    ao.log = [](const std::string& line) { std::fprintf(stderr, "%s\n", line.c_str()); };
    auto eval_data = data;
    if (o.eval_limit > 0 && static_cast<size_t>(o.eval_limit) < eval_data.size()) eval_data.resize(o.eval_limit);
    const corpus::TemplateMatcher matcher(ctx.spec());
    const auto table = harness::run_ablation(spec, ctx.cfg, data, eval_data, matcher, ao);
    const std::string stem = "ablation_" + harness::axis_name(spec.axis);
    std::ofstream(ctx.out_file(stem + ".txt")) << table.to_text();
    std::ofstream(ctx.out_file(stem + ".csv")) << table.to_csv();
    std::printf("%s", table.to_text().c_str());
    for (const auto& r : table.rows)
        if (!r.ok) return 2;
    return 0;
}

int cmd_gradcheck(const Context& ctx, const std::string& target, int probes, double tol) {
    const std::vector<std::string> targets =
        target == "all" ? std::vector<std::string>{"quadratic", "diffusion", "ar", "mgm"} : split_list(target);
    bool ok = true;
    for (const auto& t : targets) {
        const auto r = harness::run_gradcheck_target(t, probes, ctx.g.seed);
        const bool pass = r.max_rel_error < tol;
        ok = ok && pass;
        std::printf("%-10s probes=%d redrawn=%d max_rel_error=%.3e max_abs_error=%.3e %s\n", t.c_str(), r.probes,
                    r.redrawn, r.max_rel_error, r.max_abs_error, pass ? "ok" : "FAILED");
    }
    if (!ok) std::fprintf(stderr, "gradcheck: relative error above %.1e\n", tol);
    return ok ? 0 : 2;
}

int cmd_rate(const Context& ctx, const std::string& frame_rate, int64_t tpf, int64_t bits) {
    if (bits <= 0) bits = ctx.cfg.quantizer.latent_dim;
    harness::Rational fr;
    if (frame_rate.empty()) {
        fr = harness::rate_report(ctx.cfg).frame_rate;
    } else {
        try {
            fr = harness::Rational::parse(frame_rate);
        } catch (const InputError& e) {
            throw ConfigError(std::string("--frame-rate: ") + e.what());
        }
    }
    std::printf("%s", harness::rate_report(fr, tpf, bits).to_string().c_str());
    return 0;
}

}  // namespace

int cli(int argc, char** argv) {
    CLI::App app{"Text-aware diffusion speech tokenizer: data, training, tokenization, TTS and evaluation."};
    app.name("tadicodec");
    app.require_subcommand(1, 1);
    app.fallthrough();

    Globals g;
    app.add_option("--seed", g.seed, "Seed for every random stream");
    app.add_option("--config", g.config, "Key-value config file");
    app.add_option("--preset", g.preset, "Config preset: tiny|small|desk|paper-scale (default desk)");
    app.add_option("--set", g.overrides, "Config override key=value (repeatable)");
    app.add_option("--corpus-dir", g.corpus_dir, "Corpus directory (index.jsonl + arrays)");
    app.add_option("--out-dir", g.out_dir, "Directory for checkpoints and reports")->capture_default_str();

    auto samplers = CLI::IsMember(flow::SamplerConfig::preset_names());

    GenDataOpts gd;
    auto* c_gen = app.add_subcommand("gen-data", "Synthesize a corpus into --corpus-dir");
    c_gen->add_option("--n", gd.n, "Utterance count")->capture_default_str();
    c_gen->add_option("--min-symbols", gd.min_symbols)->capture_default_str();
    c_gen->add_option("--max-symbols", gd.max_symbols)->capture_default_str();
    c_gen->add_flag("--grammar", gd.grammar, "Deterministic three-slot grammar corpus");
    c_gen->add_option("--offset", gd.offset, "Fixed speaker offset in semitones");

    TrainOpts tr;
    auto* c_train = app.add_subcommand("train", "Train the codec; writes codec.ckpt");
    c_train->add_option("--steps", tr.steps, "Optimizer steps (default trainer.total_steps)");
    c_train->add_option("--log-every", tr.log_every)->capture_default_str();
    c_train->add_option("--resume", tr.resume, "Continue from this checkpoint");

    ContinueOpts ct;
    auto* c_cont = app.add_subcommand("continue-train-decoder", "Decoder-only training with encoder/quantizer frozen");
    c_cont->add_option("--checkpoint", ct.checkpoint, "Input checkpoint (default <out>/codec.ckpt)");
    c_cont->add_option("--output", ct.output, "Output checkpoint (default <out>/codec_dct.ckpt)");
    c_cont->add_option("--steps", ct.steps)->capture_default_str();
    c_cont->add_option("--log-every", ct.log_every)->capture_default_str();

    std::string tok_ckpt, tok_out;
    auto* c_tok = app.add_subcommand("tokenize", "Encode every corpus utterance to token ids");
    c_tok->add_option("--checkpoint", tok_ckpt, "Codec checkpoint (default <out>/codec.ckpt)");
    c_tok->add_option("--output", tok_out, "Token file (default <out>/tokens.txt)");

    DetokOpts dt;
    auto* c_detok = app.add_subcommand("detokenize", "Decode a token file to mel arrays under <out>/mels");
    c_detok->add_option("--checkpoint", dt.checkpoint, "Codec checkpoint (default <out>/codec.ckpt)");
    c_detok->add_option("--tokens", dt.tokens, "Token file (default <out>/tokens.txt)");
    c_detok->add_option("--sampler", dt.sampler)->check(samplers)->capture_default_str();
    c_detok->add_option("--prompt-fraction", dt.prompt_fraction, "Leading fraction of the reference used as prompt")
        ->check(CLI::Range(0.0, 0.99));

    LmOpts ar, mgm;
    mgm.steps = 1000;
    auto add_lm = [&](CLI::App* c, LmOpts& o) {
        c->add_option("--tokens", o.tokens, "Token file (default <out>/tokens.txt)");
        c->add_option("--steps", o.steps)->capture_default_str();
        c->add_option("--lr", o.lr)->capture_default_str();
        c->add_option("--hidden", o.hidden)->capture_default_str();
        c->add_option("--layers", o.layers)->capture_default_str();
        c->add_option("--heads", o.heads)->capture_default_str();
        c->add_option("--batch", o.batch)->capture_default_str();
        c->add_option("--log-every", o.log_every)->capture_default_str();
    };
    auto* c_ar = app.add_subcommand("train-ar", "Train the autoregressive text-to-token model; writes ar.ckpt");
    add_lm(c_ar, ar);
    auto* c_mgm = app.add_subcommand("train-mgm", "Train the masked generative model; writes mgm.ckpt");
    add_lm(c_mgm, mgm);

    TtsOpts tt;
    auto* c_tts = app.add_subcommand("tts", "Text -> tokens (AR or MGM) -> mel");
    c_tts->add_option("--codec", tt.codec, "Codec checkpoint (default <out>/codec.ckpt)");
    c_tts->add_option("--lm", tt.lm, "AR or MGM checkpoint (default <out>/ar.ckpt)");
    c_tts->add_option("--text", tt.text, "Comma/space separated text ids (default: every corpus utterance)");
    c_tts->add_option("--sampler", tt.sampler)->check(samplers)->capture_default_str();
    c_tts->add_option("--mgm-steps", tt.mgm_steps)->check(CLI::PositiveNumber)->capture_default_str();
    c_tts->add_option("--temperature", tt.temperature, "<= 0 decodes greedily")->capture_default_str();
    c_tts->add_option("--top-k", tt.top_k)->capture_default_str();
    c_tts->add_option("--n-tokens", tt.n_tokens, "Token count (MGM) or cap (AR)");
    c_tts->add_option("--prompt-frames", tt.prompt_frames, "Prompt frames taken from the reference utterance");

    EvalOpts ev;
    auto* c_eval = app.add_subcommand("eval", "Reconstruction metrics; writes eval.txt and eval.csv");
    c_eval->add_option("--checkpoint", ev.checkpoint, "Codec checkpoint (default <out>/codec.ckpt)");
    c_eval->add_option("--sampler", ev.sampler)->check(samplers)->capture_default_str();
    c_eval->add_option("--prompt-fraction", ev.prompt_fraction)->check(CLI::Range(0.0, 0.99));
    c_eval->add_option("--limit", ev.limit, "Evaluate only the first n utterances");

    AblateOpts ab;
    auto* c_abl = app.add_subcommand("ablate", "Run one ablation axis; writes ablation_<axis>.txt/.csv");
    c_abl->add_option("--axis", ab.axis,
                      "quantizer_variant|prompt_on_off|frame_rate|inference_steps|decoder_continued_training")
        ->capture_default_str();
    c_abl->add_option("--values", ab.values, "Comma-separated values (default: the axis's standard rows)");
    c_abl->add_option("--steps", ab.steps, "Training steps per variant (default trainer.total_steps)");
    c_abl->add_option("--extra-steps", ab.extra_steps, "Decoder-only steps for the dct axis")->capture_default_str();
    c_abl->add_option("--prompt-fraction", ab.prompt_fraction)->check(CLI::Range(0.0, 0.99))->capture_default_str();
    c_abl->add_option("--sampler", ab.sampler)->check(samplers)->capture_default_str();
    c_abl->add_option("--eval-limit", ab.eval_limit, "Evaluate on the first n utterances only");

    std::string gc_target = "all";
    int gc_probes = 20;
    double gc_tol = 1e-3;
    auto* c_gc = app.add_subcommand("gradcheck", "Finite-difference gradient oracle");
    c_gc->add_option("--target", gc_target, "quadratic|diffusion|ar|mgm|all")->capture_default_str();
    c_gc->add_option("--probes", gc_probes)->check(CLI::PositiveNumber)->capture_default_str();
    c_gc->add_option("--tol", gc_tol)->capture_default_str();

    std::string rate_fr;
    int64_t rate_tpf = 1, rate_bits = 0;
    auto* c_rate = app.add_subcommand("rate", "Exact frame/token/bit rate report");
    c_rate->add_option("--frame-rate", rate_fr, "Hz, decimal or p/q (default: from config)");
    c_rate->add_option("--tokens-per-frame", rate_tpf)->check(CLI::PositiveNumber)->capture_default_str();
    c_rate->add_option("--bits", rate_bits, "Bits per token (default: latent dimension)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }
    g.seed_given = app.count("--seed") > 0;

    try {
        Context ctx{g, resolve_config(g)};
        if (c_gen->parsed()) return cmd_gen_data(ctx, gd);
        if (c_train->parsed()) return cmd_train(ctx, tr);
        if (c_cont->parsed()) return cmd_continue(ctx, ct);
        if (c_tok->parsed()) return cmd_tokenize(ctx, tok_ckpt, tok_out);
        if (c_detok->parsed()) return cmd_detokenize(ctx, dt);
        if (c_ar->parsed()) return cmd_train_lm(ctx, ar, "ar");
        if (c_mgm->parsed()) return cmd_train_lm(ctx, mgm, "mgm");
        if (c_tts->parsed()) return cmd_tts(ctx, tt);
        if (c_eval->parsed()) return cmd_eval(ctx, ev);
        if (c_abl->parsed()) return cmd_ablate(ctx, ab);
        if (c_gc->parsed()) return cmd_gradcheck(ctx, gc_target, gc_probes, gc_tol);
        if (c_rate->parsed()) return cmd_rate(ctx, rate_fr, rate_tpf, rate_bits);
        std::cerr << app.help();
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace tdc
