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

#include "tadicodec/corpus.hpp"

#include <fftw3.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numbers>

#include "json.hpp"

namespace tdc::corpus {

namespace {

using cplx = std::complex<double>;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

int reflect_index(long i, long n) {
    if (n == 1) return 0;
    const long period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    if (i >= n) i = period - i;
    return static_cast<int>(i);
}

std::vector<double> hann(int n) {
    std::vector<double> w(static_cast<size_t>(n));
    for (int k = 0; k < n; ++k) w[k] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * k / n);
    return w;
}

// FFTW plans are created once per size under a lock; executing a plan on new
// arrays is thread-safe.
class FftPlans {
public:
    static FftPlans& get(int n) {
        static std::mutex mu;
        static std::vector<std::unique_ptr<FftPlans>> cache;
        std::lock_guard<std::mutex> lock(mu);
        for (auto& p : cache)
            if (p->n_ == n) return *p;
        cache.emplace_back(new FftPlans(n));
        return *cache.back();
    }
    void forward(double* in, cplx* out) const {
        fftw_execute_dft_r2c(r2c_, in, reinterpret_cast<fftw_complex*>(out));
    }
    // Unnormalized inverse; destroys `in`.
    void inverse(cplx* in, double* out) const { fftw_execute_dft_c2r(c2r_, reinterpret_cast<fftw_complex*>(in), out); }

private:
    explicit FftPlans(int n) : n_(n) {
        auto* buf = fftw_alloc_real(static_cast<size_t>(n));
        auto* spec = fftw_alloc_complex(static_cast<size_t>(n / 2 + 1));
        r2c_ = fftw_plan_dft_r2c_1d(n, buf, spec, FFTW_ESTIMATE | FFTW_UNALIGNED);
        c2r_ = fftw_plan_dft_c2r_1d(n, spec, buf, FFTW_ESTIMATE | FFTW_UNALIGNED);
        fftw_free(buf);
        fftw_free(spec);
    }
    int n_;
    fftw_plan r2c_;
    fftw_plan c2r_;
};

// Complex STFT, frames centered at t·hop with reflection padding.
std::vector<std::vector<cplx>> stft(std::span<const double> x, const MelConfig& cfg, int frames) {
    const int n = cfg.window;
    const auto w = hann(n);
    const auto& plans = FftPlans::get(n);
    std::vector<std::vector<cplx>> out(static_cast<size_t>(frames), std::vector<cplx>(static_cast<size_t>(n / 2 + 1)));
    std::vector<double> buf(static_cast<size_t>(n));
    const long len = static_cast<long>(x.size());
    for (int t = 0; t < frames; ++t) {
        const long start = static_cast<long>(t) * cfg.hop - n / 2;
        for (int k = 0; k < n; ++k) buf[k] = x[reflect_index(start + k, len)] * w[k];
        plans.forward(buf.data(), out[t].data());
    }
    return out;
}

// Weighted overlap-add inverse of `stft`.
std::vector<double> istft(std::vector<std::vector<cplx>> spec, const MelConfig& cfg, long length) {
    const int n = cfg.window;
    const auto w = hann(n);
    const auto& plans = FftPlans::get(n);
    std::vector<double> acc(static_cast<size_t>(length), 0.0), norm(static_cast<size_t>(length), 0.0);
    std::vector<double> buf(static_cast<size_t>(n));
    for (size_t t = 0; t < spec.size(); ++t) {
        plans.inverse(spec[t].data(), buf.data());
        const long start = static_cast<long>(t) * cfg.hop - n / 2;
        for (int k = 0; k < n; ++k) {
            const long i = start + k;
            if (i < 0 || i >= length) continue;
            acc[i] += buf[k] / n * w[k];
            norm[i] += w[k] * w[k];
        }
    }
    for (long i = 0; i < length; ++i) acc[i] = norm[i] > 1e-8 ? acc[i] / norm[i] : 0.0;
    return acc;
}

}  // namespace

// ---------------------------------------------------------------------------
// Mel features
// ---------------------------------------------------------------------------

void MelConfig::validate() const {
    if (sample_rate <= 0 || hop <= 0 || window <= 0 || n_mels <= 0)
        throw ConfigError("MelConfig: sample_rate, hop, window and n_mels must be positive");
    if (window % 2 != 0) throw ConfigError("MelConfig: window must be even");
    if (!(fmin >= 0.0 && fmax > fmin && fmax <= sample_rate / 2.0))
        throw ConfigError("MelConfig: need 0 <= fmin < fmax <= sample_rate/2");
    if (!(log_floor > 0.0) || norm_scale == 0.0) throw ConfigError("MelConfig: log_floor must be > 0, norm_scale != 0");
}

double MelConfig::floor_value() const { return round_f32(norm_scale * (std::log10(log_floor) + norm_offset)); }

std::vector<double> mel_center_frequencies(const MelConfig& cfg) {
    const double lo = hz_to_mel(cfg.fmin), hi = hz_to_mel(cfg.fmax);
    std::vector<double> c(static_cast<size_t>(cfg.n_mels));
    for (int m = 0; m < cfg.n_mels; ++m) c[m] = mel_to_hz(lo + (hi - lo) * (m + 1) / (cfg.n_mels + 1));
    return c;
}

Matrix mel_filterbank(const MelConfig& cfg) {
    cfg.validate();
    const int bins = cfg.window / 2 + 1;
    const double lo = hz_to_mel(cfg.fmin), hi = hz_to_mel(cfg.fmax);
    std::vector<double> edges(static_cast<size_t>(cfg.n_mels + 2));
    for (int i = 0; i < cfg.n_mels + 2; ++i) edges[i] = mel_to_hz(lo + (hi - lo) * i / (cfg.n_mels + 1));
    Matrix fb(cfg.n_mels, bins);
    for (int m = 0; m < cfg.n_mels; ++m) {
        const double l = edges[m], c = edges[m + 1], r = edges[m + 2];
        const double area = 2.0 / (r - l);
        for (int k = 0; k < bins; ++k) {
            const double f = static_cast<double>(k) * cfg.sample_rate / cfg.window;
            double v = 0.0;
            if (f > l && f <= c) v = (f - l) / (c - l);
            else if (f > c && f < r) v = (r - f) / (r - c);
            fb(m, k) = v * area;
        }
    }
    return fb;
}

MelSpectrogram mel_spectrogram(std::span<const double> waveform, const MelConfig& cfg) {
    cfg.validate();
    if (waveform.empty()) throw InputError("mel_spectrogram: empty waveform");
    bool any_finite = false;
    for (double v : waveform) {
        if (std::isfinite(v)) any_finite = true;
        else if (!std::isnan(v)) throw InputError("mel_spectrogram: infinite sample");
    }
    if (!any_finite) throw InputError("mel_spectrogram: waveform contains no finite samples");
    for (double v : waveform)
        if (std::isnan(v)) throw InputError("mel_spectrogram: NaN sample");

    const long len = static_cast<long>(waveform.size());
    const int frames = static_cast<int>((len + cfg.hop - 1) / cfg.hop);
    const auto spec = stft(waveform, cfg, frames);
    const Matrix fb = mel_filterbank(cfg);
    const int bins = cfg.window / 2 + 1;
    // Each triangle is nonzero on one contiguous run of FFT bins.
    std::vector<std::pair<int, int>> support(static_cast<size_t>(cfg.n_mels), {0, 0});
    for (int m = 0; m < cfg.n_mels; ++m) {
        int lo = bins, hi = 0;
        for (int k = 0; k < bins; ++k)
            if (fb(m, k) != 0.0) {
                lo = std::min(lo, k);
                hi = k + 1;
            }
        if (hi > lo) support[m] = {lo, hi};
    }
    MelSpectrogram out{Matrix(frames, cfg.n_mels), cfg};
    std::vector<double> power(static_cast<size_t>(bins));
    for (int t = 0; t < frames; ++t) {
        for (int k = 0; k < bins; ++k) power[k] = std::norm(spec[t][k]);
        for (int m = 0; m < cfg.n_mels; ++m) {
            double acc = 0.0;
            for (int k = support[m].first; k < support[m].second; ++k) acc += fb(m, k) * power[k];
            out.data(t, m) = round_f32(cfg.norm_scale * (std::log10(std::max(acc, cfg.log_floor)) + cfg.norm_offset));
        }
    }
    return out;
}

Matrix pad_frames(const Matrix& mel, int factor) {
    if (factor < 1) throw ConfigError("pad_frames: factor must be >= 1");
    if (mel.rows == 0) throw InputError("pad_frames: empty mel");
    const int target = (mel.rows + factor - 1) / factor * factor;
    Matrix out(target, mel.cols);
    std::copy(mel.data.begin(), mel.data.end(), out.data.begin());
    for (int r = mel.rows; r < target; ++r)
        std::copy(mel.row(mel.rows - 1).begin(), mel.row(mel.rows - 1).end(), out.row(r).begin());
    return out;
}

std::vector<double> griffin_lim(const MelSpectrogram& mel, int iters, uint64_t seed, std::vector<double>* convergence) {
    const MelConfig& cfg = mel.config;
    cfg.validate();
    if (mel.frames() < 1 || mel.bins() != cfg.n_mels) throw InputError("griffin_lim: mel does not match its config");
    if (iters < 0) throw InputError("griffin_lim: negative iteration count");
    const int bins = cfg.window / 2 + 1;
    const Matrix fb = mel_filterbank(cfg);

    Eigen::MatrixXd F(cfg.n_mels, bins);
    for (int m = 0; m < cfg.n_mels; ++m)
        for (int k = 0; k < bins; ++k) F(m, k) = fb(m, k);
    const Eigen::MatrixXd pinv = F.completeOrthogonalDecomposition().pseudoInverse();

    // Target magnitudes. Bands sitting at the floor carry no energy.
    std::vector<std::vector<double>> mag(static_cast<size_t>(mel.frames()), std::vector<double>(static_cast<size_t>(bins)));
    for (int t = 0; t < mel.frames(); ++t) {
        Eigen::VectorXd p(cfg.n_mels);
        for (int m = 0; m < cfg.n_mels; ++m) {
            const double pw = std::pow(10.0, mel.data(t, m) / cfg.norm_scale - cfg.norm_offset);
            p(m) = pw <= cfg.log_floor * (1.0 + 1e-4) ? 0.0 : pw;
        }
        const Eigen::VectorXd lin = pinv * p;
        for (int k = 0; k < bins; ++k) mag[t][k] = std::sqrt(std::max(lin(k), 0.0));
    }

    const long length = static_cast<long>(mel.frames()) * cfg.hop;
    Rng rng(seed);
    std::vector<std::vector<cplx>> spec(mag.size(), std::vector<cplx>(static_cast<size_t>(bins)));
    for (size_t t = 0; t < mag.size(); ++t)
        for (int k = 0; k < bins; ++k) spec[t][k] = std::polar(mag[t][k], 2.0 * std::numbers::pi * rng.uniform());
    std::vector<double> x = istft(spec, cfg, length);
    double target_norm = 0.0;
    for (const auto& row : mag)
        for (double v : row) target_norm += v * v;
    target_norm = std::sqrt(target_norm);
    for (int it = 0; it < iters; ++it) {
        auto est = stft(x, cfg, mel.frames());
        double err = 0.0;
        for (size_t t = 0; t < est.size(); ++t) {
            for (int k = 0; k < bins; ++k) {
                const double a = std::abs(est[t][k]);
                err += (a - mag[t][k]) * (a - mag[t][k]);
                est[t][k] = a > 1e-12 ? est[t][k] / a * mag[t][k] : cplx(mag[t][k], 0.0);
            }
        }
        if (convergence) convergence->push_back(target_norm > 0 ? std::sqrt(err) / target_norm : 0.0);
        x = istft(std::move(est), cfg, length);
    }
    return x;
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

void CorpusSpec::validate() const {
    mel.validate();
    if (n_utterances < 1) throw ConfigError("CorpusSpec: n_utterances must be >= 1");
    if (vocab_size <= kFirstSymbolId) throw ConfigError("CorpusSpec: vocabulary has no acoustic symbols");
    if (min_symbols < 1 || max_symbols < min_symbols) throw ConfigError("CorpusSpec: bad symbols-per-utterance range");
    if (frames_per_symbol < 1) throw ConfigError("CorpusSpec: frames_per_symbol must be >= 1");
    if (!(f_low > 0 && f_high >= f_low)) throw ConfigError("CorpusSpec: bad template frequency range");
    if (max_speaker_offset < 0) throw ConfigError("CorpusSpec: max_speaker_offset must be >= 0");
    if (!(std::abs(chirp) < 2.0) || decay_rate < 0) throw ConfigError("CorpusSpec: chirp must be in (-2, 2), decay_rate >= 0");
    if (fixed_symbols) {
        if (fixed_symbols->empty()) throw ConfigError("CorpusSpec: fixed_symbols is empty");
        for (int s : *fixed_symbols)
            if (s < kFirstSymbolId || s >= vocab_size)
                throw ConfigError("CorpusSpec: symbol " + std::to_string(s) + " is not an acoustic symbol");
    }
}

namespace {
constexpr int kShapeClasses = 6;
}  // namespace

SymbolTemplate symbol_template(const CorpusSpec& spec, int symbol_id) {
    if (symbol_id < kFirstSymbolId || symbol_id >= spec.vocab_size)
        throw InputError("symbol_template: id " + std::to_string(symbol_id) + " has no template");
    const int j = symbol_id - kFirstSymbolId;
    // Six shape classes (3 chirp directions x 2 envelopes) per base pitch;
    // base pitches are spaced widely enough that the speaker offset range
    // never carries one onto its neighbour.
    const int n_bases = (spec.symbol_count() + kShapeClasses - 1) / kShapeClasses;
    const int b = j / kShapeClasses;
    SymbolTemplate t;
    t.base_hz = n_bases > 1 ? spec.f_low * std::pow(spec.f_high / spec.f_low, static_cast<double>(b) / (n_bases - 1))
                            : spec.f_low;
    constexpr double kChirpSign[3] = {0.0, 1.0, -1.0};
    t.chirp = spec.chirp * kChirpSign[j % 3];
    t.decaying = (j / 3) % 2 == 1;
    return t;
}

std::vector<double> render_symbol(const CorpusSpec& spec, int symbol_id, double offset_semitones) {
    const SymbolTemplate tp = symbol_template(spec, symbol_id);
    const long n = static_cast<long>(spec.frames_per_symbol) * spec.mel.hop;
    const double shift = std::pow(2.0, offset_semitones / 12.0);
    const double sr = spec.mel.sample_rate;
    const long fade = std::min<long>(n / 4, static_cast<long>(0.005 * sr));
    std::vector<double> w(static_cast<size_t>(n));
    double phase = 0.0;
    for (long k = 0; k < n; ++k) {
        const double tau = static_cast<double>(k) / n;
        const double f = tp.base_hz * shift * (1.0 + tp.chirp * (tau - 0.5));
        double env = tp.decaying ? std::exp(-spec.decay_rate * tau) : 1.0;
        if (fade > 0) {
            if (k < fade) env *= 0.5 - 0.5 * std::cos(std::numbers::pi * k / fade);
            if (n - 1 - k < fade) env *= 0.5 - 0.5 * std::cos(std::numbers::pi * (n - 1 - k) / fade);
        }
        w[k] = round_f32(spec.amplitude * env * (std::sin(phase) + 0.4 * std::sin(2.0 * phase)));
        phase += 2.0 * std::numbers::pi * f / sr;
        if (phase > 2.0 * std::numbers::pi) phase -= 2.0 * std::numbers::pi;
    }
    return w;
}

TtsUtterance make_utterance(const CorpusSpec& spec, const std::string& utt_id, std::vector<int> symbols,
                            double offset_semitones) {
    TtsUtterance u;
    u.utt_id = utt_id;
    u.speaker_offset = offset_semitones;
    for (int s : symbols) {
        const auto part = render_symbol(spec, s, offset_semitones);
        u.waveform.insert(u.waveform.end(), part.begin(), part.end());
    }
    u.text = {std::move(symbols), spec.vocab_size};
    u.mel = mel_spectrogram(u.waveform, spec.mel);
    u.duration_frames = u.mel.frames();
    return u;
}

std::vector<TtsUtterance> generate_corpus(const CorpusSpec& spec) {
    spec.validate();
    std::vector<TtsUtterance> out(static_cast<size_t>(spec.n_utterances));
    const Rng root(spec.seed);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < spec.n_utterances; ++i) {
        Rng rng = root.split(static_cast<uint64_t>(i));
        std::vector<int> symbols;
        if (spec.fixed_symbols) {
            symbols = *spec.fixed_symbols;
        } else {
            const int count = static_cast<int>(rng.randint(spec.min_symbols, spec.max_symbols));
            for (int k = 0; k < count; ++k) symbols.push_back(static_cast<int>(rng.randint(kFirstSymbolId, spec.vocab_size - 1)));
        }
        const double offset = spec.fixed_offset ? *spec.fixed_offset
                                                : rng.uniform(-spec.max_speaker_offset, spec.max_speaker_offset);
        char id[32];
        std::snprintf(id, sizeof(id), "utt_%04d", i);
        out[i] = make_utterance(spec, id, std::move(symbols), offset);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

namespace {
constexpr uint32_t kArrayMagic = 0x41434454;  // "TDCA"
constexpr uint32_t kDtypeF32 = 1;

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}
uint32_t get_u32(const unsigned char* b) {
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 | static_cast<uint32_t>(b[2]) << 16 |
           static_cast<uint32_t>(b[3]) << 24;
}

nlohmann::json mel_config_json(const MelConfig& c) {
    return {{"sample_rate", c.sample_rate}, {"hop", c.hop},           {"window", c.window},
            {"n_mels", c.n_mels},           {"fmin", c.fmin},         {"fmax", c.fmax},
            {"log_floor", c.log_floor},     {"norm_offset", c.norm_offset}, {"norm_scale", c.norm_scale}};
}
MelConfig mel_config_from_json(const nlohmann::json& j) {
    MelConfig c;
    c.sample_rate = j.at("sample_rate");
    c.hop = j.at("hop");
    c.window = j.at("window");
    c.n_mels = j.at("n_mels");
    c.fmin = j.at("fmin");
    c.fmax = j.at("fmax");
    c.log_floor = j.at("log_floor");
    c.norm_offset = j.at("norm_offset");
    c.norm_scale = j.at("norm_scale");
    return c;
}
}  // namespace

std::vector<int> grammar_symbols(int index) {
    if (index < 0 || index >= 64) throw InputError("grammar_symbols: index must be in [0, 64)");
    const int choice[3] = {index / 16, (index / 4) % 4, index % 4};
    std::vector<int> out;
    // Slot k, choice c -> pattern index 4k + c, spread 5 apart over the bank.
    for (int k = 0; k < 3; ++k) out.push_back(kFirstSymbolId + 5 * (4 * k + choice[k]));
    return out;
}

std::vector<TtsUtterance> generate_grammar_corpus(const CorpusSpec& spec, int n) {
    spec.validate();
    if (n < 1 || n > 64) throw ConfigError("grammar corpus: n must be in [1, 64]");
    if (spec.symbol_count() < 56) throw ConfigError("grammar corpus: needs a vocabulary of at least 59 ids");
    std::vector<TtsUtterance> out(static_cast<size_t>(n));
    const double offset = spec.fixed_offset.value_or(0.0);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) {
        char id[32];
        std::snprintf(id, sizeof(id), "gram_%04d", i);
        out[static_cast<size_t>(i)] = make_utterance(spec, id, grammar_symbols(i), offset);
    }
    return out;
}

void write_array(const std::filesystem::path& path, const Matrix& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("write_array: cannot open " + path.string());
    put_u32(os, kArrayMagic);
    put_u32(os, kDtypeF32);
    put_u32(os, static_cast<uint32_t>(m.rows));
    put_u32(os, static_cast<uint32_t>(m.cols));
    std::vector<unsigned char> bytes(m.size() * 4);
    for (size_t i = 0; i < m.size(); ++i) {
        const float f = static_cast<float>(m.data[i]);
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<unsigned char>(bits >> (8 * b));
    }
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw InputError("write_array: write failed for " + path.string());
}

Matrix read_array(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingAssetError("array file not found: " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (bytes.size() < 16) throw ParseError("array file " + path.string() + ": truncated header");
    if (get_u32(bytes.data()) != kArrayMagic) throw ParseError("array file " + path.string() + ": bad magic");
    if (get_u32(bytes.data() + 4) != kDtypeF32) throw ParseError("array file " + path.string() + ": unsupported dtype");
    const uint32_t rows = get_u32(bytes.data() + 8), cols = get_u32(bytes.data() + 12);
    const size_t n = static_cast<size_t>(rows) * cols;
    if (bytes.size() != 16 + n * 4)
        throw ParseError("array file " + path.string() + ": expected " + std::to_string(n) + " floats, found " +
                         std::to_string((bytes.size() - 16) / 4));
    Matrix m(static_cast<int>(rows), static_cast<int>(cols));
    for (size_t i = 0; i < n; ++i) {
        const uint32_t bits = get_u32(bytes.data() + 16 + i * 4);
        float f;
        std::memcpy(&f, &bits, 4);
        m.data[i] = f;
    }
    return m;
}

void save_manifest(const std::vector<TtsUtterance>& utts, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "arrays");
    std::ofstream index(dir / "index.jsonl");
    if (!index) throw InputError("save_manifest: cannot write " + (dir / "index.jsonl").string());
    const MelConfig mc = utts.empty() ? MelConfig{} : utts.front().mel.config;
    index << nlohmann::json{{"format", "tadicodec-corpus"}, {"version", 1}, {"mel", mel_config_json(mc)}}.dump() << '\n';
    for (const auto& u : utts) {
        const std::string mel_rel = "arrays/" + u.utt_id + ".mel.f32";
        const std::string wav_rel = "arrays/" + u.utt_id + ".wav.f32";
        write_array(dir / mel_rel, u.mel.data);
        write_array(dir / wav_rel, Matrix(static_cast<int>(u.waveform.size()), 1, u.waveform));
        nlohmann::json j{{"utt_id", u.utt_id},
                         {"text", u.text.ids},
                         {"vocab_size", u.text.vocab_size},
                         {"mel", mel_rel},
                         {"wav", wav_rel},
                         {"frames", u.mel.frames()},
                         {"samples", u.waveform.size()},
                         {"duration_frames", u.duration_frames},
                         {"speaker_offset", u.speaker_offset}};
        index << j.dump() << '\n';
    }
    if (!index) throw InputError("save_manifest: write failed");
}

std::vector<TtsUtterance> load_manifest(const std::filesystem::path& dir) {
    const auto index_path = dir / "index.jsonl";
    std::ifstream is(index_path);
    if (!is) throw MissingAssetError("manifest index not found: " + index_path.string());
    std::string content((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (content.empty()) throw ParseError("manifest " + index_path.string() + " is empty", 1);
    if (content.back() != '\n') throw ParseError("manifest " + index_path.string() + " is truncated (no final newline)",
                                                 static_cast<long>(std::count(content.begin(), content.end(), '\n')) + 1);

    std::vector<TtsUtterance> out;
    MelConfig mc;
    std::istringstream lines(content);
    std::string line;
    long lineno = 0;
    while (std::getline(lines, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(std::string("manifest: malformed JSON: ") + e.what(), lineno);
        }
        try {
            if (lineno == 1) {
                if (j.value("format", "") != "tadicodec-corpus") throw ParseError("manifest: missing format header", 1);
                if (j.at("version").get<int>() != 1) throw ParseError("manifest: unsupported version", 1);
                mc = mel_config_from_json(j.at("mel"));
                continue;
            }
            TtsUtterance u;
            u.utt_id = j.at("utt_id").get<std::string>();
            u.text.ids = j.at("text").get<std::vector<int>>();
            u.text.vocab_size = j.at("vocab_size");
            for (int id : u.text.ids)
                if (id < 0 || id >= u.text.vocab_size) throw ParseError("manifest: text id out of range", lineno);
            u.duration_frames = j.at("duration_frames");
            u.speaker_offset = j.at("speaker_offset");
            u.mel = {read_array(dir / j.at("mel").get<std::string>()), mc};
            if (u.mel.frames() != j.at("frames").get<int>() || u.mel.bins() != mc.n_mels)
                throw ParseError("manifest: mel array shape disagrees with index for " + u.utt_id, lineno);
            const Matrix wav = read_array(dir / j.at("wav").get<std::string>());
            u.waveform = wav.data;
            out.push_back(std::move(u));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("manifest: bad record: ") + e.what(), lineno);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Template matcher
// ---------------------------------------------------------------------------

namespace {
std::vector<double> inner_block(const Matrix& mel, int start_frame, int frames, int margin) {
    std::vector<double> v;
    v.reserve(static_cast<size_t>(frames - 2 * margin) * mel.cols);
    for (int t = start_frame + margin; t < start_frame + frames - margin; ++t)
        v.insert(v.end(), mel.row(t).begin(), mel.row(t).end());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double nrm = 0.0;
    for (auto& x : v) {
        x -= mean;
        nrm += x * x;
    }
    nrm = std::sqrt(nrm);
    if (nrm > 0)
        for (auto& x : v) x /= nrm;
    return v;
}
}  // namespace

TemplateMatcher::TemplateMatcher(const CorpusSpec& spec, int offset_grid_points) : spec_(spec) {
    spec.validate();
    margin_ = std::min(4, spec.frames_per_symbol / 4);
    if (offset_grid_points < 1) offset_grid_points = 1;
    for (int i = 0; i < offset_grid_points; ++i)
        offsets_.push_back(offset_grid_points == 1 ? 0.0
                                                   : -spec.max_speaker_offset +
                                                         2.0 * spec.max_speaker_offset * i / (offset_grid_points - 1));
    templates_.assign(offsets_.size(), std::vector<std::vector<double>>(static_cast<size_t>(spec.symbol_count())));
    const int n_sym = spec.symbol_count();
    const int total = static_cast<int>(offsets_.size()) * n_sym;
#pragma omp parallel for schedule(dynamic)
    for (int task = 0; task < total; ++task) {
        const int o = task / n_sym, s = task % n_sym;
        const auto wav = render_symbol(spec, kFirstSymbolId + s, offsets_[o]);
        const auto mel = mel_spectrogram(wav, spec.mel);
        templates_[o][s] = inner_block(mel.data, 0, spec.frames_per_symbol, margin_);
    }
}

TemplateDecode TemplateMatcher::decode(const Matrix& mel) const {
    const int fps = spec_.frames_per_symbol;
    const int slots = mel.rows / fps;
    TemplateDecode best;
    best.score = -std::numeric_limits<double>::infinity();
    if (slots == 0) return {{}, 0.0, 0.0};
    std::vector<std::vector<double>> blocks;
    for (int k = 0; k < slots; ++k) blocks.push_back(inner_block(mel, k * fps, fps, margin_));
    for (size_t o = 0; o < offsets_.size(); ++o) {
        TemplateDecode cand;
        cand.speaker_offset = offsets_[o];
        for (const auto& blk : blocks) {
            double top = -std::numeric_limits<double>::infinity();
            int arg = 0;
            for (size_t s = 0; s < templates_[o].size(); ++s) {
                const auto& tp = templates_[o][s];
                double dot = 0.0;
                for (size_t i = 0; i < blk.size(); ++i) dot += blk[i] * tp[i];
                if (dot > top) {
                    top = dot;
                    arg = static_cast<int>(s);
                }
            }
            cand.symbols.push_back(kFirstSymbolId + arg);
            cand.score += top;
        }
        if (cand.score > best.score) best = std::move(cand);
    }
    return best;
}

double TemplateMatcher::accuracy(const std::vector<int>& decoded, const std::vector<int>& reference) {
    const size_t n = std::max(decoded.size(), reference.size());
    if (n == 0) return 1.0;
    size_t hits = 0;
    for (size_t i = 0; i < std::min(decoded.size(), reference.size()); ++i) hits += decoded[i] == reference[i];
    return static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace tdc::corpus
