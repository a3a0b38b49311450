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

// Synthetic paired speech/text corpus, log-mel features and dataset I/O.
//
// The "language" is a fixed bank of tone/chirp templates, one per text
// symbol, each lasting a whole number of mel frames. Every utterance carries a
// global pitch shift standing in for speaker identity. Because the mapping is
// known, a matched filter over the template bank acts as an exact ASR and
// speaker-verification oracle.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tadicodec/autograd.hpp"
#include "tadicodec/common.hpp"

namespace tdc::corpus {

using ag::Matrix;

struct MelConfig {
    int sample_rate = 24000;
    int hop = 240;
    int window = 1024;  // also the FFT size
    int n_mels = 80;
    double fmin = 0.0;
    double fmax = 12000.0;
    double log_floor = 1e-5;
    double norm_offset = 1.25;
    double norm_scale = 1.0 / 3.75;

    double frame_rate() const { return static_cast<double>(sample_rate) / hop; }
    void validate() const;
    /// Normalized value of a frame bin whose mel power is at or below the floor.
    double floor_value() const;
    bool operator==(const MelConfig&) const = default;
};

/// T × n_mels normalized log-mel features.
struct MelSpectrogram {
    Matrix data;
    MelConfig config;

    int frames() const { return data.rows; }
    int bins() const { return data.cols; }
};

/// Triangular mel filterbank (HTK mel scale, Slaney area normalization):
/// n_mels × (window/2 + 1).
Matrix mel_filterbank(const MelConfig& cfg);
/// Center frequency in Hz of every mel band.
std::vector<double> mel_center_frequencies(const MelConfig& cfg);

/// T = ceil(len / hop) frames centered at multiples of hop, reflection padded.
/// Values are rounded to 32-bit float precision so they survive the binary
/// array format bit-exactly.
MelSpectrogram mel_spectrogram(std::span<const double> waveform, const MelConfig& cfg);

/// Appends copies of the last frame until the frame count is a multiple of
/// `factor`.
Matrix pad_frames(const Matrix& mel, int factor);

/// Invert a normalized mel to a waveform: filterbank pseudo-inverse followed by
/// Griffin-Lim phase recovery. `convergence`, when given, receives the spectral
/// convergence error after each iteration.
std::vector<double> griffin_lim(const MelSpectrogram& mel, int iters, uint64_t seed = 0,
                                std::vector<double>* convergence = nullptr);

inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kFirstSymbolId = 3;

struct TextSequence {
    std::vector<int> ids;
    int vocab_size = 64;
};

struct TtsUtterance {
    std::string utt_id;
    TextSequence text;
    std::vector<double> waveform;
    MelSpectrogram mel;
    int duration_frames = 0;
    double speaker_offset = 0.0;  // semitones
};

struct CorpusSpec {
    int n_utterances = 16;
    int min_symbols = 2;
    int max_symbols = 4;
    uint64_t seed = 0;
    int vocab_size = 64;
    int frames_per_symbol = 32;
    double amplitude = 0.3;
    double f_low = 200.0;    // base frequency of the first symbol
    double f_high = 3000.0;  // base frequency of the last symbol
    double chirp = 0.6;      // relative sweep over one symbol
    double decay_rate = 4.0; // exponent of the decaying envelope
    double max_speaker_offset = 1.0;  // semitones, offsets drawn from ±this
    /// When set, every utterance uses these symbols / this offset.
    std::optional<std::vector<int>> fixed_symbols;
    std::optional<double> fixed_offset;
    MelConfig mel;

    void validate() const;
    int symbol_count() const { return vocab_size - kFirstSymbolId; }
};

struct SymbolTemplate {
    double base_hz = 0;
    double chirp = 0;    // relative frequency sweep across the symbol
    bool decaying = false;
};

SymbolTemplate symbol_template(const CorpusSpec& spec, int symbol_id);
/// Waveform of one symbol at the given speaker offset.
std::vector<double> render_symbol(const CorpusSpec& spec, int symbol_id, double offset_semitones);
TtsUtterance make_utterance(const CorpusSpec& spec, const std::string& utt_id, std::vector<int> symbols,
                            double offset_semitones);
std::vector<TtsUtterance> generate_corpus(const CorpusSpec& spec);

/// Deterministic three-slot "sentences": utterance i takes choice i/16,
/// (i/4)%4 and i%4 from three disjoint four-symbol sets, at `spec.fixed_offset`
/// (0 when unset). At most 64 utterances.
std::vector<TtsUtterance> generate_grammar_corpus(const CorpusSpec& spec, int n = 64);
std::vector<int> grammar_symbols(int index);

// ---- manifest ---------------------------------------------------------------

/// Little-endian float32 array file with a 16-byte header (magic, dtype, T, d).
void write_array(const std::filesystem::path& path, const Matrix& m);
Matrix read_array(const std::filesystem::path& path);

/// Writes `index.jsonl` plus `arrays/<utt_id>.mel.f32` and `.wav.f32` under dir.
void save_manifest(const std::vector<TtsUtterance>& utts, const std::filesystem::path& dir);
std::vector<TtsUtterance> load_manifest(const std::filesystem::path& dir);

// ---- template-matching oracle ------------------------------------------------

struct TemplateDecode {
    std::vector<int> symbols;
    double speaker_offset = 0.0;
    double score = 0.0;
};

/// Matched filter over the symbol bank on the inner frames of every symbol
/// slot, jointly searching a grid of speaker offsets.
class TemplateMatcher {
public:
    explicit TemplateMatcher(const CorpusSpec& spec, int offset_grid_points = 21);

    TemplateDecode decode(const Matrix& mel) const;
    /// Fraction of positions where decoded and reference symbols agree
    /// (length mismatch counts as errors).
    static double accuracy(const std::vector<int>& decoded, const std::vector<int>& reference);

private:
    CorpusSpec spec_;
    int margin_;
    std::vector<double> offsets_;
    // templates_[o][s]: inner-frame block, mean-removed and unit-normed.
    std::vector<std::vector<std::vector<double>>> templates_;
};

}  // namespace tdc::corpus
