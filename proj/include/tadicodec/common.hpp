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

#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace tdc {

/// Invalid configuration values (zero sizes, bad presets, mismatched configs).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller handed in data that violates an operation's precondition.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Broken contract between internal components (e.g. unpadded frame counts).
class InternalError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Malformed text input; carries the 1-based line number when known.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, long line = 0)
        : std::runtime_error(line > 0 ? what + " (line " + std::to_string(line) + ")" : what),
          line_(line) {}
    long line() const { return line_; }

private:
    long line_;
};

/// A file referenced from an index could not be found or opened.
class MissingAssetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Checkpoint could not be loaded (version, corruption, config mismatch).
class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seeded generator with deterministic stream splitting. Every random draw in
/// the project goes through one of these so that runs are reproducible from a
/// single `--seed`.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : seed_(seed), engine_(splitmix64(seed)) {}

    /// Independent child stream; the parent's state is not advanced.
    Rng split(uint64_t stream) const { return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x51ed27ULL))); }

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
    double normal() { return normal_(engine_); }
    int64_t randint(int64_t lo, int64_t hi_inclusive) {
        return std::uniform_int_distribution<int64_t>(lo, hi_inclusive)(engine_);
    }
    bool bernoulli(double p) { return uniform() < p; }
    uint64_t seed() const { return seed_; }
    std::mt19937_64& engine() { return engine_; }

    std::string state() const {
        std::ostringstream os;
        os << seed_ << ' ' << engine_ << ' ' << normal_;
        return os.str();
    }
    void set_state(const std::string& s) {
        std::istringstream is(s);
        is >> seed_ >> engine_ >> normal_;
        if (!is) throw InputError("rng: malformed state string");
    }

private:
    uint64_t seed_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace tdc
