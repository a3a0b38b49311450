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


// Small helpers shared by the unit tests.
#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "tadicodec/autograd.hpp"
#include "tadicodec/common.hpp"

namespace tdc::test {

/// Closed-form deterministic fill shared with the Python oracles:
/// value i (row-major) = 0.8 · sin(0.37 · i + 1.1 · k).
inline ag::Matrix fill(int rows, int cols, int k) {
    ag::Matrix m(rows, cols);
    for (size_t i = 0; i < m.size(); ++i) m.data[i] = 0.8 * std::sin(0.37 * static_cast<double>(i) + 1.1 * k);
    return m;
}

inline ag::Matrix random_matrix(int rows, int cols, Rng& rng, double scale = 1.0) {
    ag::Matrix m(rows, cols);
    for (double& v : m.data) v = scale * rng.normal();
    return m;
}

inline double max_abs_diff(const ag::Matrix& a, const ag::Matrix& b) {
    double d = 0.0;
    for (size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.data[i] - b.data[i]));
    return d;
}

/// Fresh, empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("tdc_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace tdc::test
