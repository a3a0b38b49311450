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

// Minimal tape-free reverse-mode autodiff over dense row-major matrices.
//
// Every op returns a fresh node holding its value and a closure that pushes
// the node's gradient into its inputs. `backward(loss)` topologically sorts
// the graph reachable from `loss` and runs the closures in reverse. The graph
// is owned by the output node; dropping it frees all intermediates.

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tadicodec/kernels.hpp"

namespace tdc::ag {

struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}
    Matrix(int r, int c, std::vector<double> values);

    double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
    std::span<double> row(int r) { return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)}; }
    std::span<const double> row(int r) const {
        return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)};
    }
    size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
    std::string shape_str() const { return std::to_string(rows) + "x" + std::to_string(cols); }
};

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Matrix value;
    Matrix grad;  // allocated lazily, same shape as value
    std::vector<Var> inputs;
    std::function<void(Node&)> backward_fn;
    bool requires_grad = false;

    void ensure_grad() {
        if (grad.size() != value.size()) grad = Matrix(value.rows, value.cols);
    }
    double scalar() const { return value.data.at(0); }
};

/// Leaf that never receives gradient.
Var constant(Matrix m);
/// Leaf that accumulates gradient.
Var leaf(Matrix m);

/// Run reverse-mode accumulation from a 1×1 node. Gradients add into `grad`
/// of every reachable node that requires it.
void backward(const Var& root);

bool grad_enabled();

/// Disables graph recording on this thread while alive. Ops still compute
/// values but keep no inputs or closures.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// ---- linear algebra --------------------------------------------------------
Var matmul(const Var& a, const Var& b);
/// x·w + bias (bias may be null; broadcast over rows).
Var linear(const Var& x, const Var& w, const Var& bias);

// ---- elementwise -----------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
/// a + row, row is 1×cols broadcast over every row of a.
Var add_row(const Var& a, const Var& row);
/// a ⊙ row, row is 1×cols broadcast over every row of a.
Var mul_row(const Var& a, const Var& row);
Var silu(const Var& a);
Var square(const Var& a);

// ---- shape -----------------------------------------------------------------
/// Row-major reinterpretation (same element count).
Var reshape(const Var& a, int rows, int cols);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(const Var& a, int start, int count);
/// out[i] = a[idx[i]]; gradient scatter-adds back. Used for embeddings.
Var gather_rows(const Var& a, std::span<const int> idx);

// ---- reductions / losses ---------------------------------------------------
Var sum(const Var& a);
Var mean(const Var& a);
/// Mean over selected rows and all columns of (pred − target)² (or |·| when
/// `l1`). Rows with row_mask[r] == 0 contribute neither value nor gradient.
/// Returns 0 when no row is selected.
Var masked_regression(const Var& pred, const Matrix& target, std::span<const unsigned char> row_mask, bool l1 = false);
/// Mean negative log-likelihood of targets[r] under softmax(logits[r]).
/// Rows with targets[r] < 0 are ignored. Returns 0 when all rows are ignored.
Var cross_entropy(const Var& logits, std::span<const int> targets);

// ---- normalization / attention --------------------------------------------
/// x / sqrt(mean(x²) + eps), row-wise, without gain.
Var rms_normalize(const Var& a, double eps = 1e-6);
/// Row-wise rotary embedding over `n_heads` heads of width `head_dim` (even).
Var rope(const Var& a, std::span<const int> positions, int n_heads, int head_dim, double base = 10000.0);
Var attention(const Var& q, const Var& k, const Var& v, std::span<const kernels::Segment> segs,
              const kernels::AttentionShape& shape);

// ---- quantization helpers ---------------------------------------------------
/// Row-wise projection onto the unit sphere; an all-zero row maps to the
/// all-positive direction (1/√n, …, 1/√n).
Var normalize_rows(const Var& a);
/// Forward sign(x) with sign(0) = 1; backward passes the gradient unchanged.
Var ste_sign(const Var& a);
/// Forward takes `replacement`'s value, backward routes the gradient to `a`
/// only: a + sg(replacement − a).
Var straight_through(const Var& a, const Matrix& replacement);

}  // namespace tdc::ag
