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

#include "tadicodec/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "tadicodec/common.hpp"

namespace tdc::ag {

namespace {

thread_local bool t_grad_enabled = true;

Var make_node(Matrix value, std::vector<Var> inputs, std::function<void(Node&)> fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    if (!t_grad_enabled) return n;
    bool any = false;
    for (const auto& in : inputs) any = any || in->requires_grad;
    if (!any) return n;
    n->requires_grad = true;
    n->inputs = std::move(inputs);
    n->backward_fn = std::move(fn);
    return n;
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b))
        throw InputError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

// Adds `src` into `node`'s gradient if the node wants one.
void accumulate(const Var& node, const std::vector<double>& src) {
    if (!node->requires_grad) return;
    node->ensure_grad();
    auto& g = node->grad.data;
    for (size_t i = 0; i < g.size(); ++i) g[i] += src[i];
}

}  // namespace

Matrix::Matrix(int r, int c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != static_cast<size_t>(r) * c)
        throw InputError("Matrix: " + std::to_string(data.size()) + " values for shape " + shape_str());
}

Var constant(Matrix m) {
    auto n = std::make_shared<Node>();
    n->value = std::move(m);
    return n;
}

Var leaf(Matrix m) {
    auto n = std::make_shared<Node>();
    n->value = std::move(m);
    n->requires_grad = true;
    return n;
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = prev_; }

void backward(const Var& root) {
    if (root->value.size() != 1) throw InputError("backward: root must be a scalar, got " + root->value.shape_str());
    if (!root->requires_grad) return;
    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && !child->inputs.empty() && seen.insert(child).second)
                stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->ensure_grad();
    root->grad.data[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->grad.size() == n->value.size()) n->backward_fn(*n);
    }
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
    const Matrix& A = a->value;
    const Matrix& B = b->value;
    if (A.cols != B.rows) throw InputError("matmul: " + A.shape_str() + " · " + B.shape_str());
    Matrix out(A.rows, B.cols);
    kernels::gemm_nn(A.rows, B.cols, A.cols, A.data.data(), B.data.data(), out.data.data(), false);
    return make_node(std::move(out), {a, b}, [](Node& n) {
        const Var& a = n.inputs[0];
        const Var& b = n.inputs[1];
        const int M = a->value.rows, K = a->value.cols, N = b->value.cols;
        if (a->requires_grad) {
            a->ensure_grad();
            kernels::gemm_nt(M, K, N, n.grad.data.data(), b->value.data.data(), a->grad.data.data(), true);
        }
        if (b->requires_grad) {
            b->ensure_grad();
            kernels::gemm_tn(K, N, M, a->value.data.data(), n.grad.data.data(), b->grad.data.data(), true);
        }
    });
}

Var linear(const Var& x, const Var& w, const Var& bias) {
    const Matrix& X = x->value;
    const Matrix& W = w->value;
    if (X.cols != W.rows) throw InputError("linear: " + X.shape_str() + " · " + W.shape_str());
    Matrix out(X.rows, W.cols);
    if (bias) {
        if (bias->value.rows != 1 || bias->value.cols != W.cols)
            throw InputError("linear: bias shape " + bias->value.shape_str());
        for (int r = 0; r < out.rows; ++r) std::copy(bias->value.data.begin(), bias->value.data.end(), out.row(r).begin());
    }
    kernels::gemm_nn(X.rows, W.cols, X.cols, X.data.data(), W.data.data(), out.data.data(), bias != nullptr);
    std::vector<Var> ins{x, w};
    if (bias) ins.push_back(bias);
    return make_node(std::move(out), std::move(ins), [](Node& n) {
        const Var& x = n.inputs[0];
        const Var& w = n.inputs[1];
        const int M = x->value.rows, K = x->value.cols, N = w->value.cols;
        if (x->requires_grad) {
            x->ensure_grad();
            kernels::gemm_nt(M, K, N, n.grad.data.data(), w->value.data.data(), x->grad.data.data(), true);
        }
        if (w->requires_grad) {
            w->ensure_grad();
            kernels::gemm_tn(K, N, M, x->value.data.data(), n.grad.data.data(), w->grad.data.data(), true);
        }
        if (n.inputs.size() > 2 && n.inputs[2]->requires_grad) {
            const Var& b = n.inputs[2];
            b->ensure_grad();
            for (int r = 0; r < M; ++r)
                for (int c = 0; c < N; ++c) b->grad.data[c] += n.grad(r, c);
        }
    });
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "add");
    Matrix out = a->value;
    for (size_t i = 0; i < out.size(); ++i) out.data[i] += b->value.data[i];
    return make_node(std::move(out), {a, b}, [](Node& n) {
        accumulate(n.inputs[0], n.grad.data);
        accumulate(n.inputs[1], n.grad.data);
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "sub");
    Matrix out = a->value;
    for (size_t i = 0; i < out.size(); ++i) out.data[i] -= b->value.data[i];
    return make_node(std::move(out), {a, b}, [](Node& n) {
        accumulate(n.inputs[0], n.grad.data);
        const Var& b = n.inputs[1];
        if (b->requires_grad) {
            b->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) b->grad.data[i] -= n.grad.data[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "mul");
    Matrix out = a->value;
    for (size_t i = 0; i < out.size(); ++i) out.data[i] *= b->value.data[i];
    return make_node(std::move(out), {a, b}, [](Node& n) {
        const Var& a = n.inputs[0];
        const Var& b = n.inputs[1];
        if (a->requires_grad) {
            a->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) a->grad.data[i] += n.grad.data[i] * b->value.data[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) b->grad.data[i] += n.grad.data[i] * a->value.data[i];
        }
    });
}

Var scale(const Var& a, double s) {
    Matrix out = a->value;
    for (auto& v : out.data) v *= s;
    return make_node(std::move(out), {a}, [s](Node& n) {
        const Var& a = n.inputs[0];
        a->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) a->grad.data[i] += s * n.grad.data[i];
    });
}

Var add_scalar(const Var& a, double s) {
    Matrix out = a->value;
    for (auto& v : out.data) v += s;
    return make_node(std::move(out), {a}, [](Node& n) { accumulate(n.inputs[0], n.grad.data); });
}

Var add_row(const Var& a, const Var& row) {
    const Matrix& A = a->value;
    if (row->value.rows != 1 || row->value.cols != A.cols)
        throw InputError("add_row: " + A.shape_str() + " + " + row->value.shape_str());
    Matrix out = A;
    for (int r = 0; r < A.rows; ++r)
        for (int c = 0; c < A.cols; ++c) out(r, c) += row->value.data[c];
    return make_node(std::move(out), {a, row}, [](Node& n) {
        accumulate(n.inputs[0], n.grad.data);
        const Var& row = n.inputs[1];
        if (row->requires_grad) {
            row->ensure_grad();
            for (int r = 0; r < n.grad.rows; ++r)
                for (int c = 0; c < n.grad.cols; ++c) row->grad.data[c] += n.grad(r, c);
        }
    });
}

Var mul_row(const Var& a, const Var& row) {
    const Matrix& A = a->value;
    if (row->value.rows != 1 || row->value.cols != A.cols)
        throw InputError("mul_row: " + A.shape_str() + " * " + row->value.shape_str());
    Matrix out = A;
    for (int r = 0; r < A.rows; ++r)
        for (int c = 0; c < A.cols; ++c) out(r, c) *= row->value.data[c];
    return make_node(std::move(out), {a, row}, [](Node& n) {
        const Var& a = n.inputs[0];
        const Var& row = n.inputs[1];
        if (a->requires_grad) {
            a->ensure_grad();
            for (int r = 0; r < n.grad.rows; ++r)
                for (int c = 0; c < n.grad.cols; ++c) a->grad(r, c) += n.grad(r, c) * row->value.data[c];
        }
        if (row->requires_grad) {
            row->ensure_grad();
            for (int r = 0; r < n.grad.rows; ++r)
                for (int c = 0; c < n.grad.cols; ++c) row->grad.data[c] += n.grad(r, c) * a->value(r, c);
        }
    });
}

Var silu(const Var& a) {
    Matrix out = a->value;
    for (auto& v : out.data) v = v / (1.0 + std::exp(-v));
    return make_node(std::move(out), {a}, [](Node& n) {
        const Var& a = n.inputs[0];
        a->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            const double x = a->value.data[i];
            const double sg = 1.0 / (1.0 + std::exp(-x));
            a->grad.data[i] += n.grad.data[i] * sg * (1.0 + x * (1.0 - sg));
        }
    });
}

Var square(const Var& a) {
    Matrix out = a->value;
    for (auto& v : out.data) v *= v;
    return make_node(std::move(out), {a}, [](Node& n) {
        const Var& a = n.inputs[0];
        a->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) a->grad.data[i] += 2.0 * a->value.data[i] * n.grad.data[i];
    });
}

// ---------------------------------------------------------------------------
// shape
// ---------------------------------------------------------------------------

Var reshape(const Var& a, int rows, int cols) {
    if (static_cast<size_t>(rows) * cols != a->value.size())
        throw InputError("reshape: " + a->value.shape_str() + " -> " + std::to_string(rows) + "x" + std::to_string(cols));
    Matrix out(rows, cols, a->value.data);
    return make_node(std::move(out), {a}, [](Node& n) { accumulate(n.inputs[0], n.grad.data); });
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw InputError("concat_rows: no inputs");
    const int cols = parts.front()->value.cols;
    int rows = 0;
    for (const auto& p : parts) {
        if (p->value.cols != cols) throw InputError("concat_rows: column mismatch");
        rows += p->value.rows;
    }
    Matrix out(rows, cols);
    size_t pos = 0;
    for (const auto& p : parts) {
        std::copy(p->value.data.begin(), p->value.data.end(), out.data.begin() + static_cast<long>(pos));
        pos += p->value.size();
    }
    return make_node(std::move(out), parts, [](Node& n) {
        size_t pos = 0;
        for (const auto& p : n.inputs) {
            if (p->requires_grad) {
                p->ensure_grad();
                for (size_t i = 0; i < p->grad.size(); ++i) p->grad.data[i] += n.grad.data[pos + i];
            }
            pos += p->value.size();
        }
    });
}

Var slice_rows(const Var& a, int start, int count) {
    if (start < 0 || count < 0 || start + count > a->value.rows)
        throw InputError("slice_rows: [" + std::to_string(start) + ", +" + std::to_string(count) + ") of " +
                         a->value.shape_str());
    const int cols = a->value.cols;
    Matrix out(count, cols);
    std::copy_n(a->value.data.begin() + static_cast<long>(start) * cols, static_cast<long>(count) * cols,
                out.data.begin());
    return make_node(std::move(out), {a}, [start](Node& n) {
        const Var& a = n.inputs[0];
        a->ensure_grad();
        const size_t off = static_cast<size_t>(start) * a->value.cols;
        for (size_t i = 0; i < n.grad.size(); ++i) a->grad.data[off + i] += n.grad.data[i];
    });
}

Var gather_rows(const Var& a, std::span<const int> idx) {
    const int cols = a->value.cols;
    Matrix out(static_cast<int>(idx.size()), cols);
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= a->value.rows)
            throw InputError("gather_rows: index " + std::to_string(idx[i]) + " out of " + std::to_string(a->value.rows));
        std::copy_n(a->value.data.begin() + static_cast<long>(idx[i]) * cols, cols,
                    out.data.begin() + static_cast<long>(i) * cols);
    }
    std::vector<int> ids(idx.begin(), idx.end());
    return make_node(std::move(out), {a}, [ids = std::move(ids)](Node& n) {
        const Var& a = n.inputs[0];
        a->ensure_grad();
        const int cols = a->value.cols;
        for (size_t i = 0; i < ids.size(); ++i)
            for (int c = 0; c < cols; ++c) a->grad(ids[i], c) += n.grad(static_cast<int>(i), c);
    });
}

// ---------------------------------------------------------------------------
// reductions / losses
// ---------------------------------------------------------------------------

Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a->value.data) s += v;
    return make_node(Matrix(1, 1, s), {a}, [](Node& n) {
        const Var& a = n.inputs[0];
        a->ensure_grad();
        const double g = n.grad.data[0];
        for (auto& v : a->grad.data) v += g;
    });
}

Var mean(const Var& a) {
    if (a->value.empty()) throw InputError("mean: empty input");
    return scale(sum(a), 1.0 / static_cast<double>(a->value.size()));
}

Var masked_regression(const Var& pred, const Matrix& target, std::span<const unsigned char> row_mask, bool l1) {
    require_same_shape(pred->value, target, "masked_regression");
    if (row_mask.size() != static_cast<size_t>(target.rows)) throw InputError("masked_regression: mask length");
    const int cols = target.cols;
    long selected = 0;
    double acc = 0.0;
    for (int r = 0; r < target.rows; ++r) {
        if (!row_mask[r]) continue;
        ++selected;
        for (int c = 0; c < cols; ++c) {
            const double d = pred->value(r, c) - target(r, c);
            acc += l1 ? std::abs(d) : d * d;
        }
    }
    const double count = static_cast<double>(selected) * cols;
    const double loss = selected > 0 ? acc / count : 0.0;
    std::vector<unsigned char> mask(row_mask.begin(), row_mask.end());
    return make_node(Matrix(1, 1, loss), {pred},
                     [target, mask = std::move(mask), count, l1](Node& n) {
                         if (count == 0.0) return;
                         const Var& p = n.inputs[0];
                         p->ensure_grad();
                         const double g = n.grad.data[0] / count;
                         for (int r = 0; r < target.rows; ++r) {
                             if (!mask[r]) continue;
                             for (int c = 0; c < target.cols; ++c) {
                                 const double d = p->value(r, c) - target(r, c);
                                 p->grad(r, c) += l1 ? g * ((d > 0) - (d < 0)) : 2.0 * g * d;
                             }
                         }
                     });
}

Var cross_entropy(const Var& logits, std::span<const int> targets) {
    const Matrix& L = logits->value;
    if (targets.size() != static_cast<size_t>(L.rows)) throw InputError("cross_entropy: target count");
    std::vector<int> tg(targets.begin(), targets.end());
    std::vector<int> rows;
    for (int r = 0; r < L.rows; ++r) {
        if (tg[r] < 0) continue;
        if (tg[r] >= L.cols) throw InputError("cross_entropy: target " + std::to_string(tg[r]) + " >= vocab");
        rows.push_back(r);
    }
    // Softmax only over rows that contribute.
    Matrix probs(static_cast<int>(rows.size()), L.cols);
    double loss = 0.0;
    for (size_t i = 0; i < rows.size(); ++i) {
        kernels::softmax_rows(1, L.cols, L.data.data() + static_cast<size_t>(rows[i]) * L.cols,
                              probs.data.data() + i * L.cols);
        loss -= std::log(std::max(probs(static_cast<int>(i), tg[rows[i]]), 1e-300));
    }
    if (!rows.empty()) loss /= static_cast<double>(rows.size());
    return make_node(Matrix(1, 1, loss), {logits},
                     [probs = std::move(probs), rows = std::move(rows), tg = std::move(tg)](Node& n) {
                         if (rows.empty()) return;
                         const Var& l = n.inputs[0];
                         l->ensure_grad();
                         const double g = n.grad.data[0] / static_cast<double>(rows.size());
                         for (size_t i = 0; i < rows.size(); ++i) {
                             auto grow = l->grad.row(rows[i]);
                             auto prow = probs.row(static_cast<int>(i));
                             for (size_t c = 0; c < grow.size(); ++c) grow[c] += g * prow[c];
                             grow[tg[rows[i]]] -= g;
                         }
                     });
}

// ---------------------------------------------------------------------------
// normalization / attention
// ---------------------------------------------------------------------------

Var rms_normalize(const Var& a, double eps) {
    const Matrix& X = a->value;
    Matrix out(X.rows, X.cols);
    std::vector<double> inv(static_cast<size_t>(X.rows));
    kernels::rmsnorm_forward(X.rows, X.cols, eps, X.data.data(), out.data.data(), inv.data());
    return make_node(std::move(out), {a}, [inv = std::move(inv)](Node& n) {
        const Var& a = n.inputs[0];
        a->ensure_grad();
        kernels::rmsnorm_backward(n.value.rows, n.value.cols, n.value.data.data(), inv.data(), n.grad.data.data(),
                                  a->grad.data.data());
    });
}

namespace {
void rotate(const Matrix& in, Matrix& out, const std::vector<int>& pos, int n_heads, int head_dim, double base,
            double sign) {
    const int half = head_dim / 2;
    std::vector<double> inv_freq(static_cast<size_t>(half));
    for (int i = 0; i < half; ++i) inv_freq[i] = std::pow(base, -2.0 * i / head_dim);
    for (int r = 0; r < in.rows; ++r) {
        for (int i = 0; i < half; ++i) {
            const double ang = sign * pos[r] * inv_freq[i];
            const double c = std::cos(ang), s = std::sin(ang);
            for (int h = 0; h < n_heads; ++h) {
                const int j = h * head_dim + 2 * i;
                const double x0 = in(r, j), x1 = in(r, j + 1);
                out(r, j) += x0 * c - x1 * s;
                out(r, j + 1) += x0 * s + x1 * c;
            }
        }
    }
}
}  // namespace

Var rope(const Var& a, std::span<const int> positions, int n_heads, int head_dim, double base) {
    if (head_dim % 2 != 0) throw ConfigError("rope: head dimension must be even, got " + std::to_string(head_dim));
    if (a->value.cols != n_heads * head_dim) throw InputError("rope: width mismatch");
    if (positions.size() != static_cast<size_t>(a->value.rows)) throw InputError("rope: positions length");
    std::vector<int> pos(positions.begin(), positions.end());
    Matrix out(a->value.rows, a->value.cols);
    rotate(a->value, out, pos, n_heads, head_dim, base, 1.0);
    return make_node(std::move(out), {a}, [pos = std::move(pos), n_heads, head_dim, base](Node& n) {
        const Var& a = n.inputs[0];
        a->ensure_grad();
        // Transpose of a rotation is the rotation by the negated angle.
        rotate(n.grad, a->grad, pos, n_heads, head_dim, base, -1.0);
    });
}

Var attention(const Var& q, const Var& k, const Var& v, std::span<const kernels::Segment> segs,
              const kernels::AttentionShape& shape) {
    const int qw = shape.n_heads * shape.head_dim;
    const int kw = shape.n_kv_heads * shape.head_dim;
    if (shape.n_kv_heads <= 0 || shape.n_heads % shape.n_kv_heads != 0)
        throw ConfigError("attention: n_kv_heads must divide n_heads");
    if (q->value.cols != qw || k->value.cols != kw || v->value.cols != kw || q->value.rows != shape.rows ||
        k->value.rows != shape.rows || v->value.rows != shape.rows)
        throw InputError("attention: operand shapes do not match head layout");
    Matrix out(shape.rows, qw);
    auto probs = std::make_shared<std::vector<double>>();
    kernels::attention_forward(shape, segs, q->value.data.data(), k->value.data.data(), v->value.data.data(),
                               out.data.data(), *probs);
    std::vector<kernels::Segment> sg(segs.begin(), segs.end());
    return make_node(std::move(out), {q, k, v}, [probs, sg = std::move(sg), shape](Node& n) {
        const Var& q = n.inputs[0];
        const Var& k = n.inputs[1];
        const Var& v = n.inputs[2];
        // The kernel writes all three; scratch space stands in for inputs that
        // do not need gradients.
        Matrix dq(q->value.rows, q->value.cols), dk(k->value.rows, k->value.cols), dv(v->value.rows, v->value.cols);
        kernels::attention_backward(shape, sg, q->value.data.data(), k->value.data.data(), v->value.data.data(),
                                    *probs, n.grad.data.data(), dq.data.data(), dk.data.data(), dv.data.data());
        accumulate(q, dq.data);
        accumulate(k, dk.data);
        accumulate(v, dv.data);
    });
}

// ---------------------------------------------------------------------------
// quantization helpers
// ---------------------------------------------------------------------------

Var normalize_rows(const Var& a) {
    const Matrix& X = a->value;
    Matrix out(X.rows, X.cols);
    std::vector<double> norms(static_cast<size_t>(X.rows));
    for (int r = 0; r < X.rows; ++r) {
        double ss = 0.0;
        for (double v : X.row(r)) ss += v * v;
        const double nrm = std::sqrt(ss);
        norms[r] = nrm;
        if (nrm == 0.0) {
            const double u = 1.0 / std::sqrt(static_cast<double>(X.cols));
            for (auto& v : out.row(r)) v = u;
        } else {
            for (int c = 0; c < X.cols; ++c) out(r, c) = X(r, c) / nrm;
        }
    }
    return make_node(std::move(out), {a}, [norms = std::move(norms)](Node& n) {
        const Var& a = n.inputs[0];
        a->ensure_grad();
        for (int r = 0; r < n.value.rows; ++r) {
            if (norms[r] == 0.0) continue;  // singular point: no gradient
            double dot = 0.0;
            for (int c = 0; c < n.value.cols; ++c) dot += n.value(r, c) * n.grad(r, c);
            for (int c = 0; c < n.value.cols; ++c)
                a->grad(r, c) += (n.grad(r, c) - n.value(r, c) * dot) / norms[r];
        }
    });
}

Var ste_sign(const Var& a) {
    Matrix out = a->value;
    for (auto& v : out.data) v = v >= 0.0 ? 1.0 : -1.0;
    return make_node(std::move(out), {a}, [](Node& n) { accumulate(n.inputs[0], n.grad.data); });
}

Var straight_through(const Var& a, const Matrix& replacement) {
    require_same_shape(a->value, replacement, "straight_through");
    return make_node(replacement, {a}, [](Node& n) { accumulate(n.inputs[0], n.grad.data); });
}

}  // namespace tdc::ag
