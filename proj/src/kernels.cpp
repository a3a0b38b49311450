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

#include "tadicodec/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <limits>

namespace tdc::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::parallel};

std::vector<size_t> prob_offsets(const AttentionShape& s, std::span<const Segment> segs) {
    std::vector<size_t> off(segs.size() + 1, 0);
    for (size_t i = 0; i < segs.size(); ++i) {
        const size_t n = static_cast<size_t>(segs[i].length);
        off[i + 1] = off[i] + n * n * static_cast<size_t>(s.n_heads);
    }
    return off;
}
}  // namespace

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

size_t attention_probs_size(const AttentionShape& s, std::span<const Segment> segs) {
    return prob_offsets(s, segs).back();
}

// ---------------------------------------------------------------------------
// Serial reference implementations. Written for clarity; used by tests and the
// benchmark as the baseline.
// ---------------------------------------------------------------------------
namespace serial {

void gemm_nn(int M, int N, int K, const double* A, const double* B, double* C, bool accumulate) {
    for (int i = 0; i < M; ++i) {
        for (int j = 0; j < N; ++j) {
            double acc = accumulate ? C[i * N + j] : 0.0;
            for (int k = 0; k < K; ++k) acc += A[i * K + k] * B[k * N + j];
            C[i * N + j] = acc;
        }
    }
}

void gemm_nt(int M, int N, int K, const double* A, const double* B, double* C, bool accumulate) {
    for (int i = 0; i < M; ++i) {
        for (int j = 0; j < N; ++j) {
            double acc = accumulate ? C[i * N + j] : 0.0;
            for (int k = 0; k < K; ++k) acc += A[i * K + k] * B[j * K + k];
            C[i * N + j] = acc;
        }
    }
}

void gemm_tn(int M, int N, int K, const double* A, const double* B, double* C, bool accumulate) {
    for (int i = 0; i < M; ++i) {
        for (int j = 0; j < N; ++j) {
            double acc = accumulate ? C[i * N + j] : 0.0;
            for (int k = 0; k < K; ++k) acc += A[k * M + i] * B[k * N + j];
            C[i * N + j] = acc;
        }
    }
}

void attention_forward(const AttentionShape& s, std::span<const Segment> segs, const double* Q, const double* K,
                       const double* V, double* O, std::vector<double>& probs) {
    const auto off = prob_offsets(s, segs);
    probs.assign(off.back(), 0.0);
    const int dh = s.head_dim;
    const int qw = s.n_heads * dh;
    const int kw = s.n_kv_heads * dh;
    const int group = s.n_heads / s.n_kv_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (size_t g = 0; g < segs.size(); ++g) {
        const int base = segs[g].start;
        const int n = segs[g].length;
        for (int h = 0; h < s.n_heads; ++h) {
            const int kh = h / group;
            double* P = probs.data() + off[g] + static_cast<size_t>(h) * n * n;
            for (int i = 0; i < n; ++i) {
                const int jmax = s.causal ? i + 1 : n;
                double mx = -std::numeric_limits<double>::infinity();
                for (int j = 0; j < jmax; ++j) {
                    double dot = 0.0;
                    for (int d = 0; d < dh; ++d)
                        dot += Q[(base + i) * qw + h * dh + d] * K[(base + j) * kw + kh * dh + d];
                    P[i * n + j] = dot * scale;
                    mx = std::max(mx, P[i * n + j]);
                }
                double sum = 0.0;
                for (int j = 0; j < jmax; ++j) {
                    P[i * n + j] = std::exp(P[i * n + j] - mx);
                    sum += P[i * n + j];
                }
                for (int j = 0; j < jmax; ++j) P[i * n + j] /= sum;
                for (int d = 0; d < dh; ++d) {
                    double acc = 0.0;
                    for (int j = 0; j < jmax; ++j) acc += P[i * n + j] * V[(base + j) * kw + kh * dh + d];
                    O[(base + i) * qw + h * dh + d] = acc;
                }
            }
        }
    }
}

void attention_backward(const AttentionShape& s, std::span<const Segment> segs, const double* Q, const double* K,
                        const double* V, const std::vector<double>& probs, const double* dO, double* dQ,
                        double* dK, double* dV) {
    const auto off = prob_offsets(s, segs);
    const int dh = s.head_dim;
    const int qw = s.n_heads * dh;
    const int kw = s.n_kv_heads * dh;
    const int group = s.n_heads / s.n_kv_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (size_t g = 0; g < segs.size(); ++g) {
        const int base = segs[g].start;
        const int n = segs[g].length;
        std::vector<double> dP(static_cast<size_t>(n));
        for (int h = 0; h < s.n_heads; ++h) {
            const int kh = h / group;
            const double* P = probs.data() + off[g] + static_cast<size_t>(h) * n * n;
            for (int i = 0; i < n; ++i) {
                const int jmax = s.causal ? i + 1 : n;
                double rowdot = 0.0;
                for (int j = 0; j < jmax; ++j) {
                    double acc = 0.0;
                    for (int d = 0; d < dh; ++d)
                        acc += dO[(base + i) * qw + h * dh + d] * V[(base + j) * kw + kh * dh + d];
                    dP[j] = acc;
                    rowdot += acc * P[i * n + j];
                }
                for (int j = 0; j < jmax; ++j) {
                    const double p = P[i * n + j];
                    const double ds = p * (dP[j] - rowdot) * scale;
                    for (int d = 0; d < dh; ++d) {
                        dQ[(base + i) * qw + h * dh + d] += ds * K[(base + j) * kw + kh * dh + d];
                        dK[(base + j) * kw + kh * dh + d] += ds * Q[(base + i) * qw + h * dh + d];
                        dV[(base + j) * kw + kh * dh + d] += p * dO[(base + i) * qw + h * dh + d];
                    }
                }
            }
        }
    }
}

void rmsnorm_forward(int rows, int cols, double eps, const double* x, double* y, double* inv_rms) {
    for (int r = 0; r < rows; ++r) {
        double ss = 0.0;
        for (int c = 0; c < cols; ++c) ss += x[r * cols + c] * x[r * cols + c];
        const double inv = 1.0 / std::sqrt(ss / cols + eps);
        inv_rms[r] = inv;
        for (int c = 0; c < cols; ++c) y[r * cols + c] = x[r * cols + c] * inv;
    }
}

void rmsnorm_backward(int rows, int cols, const double* y, const double* inv_rms, const double* dy, double* dx) {
    for (int r = 0; r < rows; ++r) {
        double m = 0.0;
        for (int c = 0; c < cols; ++c) m += dy[r * cols + c] * y[r * cols + c];
        m /= cols;
        for (int c = 0; c < cols; ++c) dx[r * cols + c] += inv_rms[r] * (dy[r * cols + c] - y[r * cols + c] * m);
    }
}

void softmax_rows(int rows, int cols, const double* x, double* y) {
    for (int r = 0; r < rows; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < cols; ++c) mx = std::max(mx, x[r * cols + c]);
        double sum = 0.0;
        for (int c = 0; c < cols; ++c) {
            y[r * cols + c] = std::exp(x[r * cols + c] - mx);
            sum += y[r * cols + c];
        }
        for (int c = 0; c < cols; ++c) y[r * cols + c] /= sum;
    }
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP kernels. Loop orders keep the innermost loop unit-stride so the
// compiler vectorizes it; work is split over independent output rows.
// ---------------------------------------------------------------------------
namespace parallel {

void gemm_nn(int M, int N, int K, const double* A, const double* B, double* C, bool accumulate) {
    const long work = static_cast<long>(M) * N * K;
#pragma omp parallel for schedule(static) if (work > 32768)
    for (int i0 = 0; i0 < M; i0 += 4) {
        const int iend = std::min(i0 + 4, M);
        if (!accumulate)
            std::memset(C + static_cast<size_t>(i0) * N, 0, sizeof(double) * static_cast<size_t>(iend - i0) * N);
        if (iend - i0 == 4) {
            double* c0 = C + static_cast<size_t>(i0) * N;
            double* c1 = c0 + N;
            double* c2 = c1 + N;
            double* c3 = c2 + N;
            const double* a0 = A + static_cast<size_t>(i0) * K;
            const double* a1 = a0 + K;
            const double* a2 = a1 + K;
            const double* a3 = a2 + K;
            for (int k = 0; k < K; ++k) {
                const double* b = B + static_cast<size_t>(k) * N;
                const double v0 = a0[k], v1 = a1[k], v2 = a2[k], v3 = a3[k];
#pragma omp simd
                for (int j = 0; j < N; ++j) {
                    const double bj = b[j];
                    c0[j] += v0 * bj;
                    c1[j] += v1 * bj;
                    c2[j] += v2 * bj;
                    c3[j] += v3 * bj;
                }
            }
        } else {
            for (int i = i0; i < iend; ++i) {
                double* c = C + static_cast<size_t>(i) * N;
                for (int k = 0; k < K; ++k) {
                    const double v = A[static_cast<size_t>(i) * K + k];
                    const double* b = B + static_cast<size_t>(k) * N;
#pragma omp simd
                    for (int j = 0; j < N; ++j) c[j] += v * b[j];
                }
            }
        }
    }
}

void gemm_nt(int M, int N, int K, const double* A, const double* B, double* C, bool accumulate) {
    const long work = static_cast<long>(M) * N * K;
#pragma omp parallel for schedule(static) if (work > 32768)
    for (int i = 0; i < M; ++i) {
        const double* a = A + static_cast<size_t>(i) * K;
        double* c = C + static_cast<size_t>(i) * N;
        for (int j = 0; j < N; ++j) {
            const double* b = B + static_cast<size_t>(j) * K;
            double acc = 0.0;
#pragma omp simd reduction(+ : acc)
            for (int k = 0; k < K; ++k) acc += a[k] * b[k];
            c[j] = accumulate ? c[j] + acc : acc;
        }
    }
}

void gemm_tn(int M, int N, int K, const double* A, const double* B, double* C, bool accumulate) {
    const long work = static_cast<long>(M) * N * K;
    constexpr int kBlock = 16;
#pragma omp parallel for schedule(static) if (work > 32768)
    for (int i0 = 0; i0 < M; i0 += kBlock) {
        const int iend = std::min(i0 + kBlock, M);
        if (!accumulate)
            std::memset(C + static_cast<size_t>(i0) * N, 0, sizeof(double) * static_cast<size_t>(iend - i0) * N);
        for (int k = 0; k < K; ++k) {
            const double* b = B + static_cast<size_t>(k) * N;
            const double* arow = A + static_cast<size_t>(k) * M;
            for (int i = i0; i < iend; ++i) {
                const double v = arow[i];
                if (v == 0.0) continue;
                double* c = C + static_cast<size_t>(i) * N;
#pragma omp simd
                for (int j = 0; j < N; ++j) c[j] += v * b[j];
            }
        }
    }
}

void attention_forward(const AttentionShape& s, std::span<const Segment> segs, const double* Q, const double* K,
                       const double* V, double* O, std::vector<double>& probs) {
    const auto off = prob_offsets(s, segs);
    probs.resize(off.back());
    const int dh = s.head_dim;
    const int qw = s.n_heads * dh;
    const int kw = s.n_kv_heads * dh;
    const int group = s.n_heads / s.n_kv_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const int tasks = static_cast<int>(segs.size()) * s.n_heads;
#pragma omp parallel for schedule(dynamic)
    for (int task = 0; task < tasks; ++task) {
        const int g = task / s.n_heads;
        const int h = task % s.n_heads;
        const int kh = h / group;
        const int base = segs[g].start;
        const int n = segs[g].length;
        double* P = probs.data() + off[g] + static_cast<size_t>(h) * n * n;
        for (int i = 0; i < n; ++i) {
            const int jmax = s.causal ? i + 1 : n;
            const double* q = Q + static_cast<size_t>(base + i) * qw + h * dh;
            double* prow = P + static_cast<size_t>(i) * n;
            double mx = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < jmax; ++j) {
                const double* k = K + static_cast<size_t>(base + j) * kw + kh * dh;
                double dot = 0.0;
#pragma omp simd reduction(+ : dot)
                for (int d = 0; d < dh; ++d) dot += q[d] * k[d];
                prow[j] = dot * scale;
                mx = std::max(mx, prow[j]);
            }
            double sum = 0.0;
            for (int j = 0; j < jmax; ++j) {
                prow[j] = std::exp(prow[j] - mx);
                sum += prow[j];
            }
            const double inv = 1.0 / sum;
            for (int j = 0; j < jmax; ++j) prow[j] *= inv;
            for (int j = jmax; j < n; ++j) prow[j] = 0.0;
            double* o = O + static_cast<size_t>(base + i) * qw + h * dh;
            for (int d = 0; d < dh; ++d) o[d] = 0.0;
            for (int j = 0; j < jmax; ++j) {
                const double p = prow[j];
                const double* v = V + static_cast<size_t>(base + j) * kw + kh * dh;
#pragma omp simd
                for (int d = 0; d < dh; ++d) o[d] += p * v[d];
            }
        }
    }
}

void attention_backward(const AttentionShape& s, std::span<const Segment> segs, const double* Q, const double* K,
                        const double* V, const std::vector<double>& probs, const double* dO, double* dQ,
                        double* dK, double* dV) {
    const auto off = prob_offsets(s, segs);
    const int dh = s.head_dim;
    const int qw = s.n_heads * dh;
    const int kw = s.n_kv_heads * dh;
    const int group = s.n_heads / s.n_kv_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const int tasks = static_cast<int>(segs.size()) * s.n_kv_heads;
#pragma omp parallel for schedule(dynamic)
    for (int task = 0; task < tasks; ++task) {
        const int g = task / s.n_kv_heads;
        const int kh = task % s.n_kv_heads;
        const int base = segs[g].start;
        const int n = segs[g].length;
        std::vector<double> dS(static_cast<size_t>(n));
        for (int h = kh * group; h < (kh + 1) * group; ++h) {
            const double* P = probs.data() + off[g] + static_cast<size_t>(h) * n * n;
            for (int i = 0; i < n; ++i) {
                const int jmax = s.causal ? i + 1 : n;
                const double* prow = P + static_cast<size_t>(i) * n;
                const double* dout = dO + static_cast<size_t>(base + i) * qw + h * dh;
                const double* q = Q + static_cast<size_t>(base + i) * qw + h * dh;
                double* dq = dQ + static_cast<size_t>(base + i) * qw + h * dh;
                double rowdot = 0.0;
                for (int j = 0; j < jmax; ++j) {
                    const double* v = V + static_cast<size_t>(base + j) * kw + kh * dh;
                    double acc = 0.0;
#pragma omp simd reduction(+ : acc)
                    for (int d = 0; d < dh; ++d) acc += dout[d] * v[d];
                    dS[j] = acc;
                    rowdot += acc * prow[j];
                }
                for (int j = 0; j < jmax; ++j) {
                    const double p = prow[j];
                    const double ds = p * (dS[j] - rowdot) * scale;
                    const double* k = K + static_cast<size_t>(base + j) * kw + kh * dh;
                    double* dk = dK + static_cast<size_t>(base + j) * kw + kh * dh;
                    double* dv = dV + static_cast<size_t>(base + j) * kw + kh * dh;
#pragma omp simd
                    for (int d = 0; d < dh; ++d) {
                        dq[d] += ds * k[d];
                        dk[d] += ds * q[d];
                        dv[d] += p * dout[d];
                    }
                }
            }
        }
    }
}

void rmsnorm_forward(int rows, int cols, double eps, const double* x, double* y, double* inv_rms) {
#pragma omp parallel for schedule(static) if (rows * cols > 16384)
    for (int r = 0; r < rows; ++r) {
        const double* xr = x + static_cast<size_t>(r) * cols;
        double* yr = y + static_cast<size_t>(r) * cols;
        double ss = 0.0;
#pragma omp simd reduction(+ : ss)
        for (int c = 0; c < cols; ++c) ss += xr[c] * xr[c];
        const double inv = 1.0 / std::sqrt(ss / cols + eps);
        inv_rms[r] = inv;
#pragma omp simd
        for (int c = 0; c < cols; ++c) yr[c] = xr[c] * inv;
    }
}

void rmsnorm_backward(int rows, int cols, const double* y, const double* inv_rms, const double* dy, double* dx) {
#pragma omp parallel for schedule(static) if (rows * cols > 16384)
    for (int r = 0; r < rows; ++r) {
        const double* yr = y + static_cast<size_t>(r) * cols;
        const double* dyr = dy + static_cast<size_t>(r) * cols;
        double* dxr = dx + static_cast<size_t>(r) * cols;
        double m = 0.0;
#pragma omp simd reduction(+ : m)
        for (int c = 0; c < cols; ++c) m += dyr[c] * yr[c];
        m /= cols;
        const double inv = inv_rms[r];
#pragma omp simd
        for (int c = 0; c < cols; ++c) dxr[c] += inv * (dyr[c] - yr[c] * m);
    }
}

void softmax_rows(int rows, int cols, const double* x, double* y) {
#pragma omp parallel for schedule(static) if (static_cast<long>(rows) * cols > 16384)
    for (int r = 0; r < rows; ++r) {
        const double* xr = x + static_cast<size_t>(r) * cols;
        double* yr = y + static_cast<size_t>(r) * cols;
        double mx = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < cols; ++c) mx = std::max(mx, xr[c]);
        double sum = 0.0;
        for (int c = 0; c < cols; ++c) {
            yr[c] = std::exp(xr[c] - mx);
            sum += yr[c];
        }
        const double inv = 1.0 / sum;
#pragma omp simd
        for (int c = 0; c < cols; ++c) yr[c] *= inv;
    }
}

}  // namespace parallel

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------
#define TDC_DISPATCH(fn, ...) \
    (backend() == Backend::serial ? serial::fn(__VA_ARGS__) : parallel::fn(__VA_ARGS__))

void gemm_nn(int M, int N, int K, const double* A, const double* B, double* C, bool accumulate) {
    TDC_DISPATCH(gemm_nn, M, N, K, A, B, C, accumulate);
}
void gemm_nt(int M, int N, int K, const double* A, const double* B, double* C, bool accumulate) {
    TDC_DISPATCH(gemm_nt, M, N, K, A, B, C, accumulate);
}
void gemm_tn(int M, int N, int K, const double* A, const double* B, double* C, bool accumulate) {
    TDC_DISPATCH(gemm_tn, M, N, K, A, B, C, accumulate);
}
void attention_forward(const AttentionShape& s, std::span<const Segment> segs, const double* Q, const double* K,
                       const double* V, double* O, std::vector<double>& probs) {
    TDC_DISPATCH(attention_forward, s, segs, Q, K, V, O, probs);
}
void attention_backward(const AttentionShape& s, std::span<const Segment> segs, const double* Q, const double* K,
                        const double* V, const std::vector<double>& probs, const double* dO, double* dQ,
                        double* dK, double* dV) {
    TDC_DISPATCH(attention_backward, s, segs, Q, K, V, probs, dO, dQ, dK, dV);
}
void rmsnorm_forward(int rows, int cols, double eps, const double* x, double* y, double* inv_rms) {
    TDC_DISPATCH(rmsnorm_forward, rows, cols, eps, x, y, inv_rms);
}
void rmsnorm_backward(int rows, int cols, const double* y, const double* inv_rms, const double* dy, double* dx) {
    TDC_DISPATCH(rmsnorm_backward, rows, cols, y, inv_rms, dy, dx);
}
void softmax_rows(int rows, int cols, const double* x, double* y) { TDC_DISPATCH(softmax_rows, rows, cols, x, y); }

#undef TDC_DISPATCH

}  // namespace tdc::kernels
