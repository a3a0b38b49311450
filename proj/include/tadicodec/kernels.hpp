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

// Dense compute kernels. Each kernel exists twice: a plain serial reference in
// `serial::` (kept for testing) and an OpenMP version in `parallel::`. The
// unqualified entry points dispatch on the process-wide backend.

#include <span>
#include <vector>

namespace tdc::kernels {

enum class Backend { serial, parallel };

void set_backend(Backend b);
Backend backend();

/// A contiguous run of rows forming one independent attention sequence.
struct Segment {
    int start = 0;
    int length = 0;
};

/// Shape of a packed multi-head attention problem.
/// Q is rows × (n_heads·head_dim); K and V are rows × (n_kv_heads·head_dim).
struct AttentionShape {
    int rows = 0;
    int n_heads = 1;
    int n_kv_heads = 1;
    int head_dim = 0;
    bool causal = false;
};

// C[M×N] (+)= A[M×K] · B[K×N]
// gemm_nt: C[M×N] (+)= A[M×K] · B[N×K]ᵀ
// gemm_tn: C[M×N] (+)= A[K×M]ᵀ · B[K×N]
#define TDC_KERNEL_DECLS                                                                                     \
    void gemm_nn(int M, int N, int K, const double* A, const double* B, double* C, bool accumulate);         \
    void gemm_nt(int M, int N, int K, const double* A, const double* B, double* C, bool accumulate);         \
    void gemm_tn(int M, int N, int K, const double* A, const double* B, double* C, bool accumulate);         \
    /* probs receives softmax weights: for each segment and head a length×length block, laid out */           \
    /* segment-major then head-major. */                                                                     \
    void attention_forward(const AttentionShape& s, std::span<const Segment> segs, const double* Q,            \
                           const double* K, const double* V, double* O, std::vector<double>& probs);         \
    void attention_backward(const AttentionShape& s, std::span<const Segment> segs, const double* Q,           \
                            const double* K, const double* V, const std::vector<double>& probs,              \
                            const double* dO, double* dQ, double* dK, double* dV);                           \
    /* y = x / sqrt(mean(x²) + eps) row-wise; inv_rms receives one value per row. */                         \
    void rmsnorm_forward(int rows, int cols, double eps, const double* x, double* y, double* inv_rms);       \
    void rmsnorm_backward(int rows, int cols, const double* y, const double* inv_rms, const double* dy,      \
                          double* dx);                                                                       \
    /* Row softmax; in-place allowed. */                                                                     \
    void softmax_rows(int rows, int cols, const double* x, double* y);

namespace serial {
TDC_KERNEL_DECLS
}
namespace parallel {
TDC_KERNEL_DECLS
}
TDC_KERNEL_DECLS

#undef TDC_KERNEL_DECLS

/// Number of softmax weights attention_forward stores for the given segments.
size_t attention_probs_size(const AttentionShape& s, std::span<const Segment> segs);

}  // namespace tdc::kernels
