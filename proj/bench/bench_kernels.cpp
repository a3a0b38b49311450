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


// Serial reference vs OpenMP kernels. The parallel versions are also blocked
// for cache, so they win even with OMP_NUM_THREADS=1; more threads add to it.

#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "tadicodec/kernels.hpp"

namespace k = tdc::kernels;

namespace {

std::vector<double> filled(size_t n, double phase) {
    std::vector<double> v(n);
    for (size_t i = 0; i < n; ++i) v[i] = std::sin(0.37 * static_cast<double>(i) + phase);
    return v;
}

template <bool Parallel>
void BM_gemm(benchmark::State& st) {
    const int n = static_cast<int>(st.range(0));
    const auto a = filled(size_t(n) * n, 0.1), b = filled(size_t(n) * n, 0.7);
    std::vector<double> c(size_t(n) * n);
    for (auto _ : st) {
        if constexpr (Parallel) k::parallel::gemm_nn(n, n, n, a.data(), b.data(), c.data(), false);
        else k::serial::gemm_nn(n, n, n, a.data(), b.data(), c.data(), false);
        benchmark::DoNotOptimize(c.data());
    }
    st.SetItemsProcessed(st.iterations() * 2L * n * n * n);
}

template <bool Parallel>
void BM_attention(benchmark::State& st) {
    const int rows = static_cast<int>(st.range(0));
    const k::AttentionShape s{.rows = rows, .n_heads = 4, .n_kv_heads = 2, .head_dim = 32, .causal = false};
    const k::Segment seg{0, rows};
    const auto q = filled(size_t(rows) * 128, 0.2), kk = filled(size_t(rows) * 64, 0.5), v = filled(size_t(rows) * 64, 0.9);
    std::vector<double> o(size_t(rows) * 128), probs;
    for (auto _ : st) {
        if constexpr (Parallel) k::parallel::attention_forward(s, {&seg, 1}, q.data(), kk.data(), v.data(), o.data(), probs);
        else k::serial::attention_forward(s, {&seg, 1}, q.data(), kk.data(), v.data(), o.data(), probs);
        benchmark::DoNotOptimize(o.data());
    }
}

template <bool Parallel>
void BM_rmsnorm(benchmark::State& st) {
    const int rows = static_cast<int>(st.range(0)), cols = 256;
    const auto x = filled(size_t(rows) * cols, 0.3);
    std::vector<double> y(x.size()), inv(rows);
    for (auto _ : st) {
        if constexpr (Parallel) k::parallel::rmsnorm_forward(rows, cols, 1e-6, x.data(), y.data(), inv.data());
        else k::serial::rmsnorm_forward(rows, cols, 1e-6, x.data(), y.data(), inv.data());
        benchmark::DoNotOptimize(y.data());
    }
}

}  // namespace

BENCHMARK(BM_gemm<false>)->Name("gemm/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_gemm<true>)->Name("gemm/parallel")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_attention<false>)->Name("attention/serial")->Arg(128)->Arg(512);
BENCHMARK(BM_attention<true>)->Name("attention/parallel")->Arg(128)->Arg(512);
BENCHMARK(BM_rmsnorm<false>)->Name("rmsnorm/serial")->Arg(256)->Arg(4096);
BENCHMARK(BM_rmsnorm<true>)->Name("rmsnorm/parallel")->Arg(256)->Arg(4096);

BENCHMARK_MAIN();
