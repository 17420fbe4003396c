#pragma once

// Dense float kernels behind a runtime-selected dispatch table.
//
// Every kernel has a portable scalar reference and an AVX2/FMA variant. The
// active variant is chosen once from CPUID, and can be pinned with the
// UTLS_SIMD environment variable ("scalar" or "avx2") or force_isa().
//
// Per-element results of gemm depend only on the element's row of A and
// column of B (the reduction runs over k in ascending order), so computing a
// column alone or as part of a wider matrix gives bit-identical values within
// one variant. Inference batching relies on this.

#include <cstddef>
#include <string_view>

namespace utls::simd {

enum class Isa { scalar, avx2 };

struct KernelTable {
    /// C[M x N] = A[M x K] * B[K x N], or C += A * B when accumulate is set.
    /// Row-major with explicit leading dimensions.
    void (*gemm)(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
                 int ldc, bool accumulate);
    float (*dot)(const float* x, const float* y, std::size_t n);
    /// y += alpha * x
    void (*axpy)(float alpha, const float* x, float* y, std::size_t n);
    /// y = max(x, 0); x and y may alias.
    void (*relu)(const float* x, float* y, std::size_t n);
    /// dx = (y > 0) ? dy : 0
    void (*relu_backward)(const float* y, const float* dy, float* dx, std::size_t n);
};

bool isa_supported(Isa isa);
std::string_view isa_name(Isa isa);

/// Kernels of a specific variant. Throws if the CPU lacks it.
const KernelTable& kernels_for(Isa isa);

/// Kernels of the active variant.
const KernelTable& kernels();
Isa active_isa();

/// Pins the active variant (tests, benchmarks). Throws if unsupported.
void force_isa(Isa isa);

namespace detail {
const KernelTable& scalar_table();
const KernelTable& avx2_table();
}  // namespace detail

}  // namespace utls::simd
