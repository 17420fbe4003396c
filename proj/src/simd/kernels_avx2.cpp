// AVX2 + FMA kernels. This translation unit is the only one compiled with
// -mavx2 -mfma; nothing here runs unless the dispatcher confirmed support.

#include "utls/simd/kernels.hpp"

#include <cmath>
#include <stdexcept>

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

namespace utls::simd::detail {
namespace {

// One row block of `rows` (1..4) rows times a 16-column panel.
template <int Rows>
inline void block_16(int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc,
                     bool accumulate) {
    __m256 acc0[Rows];
    __m256 acc1[Rows];
    for (int r = 0; r < Rows; ++r) {
        if (accumulate) {
            acc0[r] = _mm256_loadu_ps(c + r * ldc);
            acc1[r] = _mm256_loadu_ps(c + r * ldc + 8);
        } else {
            acc0[r] = _mm256_setzero_ps();
            acc1[r] = _mm256_setzero_ps();
        }
    }
    for (int p = 0; p < k; ++p) {
        const float* brow = b + static_cast<std::ptrdiff_t>(p) * ldb;
        const __m256 b0 = _mm256_loadu_ps(brow);
        const __m256 b1 = _mm256_loadu_ps(brow + 8);
        for (int r = 0; r < Rows; ++r) {
            const __m256 av = _mm256_broadcast_ss(a + r * lda + p);
            acc0[r] = _mm256_fmadd_ps(av, b0, acc0[r]);
            acc1[r] = _mm256_fmadd_ps(av, b1, acc1[r]);
        }
    }
    for (int r = 0; r < Rows; ++r) {
        _mm256_storeu_ps(c + r * ldc, acc0[r]);
        _mm256_storeu_ps(c + r * ldc + 8, acc1[r]);
    }
}

template <int Rows>
inline void block_8(int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc,
                    bool accumulate) {
    __m256 acc[Rows];
    for (int r = 0; r < Rows; ++r)
        acc[r] = accumulate ? _mm256_loadu_ps(c + r * ldc) : _mm256_setzero_ps();
    for (int p = 0; p < k; ++p) {
        const __m256 bv = _mm256_loadu_ps(b + static_cast<std::ptrdiff_t>(p) * ldb);
        for (int r = 0; r < Rows; ++r)
            acc[r] = _mm256_fmadd_ps(_mm256_broadcast_ss(a + r * lda + p), bv, acc[r]);
    }
    for (int r = 0; r < Rows; ++r) _mm256_storeu_ps(c + r * ldc, acc[r]);
}

// Remaining columns: std::fma rounds exactly like one vfmadd lane.
template <int Rows>
inline void block_tail(int cols, int k, const float* a, int lda, const float* b, int ldb, float* c,
                       int ldc, bool accumulate) {
    for (int r = 0; r < Rows; ++r) {
        for (int j = 0; j < cols; ++j) {
            float acc = accumulate ? c[r * ldc + j] : 0.0f;
            for (int p = 0; p < k; ++p)
                acc = std::fma(a[r * lda + p], b[static_cast<std::ptrdiff_t>(p) * ldb + j], acc);
            c[r * ldc + j] = acc;
        }
    }
}

template <int Rows>
void row_block(int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc,
               bool accumulate) {
    int j = 0;
    for (; j + 16 <= n; j += 16) block_16<Rows>(k, a, lda, b + j, ldb, c + j, ldc, accumulate);
    for (; j + 8 <= n; j += 8) block_8<Rows>(k, a, lda, b + j, ldb, c + j, ldc, accumulate);
    if (j < n) block_tail<Rows>(n - j, k, a, lda, b + j, ldb, c + j, ldc, accumulate);
}

void gemm_avx2(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
               int ldc, bool accumulate) {
    int i = 0;
    for (; i + 4 <= m; i += 4)
        row_block<4>(n, k, a + static_cast<std::ptrdiff_t>(i) * lda, lda, b, ldb,
                     c + static_cast<std::ptrdiff_t>(i) * ldc, ldc, accumulate);
    for (; i < m; ++i)
        row_block<1>(n, k, a + static_cast<std::ptrdiff_t>(i) * lda, lda, b, ldb,
                     c + static_cast<std::ptrdiff_t>(i) * ldc, ldc, accumulate);
}

inline float hsum(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 shuf = _mm_movehdup_ps(lo);
    __m128 sums = _mm_add_ps(lo, shuf);
    shuf = _mm_movehl_ps(shuf, sums);
    sums = _mm_add_ss(sums, shuf);
    return _mm_cvtss_f32(sums);
}

float dot_avx2(const float* x, const float* y, std::size_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) acc = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc);
    float s = hsum(acc);
    for (; i < n; ++i) s = std::fma(x[i], y[i], s);
    return s;
}

void axpy_avx2(float alpha, const float* x, float* y, std::size_t n) {
    const __m256 av = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void relu_avx2(const float* x, float* y, std::size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
    for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward_avx2(const float* y, const float* dy, float* dx, std::size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(y + i), zero, _CMP_GT_OQ);
        _mm256_storeu_ps(dx + i, _mm256_and_ps(mask, _mm256_loadu_ps(dy + i)));
    }
    for (; i < n; ++i) dx[i] = y[i] > 0.0f ? dy[i] : 0.0f;
}

}  // namespace

const KernelTable& avx2_table() {
    static const KernelTable table{gemm_avx2, dot_avx2, axpy_avx2, relu_avx2, relu_backward_avx2};
    return table;
}

}  // namespace utls::simd::detail

#else

namespace utls::simd::detail {
const KernelTable& avx2_table() { throw std::runtime_error("AVX2 kernels not compiled in"); }
}  // namespace utls::simd::detail

#endif
