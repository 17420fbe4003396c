// Reference kernels. Built with -ffp-contract=off so no FMA is formed.

#include "utls/simd/kernels.hpp"

#include <algorithm>
#include <vector>

namespace utls::simd::detail {
namespace {

void gemm_scalar(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
                 int ldc, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        float* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
        if (!accumulate) std::fill(crow, crow + n, 0.0f);
        const float* arow = a + static_cast<std::ptrdiff_t>(i) * lda;
        for (int p = 0; p < k; ++p) {
            const float av = arow[p];
            const float* brow = b + static_cast<std::ptrdiff_t>(p) * ldb;
            for (int j = 0; j < n; ++j) crow[j] = crow[j] + av * brow[j];
        }
    }
}

float dot_scalar(const float* x, const float* y, std::size_t n) {
    float s = 0.0f;
    for (std::size_t i = 0; i < n; ++i) s = s + x[i] * y[i];
    return s;
}

void axpy_scalar(float alpha, const float* x, float* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

void relu_scalar(const float* x, float* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward_scalar(const float* y, const float* dy, float* dx, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dx[i] = y[i] > 0.0f ? dy[i] : 0.0f;
}

}  // namespace

const KernelTable& scalar_table() {
    static const KernelTable table{gemm_scalar, dot_scalar, axpy_scalar, relu_scalar,
                                   relu_backward_scalar};
    return table;
}

}  // namespace utls::simd::detail
