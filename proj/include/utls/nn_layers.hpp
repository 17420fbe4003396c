#pragma once

// Layer primitives for the patch CNN. Convolution activations are stored
// channel-major across the batch (C, N, H, W) so that one GEMM covers the
// whole batch; dense activations are plain (N x features) matrices.

#include <span>
#include <vector>

namespace utls::nn {

struct Tensor {
    int c = 0;
    int n = 0;
    int h = 0;
    int w = 0;
    std::vector<float> data;

    Tensor() = default;
    Tensor(int c_, int n_, int h_, int w_) : c(c_), n(n_), h(h_), w(w_), data(static_cast<std::size_t>(c_) * n_ * h_ * w_, 0.0f) {}

    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    float* plane_ptr(int ci, int ni) { return data.data() + (static_cast<std::size_t>(ci) * n + ni) * plane(); }
    const float* plane_ptr(int ci, int ni) const {
        return data.data() + (static_cast<std::size_t>(ci) * n + ni) * plane();
    }
};

struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<float> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0f) {}
    float* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
    const float* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
};

/// Odd square kernel with "same" padding: out = ceil(in / stride).
struct ConvShape {
    int in_c = 1;
    int out_c = 1;
    int kernel = 3;
    int stride = 1;

    int pad() const { return kernel / 2; }
    int out_dim(int in) const { return (in + 2 * pad() - kernel) / stride + 1; }
    int patch_len() const { return in_c * kernel * kernel; }
};

void transpose(const float* src, int rows, int cols, float* dst);

/// col is (in_c * k * k) x (N * out_h * out_w).
void im2col(const Tensor& in, const ConvShape& shape, int out_h, int out_w, std::vector<float>& col);
/// Scatter-adds columns back into `din`, which must be shaped and zeroed.
void col2im(const std::vector<float>& col, const ConvShape& shape, int out_h, int out_w, Tensor& din);

/// weight is out_c x (in_c k k). Keeps the im2col buffer in *col_cache when given.
Tensor conv_forward(const Tensor& in, const ConvShape& shape, const float* weight, const float* bias,
                    std::vector<float>* col_cache = nullptr);
/// Accumulates into dweight / dbias; returns dL/din when need_din.
Tensor conv_backward(const Tensor& dout, const ConvShape& shape, int in_h, int in_w, const float* weight,
                     const std::vector<float>& col, float* dweight, float* dbias, bool need_din);

/// 2 x 2, stride 2, floor mode.
Tensor maxpool_forward(const Tensor& in, std::vector<int>* argmax = nullptr);
Tensor maxpool_backward(const Tensor& dout, const std::vector<int>& argmax, int in_h, int in_w);

/// (C, N, H, W) -> N x C
Matrix global_avg_pool(const Tensor& in);
Tensor global_avg_pool_backward(const Matrix& dout, int h, int w);

/// weight is in x out (row-major), y = x W + b.
Matrix dense_forward(const Matrix& x, const float* weight, const float* bias, int out);
/// Accumulates into dweight / dbias; returns dL/dx when need_dx.
Matrix dense_backward(const Matrix& dy, const Matrix& x, const float* weight, float* dweight, float* dbias,
                      bool need_dx);

void relu_inplace(std::span<float> x);
/// dy *= (y > 0)
void relu_backward_inplace(std::span<const float> y, std::span<float> dy);

}  // namespace utls::nn
