#include "utls/nn_layers.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "utls/raster.hpp"
#include "utls/simd/kernels.hpp"

namespace utls::nn {

void transpose(const float* src, int rows, int cols, float* dst) {
    constexpr int kBlock = 32;
    for (int r0 = 0; r0 < rows; r0 += kBlock)
        for (int c0 = 0; c0 < cols; c0 += kBlock)
            for (int r = r0; r < std::min(rows, r0 + kBlock); ++r)
                for (int c = c0; c < std::min(cols, c0 + kBlock); ++c)
                    dst[static_cast<std::size_t>(c) * rows + r] = src[static_cast<std::size_t>(r) * cols + c];
}

void im2col(const Tensor& in, const ConvShape& s, int out_h, int out_w, std::vector<float>& col) {
    const int k = s.kernel;
    const int pad = s.pad();
    const std::size_t width = static_cast<std::size_t>(in.n) * out_h * out_w;
    col.assign(static_cast<std::size_t>(s.patch_len()) * width, 0.0f);
    for (int c = 0; c < in.c; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                float* dst = col.data() + (static_cast<std::size_t>(c) * k * k + ki * k + kj) * width;
                for (int n = 0; n < in.n; ++n) {
                    const float* src = in.plane_ptr(c, n);
                    float* d = dst + static_cast<std::size_t>(n) * out_h * out_w;
                    for (int y = 0; y < out_h; ++y) {
                        const int iy = y * s.stride + ki - pad;
                        if (iy < 0 || iy >= in.h) continue;
                        for (int x = 0; x < out_w; ++x) {
                            const int ix = x * s.stride + kj - pad;
                            if (ix >= 0 && ix < in.w) d[y * out_w + x] = src[iy * in.w + ix];
                        }
                    }
                }
            }
        }
    }
}

void col2im(const std::vector<float>& col, const ConvShape& s, int out_h, int out_w, Tensor& din) {
    const int k = s.kernel;
    const int pad = s.pad();
    const std::size_t width = static_cast<std::size_t>(din.n) * out_h * out_w;
    for (int c = 0; c < din.c; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const float* src = col.data() + (static_cast<std::size_t>(c) * k * k + ki * k + kj) * width;
                for (int n = 0; n < din.n; ++n) {
                    float* dst = din.plane_ptr(c, n);
                    const float* sp = src + static_cast<std::size_t>(n) * out_h * out_w;
                    for (int y = 0; y < out_h; ++y) {
                        const int iy = y * s.stride + ki - pad;
                        if (iy < 0 || iy >= din.h) continue;
                        for (int x = 0; x < out_w; ++x) {
                            const int ix = x * s.stride + kj - pad;
                            if (ix >= 0 && ix < din.w) dst[iy * din.w + ix] += sp[y * out_w + x];
                        }
                    }
                }
            }
        }
    }
}

Tensor conv_forward(const Tensor& in, const ConvShape& s, const float* weight, const float* bias,
                    std::vector<float>* col_cache) {
    const int out_h = s.out_dim(in.h);
    const int out_w = s.out_dim(in.w);
    std::vector<float> local;
    std::vector<float>& col = col_cache ? *col_cache : local;
    im2col(in, s, out_h, out_w, col);
    Tensor out(s.out_c, in.n, out_h, out_w);
    const int width = in.n * out_h * out_w;
    const auto& k = simd::kernels();
    k.gemm(s.out_c, width, s.patch_len(), weight, s.patch_len(), col.data(), width, out.data.data(), width, false);
    for (int f = 0; f < s.out_c; ++f) {
        float* row = out.data.data() + static_cast<std::size_t>(f) * width;
        const float b = bias[f];
        for (int i = 0; i < width; ++i) row[i] += b;
    }
    return out;
}

Tensor conv_backward(const Tensor& dout, const ConvShape& s, int in_h, int in_w, const float* weight,
                     const std::vector<float>& col, float* dweight, float* dbias, bool need_din) {
    const int width = dout.n * dout.h * dout.w;
    const int plen = s.patch_len();
    const auto& k = simd::kernels();

    for (int f = 0; f < s.out_c; ++f) {
        const float* row = dout.data.data() + static_cast<std::size_t>(f) * width;
        float acc = 0.0f;
        for (int i = 0; i < width; ++i) acc += row[i];
        dbias[f] += acc;
    }

    std::vector<float> col_t(col.size());
    transpose(col.data(), plen, width, col_t.data());
    k.gemm(s.out_c, plen, width, dout.data.data(), width, col_t.data(), plen, dweight, plen, true);

    if (!need_din) return {};
    std::vector<float> w_t(static_cast<std::size_t>(s.out_c) * plen);
    transpose(weight, s.out_c, plen, w_t.data());
    std::vector<float> dcol(static_cast<std::size_t>(plen) * width);
    k.gemm(plen, width, s.out_c, w_t.data(), s.out_c, dout.data.data(), width, dcol.data(), width, false);
    Tensor din(s.in_c, dout.n, in_h, in_w);
    col2im(dcol, s, dout.h, dout.w, din);
    return din;
}

Tensor maxpool_forward(const Tensor& in, std::vector<int>* argmax) {
    const int out_h = in.h / 2;
    const int out_w = in.w / 2;
    if (out_h < 1 || out_w < 1) throw Error("maxpool: input " + std::to_string(in.h) + "x" + std::to_string(in.w) + " too small");
    Tensor out(in.c, in.n, out_h, out_w);
    if (argmax) argmax->assign(out.data.size(), 0);
    std::size_t o = 0;
    for (int c = 0; c < in.c; ++c) {
        for (int n = 0; n < in.n; ++n) {
            const float* src = in.plane_ptr(c, n);
            for (int y = 0; y < out_h; ++y) {
                for (int x = 0; x < out_w; ++x, ++o) {
                    int best = (2 * y) * in.w + 2 * x;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const int idx = (2 * y + dy) * in.w + 2 * x + dx;
                            if (src[idx] > src[best]) best = idx;
                        }
                    out.data[o] = src[best];
                    if (argmax) (*argmax)[o] = best;
                }
            }
        }
    }
    return out;
}

Tensor maxpool_backward(const Tensor& dout, const std::vector<int>& argmax, int in_h, int in_w) {
    Tensor din(dout.c, dout.n, in_h, in_w);
    std::size_t o = 0;
    for (int c = 0; c < dout.c; ++c)
        for (int n = 0; n < dout.n; ++n) {
            float* dst = din.plane_ptr(c, n);
            for (std::size_t i = 0; i < dout.plane(); ++i, ++o) dst[argmax[o]] += dout.data[o];
        }
    return din;
}

Matrix global_avg_pool(const Tensor& in) {
    Matrix out(in.n, in.c);
    const float inv = 1.0f / static_cast<float>(in.plane());
    for (int c = 0; c < in.c; ++c)
        for (int n = 0; n < in.n; ++n) {
            const float* src = in.plane_ptr(c, n);
            float acc = 0.0f;
            for (std::size_t i = 0; i < in.plane(); ++i) acc += src[i];
            out.row(n)[c] = acc * inv;
        }
    return out;
}

Tensor global_avg_pool_backward(const Matrix& dout, int h, int w) {
    Tensor din(dout.cols, dout.rows, h, w);
    const float inv = 1.0f / static_cast<float>(h * w);
    for (int c = 0; c < din.c; ++c)
        for (int n = 0; n < din.n; ++n) {
            float* dst = din.plane_ptr(c, n);
            std::fill(dst, dst + din.plane(), dout.row(n)[c] * inv);
        }
    return din;
}

Matrix dense_forward(const Matrix& x, const float* weight, const float* bias, int out) {
    Matrix y(x.rows, out);
    simd::kernels().gemm(x.rows, out, x.cols, x.data.data(), x.cols, weight, out, y.data.data(), out, false);
    for (int r = 0; r < y.rows; ++r) {
        float* row = y.row(r);
        for (int j = 0; j < out; ++j) row[j] += bias[j];
    }
    return y;
}

Matrix dense_backward(const Matrix& dy, const Matrix& x, const float* weight, float* dweight, float* dbias,
                      bool need_dx) {
    const auto& k = simd::kernels();
    const int in = x.cols;
    const int out = dy.cols;
    for (int r = 0; r < dy.rows; ++r) {
        const float* row = dy.row(r);
        for (int j = 0; j < out; ++j) dbias[j] += row[j];
    }
    std::vector<float> x_t(x.data.size());
    transpose(x.data.data(), x.rows, in, x_t.data());
    k.gemm(in, out, x.rows, x_t.data(), x.rows, dy.data.data(), out, dweight, out, true);
    if (!need_dx) return {};
    std::vector<float> w_t(static_cast<std::size_t>(in) * out);
    transpose(weight, in, out, w_t.data());
    Matrix dx(dy.rows, in);
    k.gemm(dy.rows, in, out, dy.data.data(), out, w_t.data(), in, dx.data.data(), in, false);
    return dx;
}

void relu_inplace(std::span<float> x) { simd::kernels().relu(x.data(), x.data(), x.size()); }

void relu_backward_inplace(std::span<const float> y, std::span<float> dy) {
    simd::kernels().relu_backward(y.data(), dy.data(), dy.data(), dy.size());
}

}  // namespace utls::nn
