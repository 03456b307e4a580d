#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "sonarzoo/tensor.hpp"

// Forward/backward kernels for the layer set the model zoo needs. Every
// kernel is a pure function over immutable inputs with a fixed reduction
// order, so repeated calls are bit-identical and calls from several threads
// are safe. Kernels are templated so the gradient-check suite can run the
// exact same code at 64-bit precision.
namespace sonarzoo {

enum class Padding { Same, Valid };

// "Same" pads symmetrically with the extra cell on the bottom/right.
inline std::int64_t conv_out_extent(std::int64_t in, std::int64_t k, std::int64_t stride,
                                    Padding padding) {
    if (padding == Padding::Same) return (in + stride - 1) / stride;
    return (in - k) / stride + 1; // caller validates >= 1
}

inline std::int64_t pad_before(std::int64_t in, std::int64_t out, std::int64_t k,
                               std::int64_t stride, Padding padding) {
    if (padding == Padding::Valid) return 0;
    const std::int64_t total = std::max<std::int64_t>((out - 1) * stride + k - in, 0);
    return total / 2;
}

namespace detail {
template <typename T>
void check_rank(const TensorT<T>& t, int rank, const char* what) {
    if (t.rank() != rank)
        throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + t.shape_string());
}
} // namespace detail

// ---------------------------------------------------------------------------
// conv2d: x (B,H,W,Cin), kernel (kh,kw,Cin,Cout), optional bias (Cout)

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& x, const TensorT<T>& kernel, const TensorT<T>* bias,
                          std::int64_t stride, Padding padding) {
    detail::check_rank(x, 4, "conv2d input");
    detail::check_rank(kernel, 4, "conv2d kernel");
    const std::int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const std::int64_t kh = kernel.dim(0), kw = kernel.dim(1), F = kernel.dim(3);
    if (kernel.dim(2) != C)
        throw ShapeError("conv2d: kernel expects " + std::to_string(kernel.dim(2)) +
                         " input channels, input has " + std::to_string(C));
    const std::int64_t Ho = conv_out_extent(H, kh, stride, padding);
    const std::int64_t Wo = conv_out_extent(W, kw, stride, padding);
    if (Ho < 1 || Wo < 1)
        throw ShapeError("conv2d: output extent collapses on input " + x.shape_string());
    const std::int64_t py = pad_before(H, Ho, kh, stride, padding);
    const std::int64_t px = pad_before(W, Wo, kw, stride, padding);

    TensorT<T> y({B, Ho, Wo, F});
    const T* xd = x.data();
    const T* kd = kernel.data();
    T* yd = y.data();
    const T* bd = bias ? bias->data() : nullptr;

    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t oy = 0; oy < Ho; ++oy)
            for (std::int64_t ox = 0; ox < Wo; ++ox) {
                T* out = yd + ((b * Ho + oy) * Wo + ox) * F;
                if (bd)
                    for (std::int64_t f = 0; f < F; ++f) out[f] = bd[f];
                for (std::int64_t ky = 0; ky < kh; ++ky) {
                    const std::int64_t iy = oy * stride - py + ky;
                    if (iy < 0 || iy >= H) continue;
                    for (std::int64_t kx = 0; kx < kw; ++kx) {
                        const std::int64_t ix = ox * stride - px + kx;
                        if (ix < 0 || ix >= W) continue;
                        const T* in = xd + ((b * H + iy) * W + ix) * C;
                        const T* kk = kd + (ky * kw + kx) * C * F;
                        for (std::int64_t ci = 0; ci < C; ++ci) {
                            const T v = in[ci];
                            const T* krow = kk + ci * F;
                            for (std::int64_t f = 0; f < F; ++f) out[f] += v * krow[f];
                        }
                    }
                }
            }
    return y;
}

template <typename T>
struct ConvGrads {
    TensorT<T> dx;
    TensorT<T> dkernel;
    TensorT<T> dbias; // empty when the layer has no bias
};

template <typename T>
ConvGrads<T> conv2d_backward(const TensorT<T>& x, const TensorT<T>& kernel, bool has_bias,
                             std::int64_t stride, Padding padding, const TensorT<T>& dy) {
    const std::int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const std::int64_t kh = kernel.dim(0), kw = kernel.dim(1), F = kernel.dim(3);
    const std::int64_t Ho = dy.dim(1), Wo = dy.dim(2);
    const std::int64_t py = pad_before(H, Ho, kh, stride, padding);
    const std::int64_t px = pad_before(W, Wo, kw, stride, padding);

    ConvGrads<T> g;
    g.dx = TensorT<T>(x.dims());
    g.dkernel = TensorT<T>(kernel.dims());
    if (has_bias) g.dbias = TensorT<T>({F});

    const T* xd = x.data();
    const T* kd = kernel.data();
    const T* gd = dy.data();
    T* dxd = g.dx.data();
    T* dkd = g.dkernel.data();
    T* dbd = has_bias ? g.dbias.data() : nullptr;

    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t oy = 0; oy < Ho; ++oy)
            for (std::int64_t ox = 0; ox < Wo; ++ox) {
                const T* go = gd + ((b * Ho + oy) * Wo + ox) * F;
                if (dbd)
                    for (std::int64_t f = 0; f < F; ++f) dbd[f] += go[f];
                for (std::int64_t ky = 0; ky < kh; ++ky) {
                    const std::int64_t iy = oy * stride - py + ky;
                    if (iy < 0 || iy >= H) continue;
                    for (std::int64_t kx = 0; kx < kw; ++kx) {
                        const std::int64_t ix = ox * stride - px + kx;
                        if (ix < 0 || ix >= W) continue;
                        const T* in = xd + ((b * H + iy) * W + ix) * C;
                        T* dxp = dxd + ((b * H + iy) * W + ix) * C;
                        const std::int64_t koff = (ky * kw + kx) * C * F;
                        for (std::int64_t ci = 0; ci < C; ++ci) {
                            const T v = in[ci];
                            const T* krow = kd + koff + ci * F;
                            T* dkrow = dkd + koff + ci * F;
                            T acc = 0;
                            for (std::int64_t f = 0; f < F; ++f) {
                                dkrow[f] += v * go[f];
                                acc += krow[f] * go[f];
                            }
                            dxp[ci] += acc;
                        }
                    }
                }
            }
    return g;
}

// ---------------------------------------------------------------------------
// depthwise conv2d: x (B,H,W,C), kernel (kh,kw,C), optional bias (C)

template <typename T>
TensorT<T> depthwise_forward(const TensorT<T>& x, const TensorT<T>& kernel, const TensorT<T>* bias,
                             std::int64_t stride, Padding padding) {
    detail::check_rank(x, 4, "depthwise input");
    detail::check_rank(kernel, 3, "depthwise kernel");
    const std::int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const std::int64_t kh = kernel.dim(0), kw = kernel.dim(1);
    if (kernel.dim(2) != C)
        throw ShapeError("depthwise: kernel has " + std::to_string(kernel.dim(2)) +
                         " channels, input has " + std::to_string(C));
    const std::int64_t Ho = conv_out_extent(H, kh, stride, padding);
    const std::int64_t Wo = conv_out_extent(W, kw, stride, padding);
    if (Ho < 1 || Wo < 1)
        throw ShapeError("depthwise: output extent collapses on input " + x.shape_string());
    const std::int64_t py = pad_before(H, Ho, kh, stride, padding);
    const std::int64_t px = pad_before(W, Wo, kw, stride, padding);

    TensorT<T> y({B, Ho, Wo, C});
    const T* xd = x.data();
    const T* kd = kernel.data();
    const T* bd = bias ? bias->data() : nullptr;
    T* yd = y.data();

    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t oy = 0; oy < Ho; ++oy)
            for (std::int64_t ox = 0; ox < Wo; ++ox) {
                T* out = yd + ((b * Ho + oy) * Wo + ox) * C;
                if (bd)
                    for (std::int64_t c = 0; c < C; ++c) out[c] = bd[c];
                for (std::int64_t ky = 0; ky < kh; ++ky) {
                    const std::int64_t iy = oy * stride - py + ky;
                    if (iy < 0 || iy >= H) continue;
                    for (std::int64_t kx = 0; kx < kw; ++kx) {
                        const std::int64_t ix = ox * stride - px + kx;
                        if (ix < 0 || ix >= W) continue;
                        const T* in = xd + ((b * H + iy) * W + ix) * C;
                        const T* kk = kd + (ky * kw + kx) * C;
                        for (std::int64_t c = 0; c < C; ++c) out[c] += in[c] * kk[c];
                    }
                }
            }
    return y;
}

template <typename T>
ConvGrads<T> depthwise_backward(const TensorT<T>& x, const TensorT<T>& kernel, bool has_bias,
                                std::int64_t stride, Padding padding, const TensorT<T>& dy) {
    const std::int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const std::int64_t kh = kernel.dim(0), kw = kernel.dim(1);
    const std::int64_t Ho = dy.dim(1), Wo = dy.dim(2);
    const std::int64_t py = pad_before(H, Ho, kh, stride, padding);
    const std::int64_t px = pad_before(W, Wo, kw, stride, padding);

    ConvGrads<T> g;
    g.dx = TensorT<T>(x.dims());
    g.dkernel = TensorT<T>(kernel.dims());
    if (has_bias) g.dbias = TensorT<T>({C});

    const T* xd = x.data();
    const T* kd = kernel.data();
    const T* gd = dy.data();
    T* dxd = g.dx.data();
    T* dkd = g.dkernel.data();
    T* dbd = has_bias ? g.dbias.data() : nullptr;

    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t oy = 0; oy < Ho; ++oy)
            for (std::int64_t ox = 0; ox < Wo; ++ox) {
                const T* go = gd + ((b * Ho + oy) * Wo + ox) * C;
                if (dbd)
                    for (std::int64_t c = 0; c < C; ++c) dbd[c] += go[c];
                for (std::int64_t ky = 0; ky < kh; ++ky) {
                    const std::int64_t iy = oy * stride - py + ky;
                    if (iy < 0 || iy >= H) continue;
                    for (std::int64_t kx = 0; kx < kw; ++kx) {
                        const std::int64_t ix = ox * stride - px + kx;
                        if (ix < 0 || ix >= W) continue;
                        const T* in = xd + ((b * H + iy) * W + ix) * C;
                        T* dxp = dxd + ((b * H + iy) * W + ix) * C;
                        const T* kk = kd + (ky * kw + kx) * C;
                        T* dkk = dkd + (ky * kw + kx) * C;
                        for (std::int64_t c = 0; c < C; ++c) {
                            dkk[c] += in[c] * go[c];
                            dxp[c] += kk[c] * go[c];
                        }
                    }
                }
            }
    return g;
}

// ---------------------------------------------------------------------------
// dense: x (B,N), kernel (N,M), optional bias (M)

template <typename T>
TensorT<T> dense_forward(const TensorT<T>& x, const TensorT<T>& kernel, const TensorT<T>* bias) {
    detail::check_rank(x, 2, "dense input");
    detail::check_rank(kernel, 2, "dense kernel");
    const std::int64_t B = x.dim(0), N = x.dim(1), M = kernel.dim(1);
    if (kernel.dim(0) != N)
        throw ShapeError("dense: kernel expects " + std::to_string(kernel.dim(0)) +
                         " inputs, got " + std::to_string(N));
    TensorT<T> y({B, M});
    const T* xd = x.data();
    const T* kd = kernel.data();
    const T* bd = bias ? bias->data() : nullptr;
    T* yd = y.data();
    for (std::int64_t b = 0; b < B; ++b) {
        T* out = yd + b * M;
        if (bd)
            for (std::int64_t m = 0; m < M; ++m) out[m] = bd[m];
        const T* in = xd + b * N;
        for (std::int64_t n = 0; n < N; ++n) {
            const T v = in[n];
            const T* krow = kd + n * M;
            for (std::int64_t m = 0; m < M; ++m) out[m] += v * krow[m];
        }
    }
    return y;
}

template <typename T>
ConvGrads<T> dense_backward(const TensorT<T>& x, const TensorT<T>& kernel, bool has_bias,
                            const TensorT<T>& dy) {
    const std::int64_t B = x.dim(0), N = x.dim(1), M = kernel.dim(1);
    ConvGrads<T> g;
    g.dx = TensorT<T>(x.dims());
    g.dkernel = TensorT<T>(kernel.dims());
    if (has_bias) g.dbias = TensorT<T>({M});

    const T* xd = x.data();
    const T* kd = kernel.data();
    const T* gd = dy.data();
    T* dxd = g.dx.data();
    T* dkd = g.dkernel.data();
    T* dbd = has_bias ? g.dbias.data() : nullptr;

    for (std::int64_t b = 0; b < B; ++b) {
        const T* go = gd + b * M;
        const T* in = xd + b * N;
        T* dxp = dxd + b * N;
        if (dbd)
            for (std::int64_t m = 0; m < M; ++m) dbd[m] += go[m];
        for (std::int64_t n = 0; n < N; ++n) {
            const T v = in[n];
            const T* krow = kd + n * M;
            T* dkrow = dkd + n * M;
            T acc = 0;
            for (std::int64_t m = 0; m < M; ++m) {
                dkrow[m] += v * go[m];
                acc += krow[m] * go[m];
            }
            dxp[n] = acc;
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// batch norm over (B,H,W) per channel. Biased batch variance throughout.

template <typename T>
struct BatchNormCache {
    TensorT<T> mean; // (C)
    TensorT<T> var;  // (C), biased
};

template <typename T>
TensorT<T> batchnorm_forward_train(const TensorT<T>& x, const TensorT<T>& gamma,
                                   const TensorT<T>& beta, double epsilon,
                                   BatchNormCache<T>* cache) {
    detail::check_rank(x, 4, "batch_norm input");
    const std::int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const std::int64_t N = B * H * W;
    TensorT<T> mean({C}), var({C});
    const T* xd = x.data();
    for (std::int64_t i = 0; i < N; ++i) {
        const T* row = xd + i * C;
        for (std::int64_t c = 0; c < C; ++c) mean[c] += row[c];
    }
    for (std::int64_t c = 0; c < C; ++c) mean[c] /= static_cast<T>(N);
    for (std::int64_t i = 0; i < N; ++i) {
        const T* row = xd + i * C;
        for (std::int64_t c = 0; c < C; ++c) {
            const T d = row[c] - mean[c];
            var[c] += d * d;
        }
    }
    for (std::int64_t c = 0; c < C; ++c) var[c] /= static_cast<T>(N);

    TensorT<T> y(x.dims());
    T* yd = y.data();
    std::vector<T> inv(static_cast<std::size_t>(C));
    for (std::int64_t c = 0; c < C; ++c)
        inv[static_cast<std::size_t>(c)] = T(1) / std::sqrt(var[c] + static_cast<T>(epsilon));
    for (std::int64_t i = 0; i < N; ++i) {
        const T* row = xd + i * C;
        T* out = yd + i * C;
        for (std::int64_t c = 0; c < C; ++c)
            out[c] = gamma[c] * (row[c] - mean[c]) * inv[static_cast<std::size_t>(c)] + beta[c];
    }
    if (cache) {
        cache->mean = std::move(mean);
        cache->var = std::move(var);
    }
    return y;
}

template <typename T>
TensorT<T> batchnorm_forward_infer(const TensorT<T>& x, const TensorT<T>& gamma,
                                   const TensorT<T>& beta, const TensorT<T>& moving_mean,
                                   const TensorT<T>& moving_var, double epsilon) {
    detail::check_rank(x, 4, "batch_norm input");
    const std::int64_t C = x.dim(3);
    const std::int64_t N = x.size() / C;
    TensorT<T> y(x.dims());
    const T* xd = x.data();
    T* yd = y.data();
    std::vector<T> scale(static_cast<std::size_t>(C)), shift(static_cast<std::size_t>(C));
    for (std::int64_t c = 0; c < C; ++c) {
        const T s = gamma[c] / std::sqrt(moving_var[c] + static_cast<T>(epsilon));
        scale[static_cast<std::size_t>(c)] = s;
        shift[static_cast<std::size_t>(c)] = beta[c] - s * moving_mean[c];
    }
    for (std::int64_t i = 0; i < N; ++i) {
        const T* row = xd + i * C;
        T* out = yd + i * C;
        for (std::int64_t c = 0; c < C; ++c)
            out[c] = scale[static_cast<std::size_t>(c)] * row[c] + shift[static_cast<std::size_t>(c)];
    }
    return y;
}

template <typename T>
struct BatchNormGrads {
    TensorT<T> dx, dgamma, dbeta;
};

template <typename T>
BatchNormGrads<T> batchnorm_backward_train(const TensorT<T>& x, const TensorT<T>& gamma,
                                           const BatchNormCache<T>& cache, double epsilon,
                                           const TensorT<T>& dy) {
    const std::int64_t C = x.dim(3);
    const std::int64_t N = x.size() / C;
    BatchNormGrads<T> g;
    g.dx = TensorT<T>(x.dims());
    g.dgamma = TensorT<T>({C});
    g.dbeta = TensorT<T>({C});

    const T* xd = x.data();
    const T* gd = dy.data();
    std::vector<T> inv(static_cast<std::size_t>(C));
    for (std::int64_t c = 0; c < C; ++c)
        inv[static_cast<std::size_t>(c)] =
            T(1) / std::sqrt(cache.var[c] + static_cast<T>(epsilon));

    // dgamma = sum g * xhat, dbeta = sum g
    for (std::int64_t i = 0; i < N; ++i) {
        const T* row = xd + i * C;
        const T* go = gd + i * C;
        for (std::int64_t c = 0; c < C; ++c) {
            const T xhat = (row[c] - cache.mean[c]) * inv[static_cast<std::size_t>(c)];
            g.dgamma[c] += go[c] * xhat;
            g.dbeta[c] += go[c];
        }
    }
    T* dxd = g.dx.data();
    for (std::int64_t i = 0; i < N; ++i) {
        const T* row = xd + i * C;
        const T* go = gd + i * C;
        T* out = dxd + i * C;
        for (std::int64_t c = 0; c < C; ++c) {
            const T iv = inv[static_cast<std::size_t>(c)];
            const T xhat = (row[c] - cache.mean[c]) * iv;
            out[c] = gamma[c] * iv *
                     (go[c] - g.dbeta[c] / static_cast<T>(N) -
                      xhat * g.dgamma[c] / static_cast<T>(N));
        }
    }
    return g;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward_infer(const TensorT<T>& x, const TensorT<T>& gamma,
                                           const TensorT<T>& moving_mean,
                                           const TensorT<T>& moving_var, double epsilon,
                                           const TensorT<T>& dy) {
    const std::int64_t C = x.dim(3);
    const std::int64_t N = x.size() / C;
    BatchNormGrads<T> g;
    g.dx = TensorT<T>(x.dims());
    g.dgamma = TensorT<T>({C});
    g.dbeta = TensorT<T>({C});
    const T* xd = x.data();
    const T* gd = dy.data();
    T* dxd = g.dx.data();
    for (std::int64_t i = 0; i < N; ++i) {
        const T* row = xd + i * C;
        const T* go = gd + i * C;
        T* out = dxd + i * C;
        for (std::int64_t c = 0; c < C; ++c) {
            const T iv = T(1) / std::sqrt(moving_var[c] + static_cast<T>(epsilon));
            out[c] = go[c] * gamma[c] * iv;
            g.dgamma[c] += go[c] * (row[c] - moving_mean[c]) * iv;
            g.dbeta[c] += go[c];
        }
    }
    return g;
}

// Running-statistics update, Keras convention: r = momentum*r + (1-m)*batch.
template <typename T>
void batchnorm_update_running(TensorT<T>& moving_mean, TensorT<T>& moving_var,
                              const BatchNormCache<T>& cache, double momentum) {
    const std::int64_t C = moving_mean.size();
    for (std::int64_t c = 0; c < C; ++c) {
        moving_mean[c] = static_cast<T>(momentum) * moving_mean[c] +
                         static_cast<T>(1.0 - momentum) * cache.mean[c];
        moving_var[c] = static_cast<T>(momentum) * moving_var[c] +
                        static_cast<T>(1.0 - momentum) * cache.var[c];
    }
}

// ---------------------------------------------------------------------------
// elementwise / structural ops

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& x) {
    TensorT<T> y(x.dims());
    for (std::int64_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
    return y;
}

template <typename T>
TensorT<T> relu_backward(const TensorT<T>& x, const TensorT<T>& dy) {
    TensorT<T> dx(x.dims());
    for (std::int64_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
    return dx;
}

// softmax over the last axis of a rank-2 tensor (B, K)
template <typename T>
TensorT<T> softmax_forward(const TensorT<T>& x) {
    detail::check_rank(x, 2, "softmax input");
    const std::int64_t B = x.dim(0), K = x.dim(1);
    TensorT<T> y(x.dims());
    for (std::int64_t b = 0; b < B; ++b) {
        const T* in = x.data() + b * K;
        T* out = y.data() + b * K;
        T mx = in[0];
        for (std::int64_t k = 1; k < K; ++k) mx = std::max(mx, in[k]);
        T sum = 0;
        for (std::int64_t k = 0; k < K; ++k) {
            out[k] = std::exp(in[k] - mx);
            sum += out[k];
        }
        for (std::int64_t k = 0; k < K; ++k) out[k] /= sum;
    }
    return y;
}

template <typename T>
TensorT<T> softmax_backward(const TensorT<T>& y /*softmax output*/, const TensorT<T>& dy) {
    const std::int64_t B = y.dim(0), K = y.dim(1);
    TensorT<T> dx(y.dims());
    for (std::int64_t b = 0; b < B; ++b) {
        const T* p = y.data() + b * K;
        const T* go = dy.data() + b * K;
        T* out = dx.data() + b * K;
        T dot = 0;
        for (std::int64_t k = 0; k < K; ++k) dot += go[k] * p[k];
        for (std::int64_t k = 0; k < K; ++k) out[k] = p[k] * (go[k] - dot);
    }
    return dx;
}

template <typename T>
TensorT<T> maxpool_forward(const TensorT<T>& x, std::int64_t kh, std::int64_t kw,
                           std::int64_t stride, Padding padding) {
    detail::check_rank(x, 4, "max_pool input");
    const std::int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const std::int64_t Ho = conv_out_extent(H, kh, stride, padding);
    const std::int64_t Wo = conv_out_extent(W, kw, stride, padding);
    if (Ho < 1 || Wo < 1)
        throw ShapeError("max_pool: window does not fit input " + x.shape_string());
    const std::int64_t py = pad_before(H, Ho, kh, stride, padding);
    const std::int64_t px = pad_before(W, Wo, kw, stride, padding);
    TensorT<T> y({B, Ho, Wo, C});
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t oy = 0; oy < Ho; ++oy)
            for (std::int64_t ox = 0; ox < Wo; ++ox)
                for (std::int64_t c = 0; c < C; ++c) {
                    T best = 0;
                    bool first = true;
                    for (std::int64_t ky = 0; ky < kh; ++ky) {
                        const std::int64_t iy = oy * stride - py + ky;
                        if (iy < 0 || iy >= H) continue;
                        for (std::int64_t kx = 0; kx < kw; ++kx) {
                            const std::int64_t ix = ox * stride - px + kx;
                            if (ix < 0 || ix >= W) continue;
                            const T v = x.at(b, iy, ix, c);
                            if (first || v > best) {
                                best = v;
                                first = false;
                            }
                        }
                    }
                    y.at(b, oy, ox, c) = best;
                }
    return y;
}

// Routes each upstream element to the first maximum in row-major scan order.
template <typename T>
TensorT<T> maxpool_backward(const TensorT<T>& x, std::int64_t kh, std::int64_t kw,
                            std::int64_t stride, Padding padding, const TensorT<T>& dy) {
    const std::int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const std::int64_t Ho = dy.dim(1), Wo = dy.dim(2);
    const std::int64_t py = pad_before(H, Ho, kh, stride, padding);
    const std::int64_t px = pad_before(W, Wo, kw, stride, padding);
    TensorT<T> dx(x.dims());
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t oy = 0; oy < Ho; ++oy)
            for (std::int64_t ox = 0; ox < Wo; ++ox)
                for (std::int64_t c = 0; c < C; ++c) {
                    T best = 0;
                    bool first = true;
                    std::int64_t by = -1, bx = -1;
                    for (std::int64_t ky = 0; ky < kh; ++ky) {
                        const std::int64_t iy = oy * stride - py + ky;
                        if (iy < 0 || iy >= H) continue;
                        for (std::int64_t kx = 0; kx < kw; ++kx) {
                            const std::int64_t ix = ox * stride - px + kx;
                            if (ix < 0 || ix >= W) continue;
                            const T v = x.at(b, iy, ix, c);
                            if (first || v > best) {
                                best = v;
                                by = iy;
                                bx = ix;
                                first = false;
                            }
                        }
                    }
                    dx.at(b, by, bx, c) += dy.at(b, oy, ox, c);
                }
    return dx;
}

// Average over cells inside the input; padded cells are excluded from the count.
template <typename T>
TensorT<T> avgpool_forward(const TensorT<T>& x, std::int64_t kh, std::int64_t kw,
                           std::int64_t stride, Padding padding) {
    detail::check_rank(x, 4, "avg_pool input");
    const std::int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const std::int64_t Ho = conv_out_extent(H, kh, stride, padding);
    const std::int64_t Wo = conv_out_extent(W, kw, stride, padding);
    if (Ho < 1 || Wo < 1)
        throw ShapeError("avg_pool: window does not fit input " + x.shape_string());
    const std::int64_t py = pad_before(H, Ho, kh, stride, padding);
    const std::int64_t px = pad_before(W, Wo, kw, stride, padding);
    TensorT<T> y({B, Ho, Wo, C});
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t oy = 0; oy < Ho; ++oy)
            for (std::int64_t ox = 0; ox < Wo; ++ox) {
                std::int64_t count = 0;
                T* out = y.data() + ((b * Ho + oy) * Wo + ox) * C;
                for (std::int64_t ky = 0; ky < kh; ++ky) {
                    const std::int64_t iy = oy * stride - py + ky;
                    if (iy < 0 || iy >= H) continue;
                    for (std::int64_t kx = 0; kx < kw; ++kx) {
                        const std::int64_t ix = ox * stride - px + kx;
                        if (ix < 0 || ix >= W) continue;
                        ++count;
                        const T* in = x.data() + ((b * H + iy) * W + ix) * C;
                        for (std::int64_t c = 0; c < C; ++c) out[c] += in[c];
                    }
                }
                for (std::int64_t c = 0; c < C; ++c) out[c] /= static_cast<T>(count);
            }
    return y;
}

template <typename T>
TensorT<T> avgpool_backward(const TensorT<T>& x, std::int64_t kh, std::int64_t kw,
                            std::int64_t stride, Padding padding, const TensorT<T>& dy) {
    const std::int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const std::int64_t Ho = dy.dim(1), Wo = dy.dim(2);
    const std::int64_t py = pad_before(H, Ho, kh, stride, padding);
    const std::int64_t px = pad_before(W, Wo, kw, stride, padding);
    TensorT<T> dx(x.dims());
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t oy = 0; oy < Ho; ++oy)
            for (std::int64_t ox = 0; ox < Wo; ++ox) {
                std::int64_t count = 0;
                for (std::int64_t ky = 0; ky < kh; ++ky) {
                    const std::int64_t iy = oy * stride - py + ky;
                    if (iy < 0 || iy >= H) continue;
                    for (std::int64_t kx = 0; kx < kw; ++kx) {
                        const std::int64_t ix = ox * stride - px + kx;
                        if (ix >= 0 && ix < W) ++count;
                    }
                }
                const T* go = dy.data() + ((b * Ho + oy) * Wo + ox) * C;
                for (std::int64_t ky = 0; ky < kh; ++ky) {
                    const std::int64_t iy = oy * stride - py + ky;
                    if (iy < 0 || iy >= H) continue;
                    for (std::int64_t kx = 0; kx < kw; ++kx) {
                        const std::int64_t ix = ox * stride - px + kx;
                        if (ix < 0 || ix >= W) continue;
                        T* out = dx.data() + ((b * H + iy) * W + ix) * C;
                        for (std::int64_t c = 0; c < C; ++c) out[c] += go[c] / static_cast<T>(count);
                    }
                }
            }
    return dx;
}

template <typename T>
TensorT<T> global_avgpool_forward(const TensorT<T>& x) {
    detail::check_rank(x, 4, "global_avg_pool input");
    const std::int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    TensorT<T> y({B, 1, 1, C});
    for (std::int64_t b = 0; b < B; ++b) {
        T* out = y.data() + b * C;
        for (std::int64_t i = 0; i < H * W; ++i) {
            const T* in = x.data() + (b * H * W + i) * C;
            for (std::int64_t c = 0; c < C; ++c) out[c] += in[c];
        }
        for (std::int64_t c = 0; c < C; ++c) out[c] /= static_cast<T>(H * W);
    }
    return y;
}

template <typename T>
TensorT<T> global_avgpool_backward(const TensorT<T>& x, const TensorT<T>& dy) {
    const std::int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    TensorT<T> dx(x.dims());
    for (std::int64_t b = 0; b < B; ++b) {
        const T* go = dy.data() + b * C;
        for (std::int64_t i = 0; i < H * W; ++i) {
            T* out = dx.data() + (b * H * W + i) * C;
            for (std::int64_t c = 0; c < C; ++c) out[c] = go[c] / static_cast<T>(H * W);
        }
    }
    return dx;
}

template <typename T>
TensorT<T> upsample2x_forward(const TensorT<T>& x) {
    detail::check_rank(x, 4, "upsample input");
    const std::int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    TensorT<T> y({B, 2 * H, 2 * W, C});
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t oy = 0; oy < 2 * H; ++oy)
            for (std::int64_t ox = 0; ox < 2 * W; ++ox) {
                const T* in = x.data() + ((b * H + oy / 2) * W + ox / 2) * C;
                T* out = y.data() + ((b * 2 * H + oy) * 2 * W + ox) * C;
                for (std::int64_t c = 0; c < C; ++c) out[c] = in[c];
            }
    return y;
}

template <typename T>
TensorT<T> upsample2x_backward(const TensorT<T>& x, const TensorT<T>& dy) {
    const std::int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    TensorT<T> dx(x.dims());
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t oy = 0; oy < 2 * H; ++oy)
            for (std::int64_t ox = 0; ox < 2 * W; ++ox) {
                const T* go = dy.data() + ((b * 2 * H + oy) * 2 * W + ox) * C;
                T* out = dx.data() + ((b * H + oy / 2) * W + ox / 2) * C;
                for (std::int64_t c = 0; c < C; ++c) out[c] += go[c];
            }
    return dx;
}

template <typename T>
TensorT<T> add_forward(const TensorT<T>& a, const TensorT<T>& b) {
    if (!a.same_shape(b))
        throw ShapeError("add: shapes differ, " + a.shape_string() + " vs " + b.shape_string());
    TensorT<T> y(a.dims());
    for (std::int64_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
    return y;
}

// channel concat of rank-4 inputs with equal (B,H,W)
template <typename T>
TensorT<T> concat_forward(const std::vector<const TensorT<T>*>& xs) {
    if (xs.empty()) throw ShapeError("concat: no inputs");
    const std::int64_t B = xs[0]->dim(0), H = xs[0]->dim(1), W = xs[0]->dim(2);
    std::int64_t C = 0;
    for (const auto* x : xs) {
        detail::check_rank(*x, 4, "concat input");
        if (x->dim(0) != B || x->dim(1) != H || x->dim(2) != W)
            throw ShapeError("concat: spatial shapes differ, " + xs[0]->shape_string() + " vs " +
                             x->shape_string());
        C += x->dim(3);
    }
    TensorT<T> y({B, H, W, C});
    const std::int64_t cells = B * H * W;
    for (std::int64_t i = 0; i < cells; ++i) {
        T* out = y.data() + i * C;
        for (const auto* x : xs) {
            const std::int64_t xc = x->dim(3);
            const T* in = x->data() + i * xc;
            for (std::int64_t c = 0; c < xc; ++c) out[c] = in[c];
            out += xc;
        }
    }
    return y;
}

template <typename T>
std::vector<TensorT<T>> concat_backward(const std::vector<const TensorT<T>*>& xs,
                                        const TensorT<T>& dy) {
    std::vector<TensorT<T>> grads;
    grads.reserve(xs.size());
    for (const auto* x : xs) grads.emplace_back(x->dims());
    const std::int64_t C = dy.dim(3);
    const std::int64_t cells = dy.size() / C;
    for (std::int64_t i = 0; i < cells; ++i) {
        const T* go = dy.data() + i * C;
        for (std::size_t j = 0; j < xs.size(); ++j) {
            const std::int64_t xc = xs[j]->dim(3);
            T* out = grads[j].data() + i * xc;
            for (std::int64_t c = 0; c < xc; ++c) out[c] = go[c];
            go += xc;
        }
    }
    return grads;
}

// ---------------------------------------------------------------------------
// losses

template <typename T>
struct LossResult {
    double value = 0.0;
    TensorT<T> grad; // d(loss)/d(prediction)
};

// Cross-entropy on probability predictions (B, K) vs integer class targets.
// Predictions are clamped to [1e-7, 1-1e-7] before the log.
template <typename T>
LossResult<T> cross_entropy_loss(const TensorT<T>& pred, const std::vector<std::int64_t>& targets) {
    detail::check_rank(pred, 2, "cross_entropy prediction");
    const std::int64_t B = pred.dim(0), K = pred.dim(1);
    if (static_cast<std::int64_t>(targets.size()) != B)
        throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for batch " +
                         std::to_string(B));
    LossResult<T> r;
    r.grad = TensorT<T>(pred.dims());
    const T lo = static_cast<T>(1e-7), hi = static_cast<T>(1.0 - 1e-7);
    double total = 0.0;
    for (std::int64_t b = 0; b < B; ++b) {
        const std::int64_t t = targets[static_cast<std::size_t>(b)];
        if (t < 0 || t >= K)
            throw ShapeError("cross_entropy: target " + std::to_string(t) + " out of range for " +
                             std::to_string(K) + " classes");
        const T p = std::clamp(pred.at(b, t), lo, hi);
        total -= std::log(static_cast<double>(p));
        r.grad.at(b, t) = -T(1) / p / static_cast<T>(B);
    }
    r.value = total / static_cast<double>(B);
    return r;
}

// Mean squared error, mean over every element.
template <typename T>
LossResult<T> mse_loss(const TensorT<T>& pred, const TensorT<T>& target) {
    if (!pred.same_shape(target))
        throw ShapeError("mse: shapes differ, " + pred.shape_string() + " vs " +
                         target.shape_string());
    LossResult<T> r;
    r.grad = TensorT<T>(pred.dims());
    const std::int64_t n = pred.size();
    double total = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
        total += d * d;
        r.grad[i] = static_cast<T>(2.0 * d / static_cast<double>(n));
    }
    r.value = total / static_cast<double>(n);
    return r;
}

// ---------------------------------------------------------------------------
// Adam with bias correction. One shared step counter; epsilon is added
// outside the square root (Keras convention).

struct AdamConfig {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-7;
};

template <typename T>
class AdamState {
public:
    explicit AdamState(AdamConfig cfg = {}) : cfg_(cfg) {}

    const AdamConfig& config() const { return cfg_; }
    std::int64_t step() const { return step_; }

    // params and grads are parallel; slots are created on first use and must
    // keep their shapes afterwards.
    void update(const std::vector<TensorT<T>*>& params,
                const std::vector<const TensorT<T>*>& grads) {
        if (params.size() != grads.size())
            throw ShapeError("adam: " + std::to_string(params.size()) + " params vs " +
                             std::to_string(grads.size()) + " grads");
        if (slots_.empty()) {
            slots_.reserve(params.size());
            for (const auto* p : params) slots_.push_back({TensorT<T>(p->dims()), TensorT<T>(p->dims())});
        }
        if (slots_.size() != params.size())
            throw ShapeError("adam: parameter count changed between updates");
        ++step_;
        const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
        const T c1 = static_cast<T>(1.0 - std::pow(cfg_.beta1, static_cast<double>(step_)));
        const T c2 = static_cast<T>(1.0 - std::pow(cfg_.beta2, static_cast<double>(step_)));
        const T lr = static_cast<T>(cfg_.learning_rate);
        const T eps = static_cast<T>(cfg_.epsilon);
        for (std::size_t i = 0; i < params.size(); ++i) {
            TensorT<T>& p = *params[i];
            const TensorT<T>& g = *grads[i];
            if (!p.same_shape(g) || !p.same_shape(slots_[i].m))
                throw ShapeError("adam: shape mismatch at parameter " + std::to_string(i));
            T* pm = slots_[i].m.data();
            T* pv = slots_[i].v.data();
            T* pp = p.data();
            const T* pg = g.data();
            const std::int64_t n = p.size();
            for (std::int64_t j = 0; j < n; ++j) {
                pm[j] = b1 * pm[j] + (T(1) - b1) * pg[j];
                pv[j] = b2 * pv[j] + (T(1) - b2) * pg[j] * pg[j];
                pp[j] -= lr * (pm[j] / c1) / (std::sqrt(pv[j] / c2) + eps);
            }
        }
    }

private:
    struct Slot {
        TensorT<T> m, v;
    };
    AdamConfig cfg_;
    std::int64_t step_ = 0;
    std::vector<Slot> slots_;
};

} // namespace sonarzoo
