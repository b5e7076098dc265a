#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "anml/tensor.hpp"

namespace anml {

using IndexMap = std::shared_ptr<const std::vector<int64_t>>;

inline IndexMap make_index_map(std::vector<int64_t> idx) {
    return std::make_shared<const std::vector<int64_t>>(std::move(idx));
}

namespace detail {

template <typename T>
void check_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + format_shape(a.shape()) +
                         " vs " + format_shape(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise primitives
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape("add", a, b);
    std::vector<T> out(a.values());
    const auto& bv = b.values();
    for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return Tensor<T>::make_op_result("add", a.shape(), std::move(out), {a, b},
                                     [](const Tensor<T>& g) {
                                         return std::vector<Tensor<T>>{g, g};
                                     });
}

template <typename T>
Tensor<T> detail_add(const Tensor<T>& a, const Tensor<T>& b) {
    return add(a, b);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
    std::vector<T> out(a.values());
    for (auto& v : out) v *= c;
    return Tensor<T>::make_op_result("scale", a.shape(), std::move(out), {a},
                                     [c](const Tensor<T>& g) {
                                         return std::vector<Tensor<T>>{scale(g, c)};
                                     });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape("sub", a, b);
    std::vector<T> out(a.values());
    const auto& bv = b.values();
    for (size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return Tensor<T>::make_op_result("sub", a.shape(), std::move(out), {a, b},
                                     [](const Tensor<T>& g) {
                                         return std::vector<Tensor<T>>{g, scale(g, T(-1))};
                                     });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape("mul", a, b);
    std::vector<T> out(a.values());
    const auto& bv = b.values();
    for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return Tensor<T>::make_op_result("mul", a.shape(), std::move(out), {a, b},
                                     [a, b](const Tensor<T>& g) {
                                         return std::vector<Tensor<T>>{mul(g, b), mul(g, a)};
                                     });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    std::vector<T> out(x.values());
    std::vector<T> mask(out.size());
    for (size_t i = 0; i < out.size(); ++i) {
        mask[i] = out[i] > T(0) ? T(1) : T(0);
        out[i] = out[i] > T(0) ? out[i] : T(0);
    }
    Tensor<T> mask_t = Tensor<T>::from_values(x.shape(), std::move(mask));
    return Tensor<T>::make_op_result("relu", x.shape(), std::move(out), {x},
                                     [mask_t](const Tensor<T>& g) {
                                         return std::vector<Tensor<T>>{mul(g, mask_t)};
                                     });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    std::vector<T> out(x.values());
    for (auto& v : out) {
        if (v >= T(0)) {
            v = T(1) / (T(1) + std::exp(-v));
        } else {
            T e = std::exp(v);
            v = e / (T(1) + e);
        }
    }
    return Tensor<T>::make_op_result("sigmoid", x.shape(), std::move(out), {x},
                                     [x](const Tensor<T>& g) {
                                         Tensor<T> y = sigmoid(x);
                                         Tensor<T> one = Tensor<T>::ones(x.shape());
                                         return std::vector<Tensor<T>>{mul(g, mul(y, sub(one, y)))};
                                     });
}

template <typename T>
Tensor<T> exp_op(const Tensor<T>& x) {
    std::vector<T> out(x.values());
    for (auto& v : out) v = std::exp(v);
    return Tensor<T>::make_op_result("exp", x.shape(), std::move(out), {x},
                                     [x](const Tensor<T>& g) {
                                         return std::vector<Tensor<T>>{mul(g, exp_op(x))};
                                     });
}

template <typename T>
Tensor<T> log_op(const Tensor<T>& x) {
    std::vector<T> out(x.values());
    for (auto& v : out) v = std::log(v);
    return Tensor<T>::make_op_result("log", x.shape(), std::move(out), {x},
                                     [x](const Tensor<T>& g) {
                                         return std::vector<Tensor<T>>{mul(g, recip(x))};
                                     });
}

template <typename T>
Tensor<T> recip(const Tensor<T>& x) {
    std::vector<T> out(x.values());
    for (auto& v : out) v = T(1) / v;
    return Tensor<T>::make_op_result("recip", x.shape(), std::move(out), {x},
                                     [x](const Tensor<T>& g) {
                                         Tensor<T> r = recip(x);
                                         return std::vector<Tensor<T>>{scale(mul(g, mul(r, r)), T(-1))};
                                     });
}

template <typename T>
Tensor<T> sqrt_op(const Tensor<T>& x) {
    std::vector<T> out(x.values());
    for (auto& v : out) v = std::sqrt(v);
    return Tensor<T>::make_op_result("sqrt", x.shape(), std::move(out), {x},
                                     [x](const Tensor<T>& g) {
                                         return std::vector<Tensor<T>>{
                                             scale(mul(g, recip(sqrt_op(x))), T(0.5))};
                                     });
}

// ---------------------------------------------------------------------------
// Shape primitives
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<int64_t> new_shape) {
    if (shape_numel(new_shape) != x.numel())
        throw ShapeError("reshape: cannot view " + format_shape(x.shape()) + " as " +
                         format_shape(new_shape));
    std::vector<int64_t> old_shape = x.shape();
    return Tensor<T>::make_op_result("reshape", std::move(new_shape),
                                     std::vector<T>(x.values()), {x},
                                     [old_shape](const Tensor<T>& g) {
                                         return std::vector<Tensor<T>>{reshape(g, old_shape)};
                                     });
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    T acc = T(0);
    for (T v : x.values()) acc += v;
    std::vector<int64_t> x_shape = x.shape();
    return Tensor<T>::make_op_result("sum_all", {}, std::vector<T>{acc}, {x},
                                     [x_shape](const Tensor<T>& g) {
                                         return std::vector<Tensor<T>>{broadcast_scalar(g, x_shape)};
                                     });
}

template <typename T>
Tensor<T> broadcast_scalar(const Tensor<T>& s, std::vector<int64_t> shape) {
    if (s.numel() != 1)
        throw ShapeError("broadcast_scalar: input has shape " + format_shape(s.shape()));
    std::vector<T> out(static_cast<size_t>(shape_numel(shape)), s.values()[0]);
    return Tensor<T>::make_op_result("broadcast_scalar", std::move(shape), std::move(out), {s},
                                     [](const Tensor<T>& g) {
                                         return std::vector<Tensor<T>>{sum_all(g)};
                                     });
}

// out[i] = idx[i] >= 0 ? flat(x)[idx[i]] : 0.  Constant index maps express
// broadcasts, one-hot picks and channel reductions; their adjoint is
// scatter_add with the same map.
template <typename T>
Tensor<T> gather(const Tensor<T>& x, const IndexMap& idx, std::vector<int64_t> out_shape) {
    if (static_cast<int64_t>(idx->size()) != shape_numel(out_shape))
        throw ShapeError("gather: index count " + std::to_string(idx->size()) +
                         " does not match output shape " + format_shape(out_shape));
    const auto& xv = x.values();
    const int64_t n = x.numel();
    std::vector<T> out(idx->size());
    for (size_t i = 0; i < idx->size(); ++i) {
        int64_t j = (*idx)[i];
        if (j >= n)
            throw ShapeError("gather: index " + std::to_string(j) + " out of range for " +
                             format_shape(x.shape()));
        out[i] = j >= 0 ? xv[static_cast<size_t>(j)] : T(0);
    }
    std::vector<int64_t> x_shape = x.shape();
    return Tensor<T>::make_op_result("gather", std::move(out_shape), std::move(out), {x},
                                     [idx, x_shape](const Tensor<T>& g) {
                                         return std::vector<Tensor<T>>{scatter_add(g, idx, x_shape)};
                                     });
}

// out[idx[i]] += flat(src)[i]; negative indices are dropped.
template <typename T>
Tensor<T> scatter_add(const Tensor<T>& src, const IndexMap& idx, std::vector<int64_t> out_shape) {
    if (static_cast<int64_t>(idx->size()) != src.numel())
        throw ShapeError("scatter_add: index count " + std::to_string(idx->size()) +
                         " does not match source shape " + format_shape(src.shape()));
    const int64_t n = shape_numel(out_shape);
    std::vector<T> out(static_cast<size_t>(n), T(0));
    const auto& sv = src.values();
    for (size_t i = 0; i < idx->size(); ++i) {
        int64_t j = (*idx)[i];
        if (j >= n)
            throw ShapeError("scatter_add: index " + std::to_string(j) + " out of range for " +
                             format_shape(out_shape));
        if (j >= 0) out[static_cast<size_t>(j)] += sv[i];
    }
    std::vector<int64_t> src_shape = src.shape();
    return Tensor<T>::make_op_result("scatter_add", std::move(out_shape), std::move(out), {src},
                                     [idx, src_shape](const Tensor<T>& g) {
                                         return std::vector<Tensor<T>>{gather(g, idx, src_shape)};
                                     });
}

// ---------------------------------------------------------------------------
// Linear algebra primitives
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
    if (a.shape().size() != 2)
        throw ShapeError("transpose: expected rank-2 tensor, got " + format_shape(a.shape()));
    const int64_t m = a.shape()[0], n = a.shape()[1];
    std::vector<T> out(static_cast<size_t>(m * n));
    const auto& av = a.values();
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out[static_cast<size_t>(j * m + i)] = av[static_cast<size_t>(i * n + j)];
    return Tensor<T>::make_op_result("transpose", {n, m}, std::move(out), {a},
                                     [](const Tensor<T>& g) {
                                         return std::vector<Tensor<T>>{transpose(g)};
                                     });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
        throw ShapeError("matmul: incompatible shapes " + format_shape(a.shape()) + " x " +
                         format_shape(b.shape()));
    const int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    std::vector<T> out(static_cast<size_t>(m * n), T(0));
    const T* av = a.values().data();
    const T* bv = b.values().data();
    for (int64_t i = 0; i < m; ++i) {
        T* orow = out.data() + i * n;
        const T* arow = av + i * k;
        for (int64_t p = 0; p < k; ++p) {
            const T aval = arow[p];
            if (aval == T(0)) continue;
            const T* brow = bv + p * n;
            for (int64_t j = 0; j < n; ++j) orow[j] += aval * brow[j];
        }
    }
    return Tensor<T>::make_op_result("matmul", {m, n}, std::move(out), {a, b},
                                     [a, b](const Tensor<T>& g) {
                                         return std::vector<Tensor<T>>{matmul(g, transpose(b)),
                                                                       matmul(transpose(a), g)};
                                     });
}

// ---------------------------------------------------------------------------
// Direct 2-D convolution as a bilinear primitive trio. Each member's backward
// is expressed through the other two, closing the set under differentiation.
// Layout: images [N,C,H,W], weights [O,C,KH,KW].
// ---------------------------------------------------------------------------

inline int64_t conv_out_extent(int64_t in, int64_t k, int64_t stride, int64_t pad) {
    int64_t out = (in + 2 * pad - k) / stride + 1;
    if (out <= 0)
        throw ShapeError("conv2d: kernel " + std::to_string(k) + " with stride " +
                         std::to_string(stride) + " and pad " + std::to_string(pad) +
                         " does not fit input extent " + std::to_string(in));
    return out;
}

template <typename T>
Tensor<T> conv2d_grad_input(const Tensor<T>& g, const Tensor<T>& w, int64_t stride, int64_t pad,
                            int64_t in_h, int64_t in_w);
template <typename T>
Tensor<T> conv2d_grad_weight(const Tensor<T>& x, const Tensor<T>& g, int64_t stride, int64_t pad,
                             int64_t kh, int64_t kw);

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int64_t stride, int64_t pad) {
    if (x.shape().size() != 4 || w.shape().size() != 4 || x.shape()[1] != w.shape()[1])
        throw ShapeError("conv2d: incompatible shapes " + format_shape(x.shape()) + " * " +
                         format_shape(w.shape()));
    const int64_t N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    const int64_t O = w.shape()[0], KH = w.shape()[2], KW = w.shape()[3];
    const int64_t OH = conv_out_extent(H, KH, stride, pad);
    const int64_t OW = conv_out_extent(W, KW, stride, pad);
    std::vector<T> out(static_cast<size_t>(N * O * OH * OW), T(0));
    const T* xv = x.values().data();
    const T* wv = w.values().data();
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t o = 0; o < O; ++o) {
            T* oplane = out.data() + (n * O + o) * OH * OW;
            for (int64_t oh = 0; oh < OH; ++oh) {
                for (int64_t ow = 0; ow < OW; ++ow) {
                    T acc = T(0);
                    for (int64_t c = 0; c < C; ++c) {
                        const T* xplane = xv + (n * C + c) * H * W;
                        const T* wplane = wv + (o * C + c) * KH * KW;
                        for (int64_t i = 0; i < KH; ++i) {
                            const int64_t ih = oh * stride + i - pad;
                            if (ih < 0 || ih >= H) continue;
                            const int64_t iw0 = ow * stride - pad;
                            for (int64_t j = 0; j < KW; ++j) {
                                const int64_t iw = iw0 + j;
                                if (iw < 0 || iw >= W) continue;
                                acc += xplane[ih * W + iw] * wplane[i * KW + j];
                            }
                        }
                    }
                    oplane[oh * OW + ow] = acc;
                }
            }
        }
    }
    return Tensor<T>::make_op_result(
        "conv2d", {N, O, OH, OW}, std::move(out), {x, w},
        [x, w, stride, pad, H, W, KH, KW](const Tensor<T>& g) {
            return std::vector<Tensor<T>>{conv2d_grad_input(g, w, stride, pad, H, W),
                                          conv2d_grad_weight(x, g, stride, pad, KH, KW)};
        });
}

template <typename T>
Tensor<T> conv2d_grad_input(const Tensor<T>& g, const Tensor<T>& w, int64_t stride, int64_t pad,
                            int64_t in_h, int64_t in_w) {
    if (g.shape().size() != 4 || w.shape().size() != 4 || g.shape()[1] != w.shape()[0])
        throw ShapeError("conv2d_grad_input: incompatible shapes " + format_shape(g.shape()) +
                         " * " + format_shape(w.shape()));
    const int64_t N = g.shape()[0], O = g.shape()[1], OH = g.shape()[2], OW = g.shape()[3];
    const int64_t C = w.shape()[1], KH = w.shape()[2], KW = w.shape()[3];
    std::vector<T> out(static_cast<size_t>(N * C * in_h * in_w), T(0));
    const T* gv = g.values().data();
    const T* wv = w.values().data();
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t o = 0; o < O; ++o) {
            const T* gplane = gv + (n * O + o) * OH * OW;
            for (int64_t c = 0; c < C; ++c) {
                T* oplane = out.data() + (n * C + c) * in_h * in_w;
                const T* wplane = wv + (o * C + c) * KH * KW;
                for (int64_t oh = 0; oh < OH; ++oh) {
                    for (int64_t ow = 0; ow < OW; ++ow) {
                        const T gval = gplane[oh * OW + ow];
                        if (gval == T(0)) continue;
                        for (int64_t i = 0; i < KH; ++i) {
                            const int64_t ih = oh * stride + i - pad;
                            if (ih < 0 || ih >= in_h) continue;
                            const int64_t iw0 = ow * stride - pad;
                            for (int64_t j = 0; j < KW; ++j) {
                                const int64_t iw = iw0 + j;
                                if (iw < 0 || iw >= in_w) continue;
                                oplane[ih * in_w + iw] += gval * wplane[i * KW + j];
                            }
                        }
                    }
                }
            }
        }
    }
    return Tensor<T>::make_op_result(
        "conv2d_grad_input", {N, C, in_h, in_w}, std::move(out), {g, w},
        [g, w, stride, pad, KH, KW](const Tensor<T>& h) {
            return std::vector<Tensor<T>>{conv2d(h, w, stride, pad),
                                          conv2d_grad_weight(h, g, stride, pad, KH, KW)};
        });
}

template <typename T>
Tensor<T> conv2d_grad_weight(const Tensor<T>& x, const Tensor<T>& g, int64_t stride, int64_t pad,
                             int64_t kh, int64_t kw) {
    if (x.shape().size() != 4 || g.shape().size() != 4 || x.shape()[0] != g.shape()[0])
        throw ShapeError("conv2d_grad_weight: incompatible shapes " + format_shape(x.shape()) +
                         " * " + format_shape(g.shape()));
    const int64_t N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    const int64_t O = g.shape()[1], OH = g.shape()[2], OW = g.shape()[3];
    std::vector<T> out(static_cast<size_t>(O * C * kh * kw), T(0));
    const T* xv = x.values().data();
    const T* gv = g.values().data();
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t o = 0; o < O; ++o) {
            const T* gplane = gv + (n * O + o) * OH * OW;
            for (int64_t c = 0; c < C; ++c) {
                const T* xplane = xv + (n * C + c) * H * W;
                T* oplane = out.data() + (o * C + c) * kh * kw;
                for (int64_t oh = 0; oh < OH; ++oh) {
                    for (int64_t ow = 0; ow < OW; ++ow) {
                        const T gval = gplane[oh * OW + ow];
                        if (gval == T(0)) continue;
                        for (int64_t i = 0; i < kh; ++i) {
                            const int64_t ih = oh * stride + i - pad;
                            if (ih < 0 || ih >= H) continue;
                            const int64_t iw0 = ow * stride - pad;
                            for (int64_t j = 0; j < kw; ++j) {
                                const int64_t iw = iw0 + j;
                                if (iw < 0 || iw >= W) continue;
                                oplane[i * kw + j] += gval * xplane[ih * W + iw];
                            }
                        }
                    }
                }
            }
        }
    }
    const int64_t in_h = H, in_w = W;
    return Tensor<T>::make_op_result(
        "conv2d_grad_weight", {O, C, kh, kw}, std::move(out), {x, g},
        [x, g, stride, pad, in_h, in_w](const Tensor<T>& h) {
            return std::vector<Tensor<T>>{conv2d_grad_input(g, h, stride, pad, in_h, in_w),
                                          conv2d(x, h, stride, pad)};
        });
}

// ---------------------------------------------------------------------------
// Composite layers (differentiable by construction)
// ---------------------------------------------------------------------------

// Bias broadcast over rows: x[B,O] + b[O].
template <typename T>
Tensor<T> add_row_bias(const Tensor<T>& x, const Tensor<T>& b) {
    if (x.shape().size() != 2 || b.shape().size() != 1 || x.shape()[1] != b.shape()[0])
        throw ShapeError("add_row_bias: incompatible shapes " + format_shape(x.shape()) +
                         " + " + format_shape(b.shape()));
    const int64_t B = x.shape()[0], O = x.shape()[1];
    std::vector<int64_t> idx(static_cast<size_t>(B * O));
    for (int64_t r = 0; r < B; ++r)
        for (int64_t o = 0; o < O; ++o) idx[static_cast<size_t>(r * O + o)] = o;
    return add(x, gather(b, make_index_map(std::move(idx)), x.shape()));
}

// Fully connected layer: x[B,I] * w[O,I]^T + b[O].
template <typename T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    if (x.shape().size() != 2 || w.shape().size() != 2 || x.shape()[1] != w.shape()[1])
        throw ShapeError("affine: incompatible shapes " + format_shape(x.shape()) + " * " +
                         format_shape(w.shape()));
    return add_row_bias(matmul(x, transpose(w)), b);
}

// Per-channel bias for conv outputs: y[N,O,H,W] + b[O].
template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& y, const Tensor<T>& b) {
    if (y.shape().size() != 4 || b.shape().size() != 1 || y.shape()[1] != b.shape()[0])
        throw ShapeError("add_channel_bias: incompatible shapes " + format_shape(y.shape()) +
                         " + " + format_shape(b.shape()));
    const int64_t N = y.shape()[0], O = y.shape()[1], HW = y.shape()[2] * y.shape()[3];
    std::vector<int64_t> idx(static_cast<size_t>(N * O * HW));
    size_t p = 0;
    for (int64_t n = 0; n < N; ++n)
        for (int64_t o = 0; o < O; ++o)
            for (int64_t s = 0; s < HW; ++s) idx[p++] = o;
    return add(y, gather(b, make_index_map(std::move(idx)), y.shape()));
}

// Batch normalization over batch and spatial dimensions jointly, per channel.
// Always uses current-batch statistics; the affine (gamma, beta) carries any
// frozen behaviour.
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      T eps = T(1e-5)) {
    if (x.shape().size() != 4)
        throw ShapeError("batchnorm2d: expected [N,C,H,W], got " + format_shape(x.shape()));
    const int64_t N = x.shape()[0], C = x.shape()[1], HW = x.shape()[2] * x.shape()[3];
    if (gamma.shape() != std::vector<int64_t>{C} || beta.shape() != std::vector<int64_t>{C})
        throw ShapeError("batchnorm2d: gamma/beta must be [C] = [" + std::to_string(C) + "]");
    const T inv_count = T(1) / static_cast<T>(N * HW);
    std::vector<int64_t> ch(static_cast<size_t>(N * C * HW));
    size_t p = 0;
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t s = 0; s < HW; ++s) ch[p++] = c;
    IndexMap ch_idx = make_index_map(std::move(ch));

    Tensor<T> mean = scale(scatter_add(x, ch_idx, {C}), inv_count);
    Tensor<T> centered = sub(x, gather(mean, ch_idx, x.shape()));
    Tensor<T> var = scale(scatter_add(mul(centered, centered), ch_idx, {C}), inv_count);
    Tensor<T> inv_std = recip(sqrt_op(add(var, Tensor<T>::full({C}, eps))));
    Tensor<T> normalized = mul(centered, gather(inv_std, ch_idx, x.shape()));
    return add(mul(normalized, gather(gamma, ch_idx, x.shape())),
               gather(beta, ch_idx, x.shape()));
}

// Flatten [N,...] -> [N,D].
template <typename T>
Tensor<T> flatten(const Tensor<T>& x) {
    if (x.shape().empty())
        throw ShapeError("flatten: scalar input");
    const int64_t N = x.shape()[0];
    return reshape(x, {N, x.numel() / N});
}

// Mean softmax cross-entropy over rows of logits[B,C] against integer labels.
// The row-max shift is detached; it cancels exactly in the loss and all of
// its derivatives.
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int64_t>& labels) {
    if (logits.shape().size() != 2)
        throw ShapeError("softmax_cross_entropy: expected [B,C], got " +
                         format_shape(logits.shape()));
    const int64_t B = logits.shape()[0], C = logits.shape()[1];
    if (static_cast<int64_t>(labels.size()) != B)
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for batch " + std::to_string(B));
    for (int64_t r = 0; r < B; ++r)
        if (labels[static_cast<size_t>(r)] < 0 || labels[static_cast<size_t>(r)] >= C)
            throw ShapeError("softmax_cross_entropy: label " +
                             std::to_string(labels[static_cast<size_t>(r)]) +
                             " out of range for " + std::to_string(C) + " classes");

    const auto& lv = logits.values();
    std::vector<T> row_max(static_cast<size_t>(B));
    for (int64_t r = 0; r < B; ++r) {
        T m = lv[static_cast<size_t>(r * C)];
        for (int64_t c = 1; c < C; ++c) m = std::max(m, lv[static_cast<size_t>(r * C + c)]);
        row_max[static_cast<size_t>(r)] = m;
    }
    Tensor<T> max_const = Tensor<T>::from_values({B}, std::move(row_max));

    std::vector<int64_t> row_of(static_cast<size_t>(B * C));
    for (int64_t r = 0; r < B; ++r)
        for (int64_t c = 0; c < C; ++c) row_of[static_cast<size_t>(r * C + c)] = r;
    IndexMap row_idx = make_index_map(std::move(row_of));

    std::vector<int64_t> pick(static_cast<size_t>(B));
    for (int64_t r = 0; r < B; ++r) pick[static_cast<size_t>(r)] = r * C + labels[static_cast<size_t>(r)];
    IndexMap pick_idx = make_index_map(std::move(pick));

    Tensor<T> shifted = sub(logits, gather(max_const, row_idx, logits.shape()));
    Tensor<T> log_sum = log_op(scatter_add(exp_op(shifted), row_idx, {B}));
    Tensor<T> picked = gather(shifted, pick_idx, {B});
    return scale(sum_all(sub(log_sum, picked)), T(1) / static_cast<T>(B));
}

// Row-wise softmax probabilities (forward-only helper for reporting).
template <typename T>
std::vector<T> softmax_rows(const Tensor<T>& logits) {
    const int64_t B = logits.shape()[0], C = logits.shape()[1];
    std::vector<T> probs(logits.values());
    for (int64_t r = 0; r < B; ++r) {
        T* row = probs.data() + r * C;
        T m = row[0];
        for (int64_t c = 1; c < C; ++c) m = std::max(m, row[c]);
        T sum = T(0);
        for (int64_t c = 0; c < C; ++c) {
            row[c] = std::exp(row[c] - m);
            sum += row[c];
        }
        for (int64_t c = 0; c < C; ++c) row[c] /= sum;
    }
    return probs;
}

template <typename T>
std::vector<int64_t> argmax_rows(const Tensor<T>& logits) {
    if (logits.shape().size() != 2)
        throw ShapeError("argmax_rows: expected [B,C], got " + format_shape(logits.shape()));
    const int64_t B = logits.shape()[0], C = logits.shape()[1];
    const auto& lv = logits.values();
    std::vector<int64_t> out(static_cast<size_t>(B));
    for (int64_t r = 0; r < B; ++r) {
        int64_t best = 0;
        for (int64_t c = 1; c < C; ++c)
            if (lv[static_cast<size_t>(r * C + c)] > lv[static_cast<size_t>(r * C + best)]) best = c;
        out[static_cast<size_t>(r)] = best;
    }
    return out;
}

}  // namespace anml
