// Copyright 2026 The aaw-seg Authors
// Licensed under the Apache License, Version 2.0;
// see http://www.apache.org/licenses/LICENSE-2.0 for details.

#pragma once

#include <algorithm>
#include <cmath>
#include <utility>

#include "aaw/tensor.hpp"

namespace aaw {

namespace detail {

inline bool any_requires_grad(const std::vector<TensorPtr>& xs) {
    for (const auto& x : xs)
        if (x->requires_grad) return true;
    return false;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

/// 2-D convolution (cross-correlation), weight (cout, cin/groups, k, k),
/// optional bias (1, cout, 1, 1). Depthwise = groups == cin == cout.
inline TensorPtr conv2d(const TensorPtr& x, const TensorPtr& weight, const TensorPtr& bias,
                        int stride, int padding, int groups = 1) {
    const int cout = weight->n, cin_g = weight->c, kh = weight->h, kw = weight->w;
    if (kh != kw) throw std::invalid_argument("conv2d: kernel must be square, got " +
                                              weight->shape_str());
    const int k = kh;
    if (k % 2 == 0) throw std::invalid_argument("conv2d: kernel size must be odd, got k=" +
                                                std::to_string(k));
    if (stride != 1 && stride != 2)
        throw std::invalid_argument("conv2d: stride must be 1 or 2, got " + std::to_string(stride));
    if (groups < 1 || x->c % groups != 0 || cout % groups != 0)
        throw std::invalid_argument("conv2d: groups=" + std::to_string(groups) +
                                    " must divide input channels " + std::to_string(x->c) +
                                    " and output channels " + std::to_string(cout));
    if (cin_g != x->c / groups)
        throw std::invalid_argument("conv2d: weight expects cin/groups=" + std::to_string(cin_g) +
                                    " but input has c=" + std::to_string(x->c) + " with groups=" +
                                    std::to_string(groups));
    if (bias && (bias->c != cout || bias->n != 1 || bias->h != 1 || bias->w != 1))
        throw std::invalid_argument("conv2d: bias must be 1x" + std::to_string(cout) +
                                    "x1x1, got " + bias->shape_str());
    const int ho = (x->h + 2 * padding - k) / stride + 1;
    const int wo = (x->w + 2 * padding - k) / stride + 1;
    if (ho <= 0 || wo <= 0)
        throw std::invalid_argument("conv2d: output spatial dims would be " + std::to_string(ho) +
                                    "x" + std::to_string(wo) + " for input " + x->shape_str());

    auto y = tensor(x->n, cout, ho, wo);
    const int cpg_out = cout / groups;   // output channels per group
    const int cpg_in = cin_g;            // input channels per group
    const int H = x->h, W = x->w;

    for (int b = 0; b < x->n; ++b) {
        for (int g = 0; g < groups; ++g) {
            for (int oc = 0; oc < cpg_out; ++oc) {
                const int co = g * cpg_out + oc;
                const double bv = bias ? bias->data[co] : 0.0;
                for (int oy = 0; oy < ho; ++oy) {
                    double* orow = &y->data[y->index(b, co, oy, 0)];
                    for (int ox = 0; ox < wo; ++ox) orow[ox] = bv;
                    for (int ic = 0; ic < cpg_in; ++ic) {
                        const int ci = g * cpg_in + ic;
                        for (int ky = 0; ky < k; ++ky) {
                            const int iy = oy * stride - padding + ky;
                            if (iy < 0 || iy >= H) continue;
                            const double* xrow = &x->data[x->index(b, ci, iy, 0)];
                            const double* wrow = &weight->data[weight->index(co, ic, ky, 0)];
                            for (int kx = 0; kx < k; ++kx) {
                                const int ix0 = -padding + kx;
                                const double wv = wrow[kx];
                                int lo = std::max(0, (-ix0 + stride - 1) / stride);
                                int hi = std::min(wo, (W - ix0 + stride - 1) / stride);
                                for (int ox = lo; ox < hi; ++ox)
                                    orow[ox] += wv * xrow[ox * stride + ix0];
                            }
                        }
                    }
                }
            }
        }
    }

    add_flops(2ull * k * k * cpg_in * cout * ho * wo * x->n);

    y->requires_grad = x->requires_grad || weight->requires_grad ||
                       (bias && bias->requires_grad);
    if (y->requires_grad) {
        y->parents = {x, weight};
        if (bias) y->parents.push_back(bias);
        TensorPtr xp = x, wp = weight, bp = bias;
        const int S = stride, P = padding, G = groups;
        y->backward_fn = [xp, wp, bp, S, P, G, k, cpg_in, cpg_out](Tensor4& self) {
            const int ho = self.h, wo = self.w, H = xp->h, W = xp->w;
            const bool need_x = xp->requires_grad;
            const bool need_w = wp->requires_grad;
            const bool need_b = bp && bp->requires_grad;
            for (int b = 0; b < xp->n; ++b) {
                for (int g = 0; g < G; ++g) {
                    for (int oc = 0; oc < cpg_out; ++oc) {
                        const int co = g * cpg_out + oc;
                        for (int oy = 0; oy < ho; ++oy) {
                            const double* grow = &self.grad[self.index(b, co, oy, 0)];
                            if (need_b) {
                                double s = 0.0;
                                for (int ox = 0; ox < wo; ++ox) s += grow[ox];
                                bp->grad[co] += s;
                            }
                            for (int ic = 0; ic < cpg_in; ++ic) {
                                const int ci = g * cpg_in + ic;
                                for (int ky = 0; ky < k; ++ky) {
                                    const int iy = oy * S - P + ky;
                                    if (iy < 0 || iy >= H) continue;
                                    const double* xrow = &xp->data[xp->index(b, ci, iy, 0)];
                                    double* dxrow = need_x ? &xp->grad[xp->index(b, ci, iy, 0)] : nullptr;
                                    for (int kx = 0; kx < k; ++kx) {
                                        const int ix0 = -P + kx;
                                        const double wv = wp->data[wp->index(co, ic, ky, kx)];
                                        double dw = 0.0;
                                        int lo = std::max(0, (-ix0 + S - 1) / S);
                                        int hi = std::min(wo, (W - ix0 + S - 1) / S);
                                        for (int ox = lo; ox < hi; ++ox) {
                                            const double gv = grow[ox];
                                            const int ix = ox * S + ix0;
                                            if (need_w) dw += gv * xrow[ix];
                                            if (need_x) dxrow[ix] += gv * wv;
                                        }
                                        if (need_w) wp->grad[wp->index(co, ic, ky, kx)] += dw;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        };
    }
    return y;
}

// ---------------------------------------------------------------------------
// elementwise ops
// ---------------------------------------------------------------------------

/// Unary elementwise op. `df(xv, yv)` returns dy/dx at that element.
template <class F, class DF>
TensorPtr unary_op(const TensorPtr& x, F f, DF df) {
    auto y = tensor_like(*x);
    for (std::size_t i = 0; i < x->data.size(); ++i) y->data[i] = f(x->data[i]);
    y->requires_grad = x->requires_grad;
    if (y->requires_grad) {
        y->parents = {x};
        TensorPtr xp = x;
        y->backward_fn = [xp, df](Tensor4& self) {
            for (std::size_t i = 0; i < self.data.size(); ++i)
                xp->grad[i] += self.grad[i] * df(xp->data[i], self.data[i]);
        };
    }
    return y;
}

inline double sigmoid_scalar(double v) { return 1.0 / (1.0 + std::exp(-v)); }

inline TensorPtr silu(const TensorPtr& x) {
    return unary_op(
        x, [](double v) { return v * sigmoid_scalar(v); },
        [](double v, double) {
            const double s = sigmoid_scalar(v);
            return s * (1.0 + v * (1.0 - s));
        });
}

inline TensorPtr sigmoid(const TensorPtr& x) {
    return unary_op(
        x, [](double v) { return sigmoid_scalar(v); },
        [](double, double yv) { return yv * (1.0 - yv); });
}

inline TensorPtr tanh_op(const TensorPtr& x) {
    return unary_op(
        x, [](double v) { return std::tanh(v); },
        [](double, double yv) { return 1.0 - yv * yv; });
}

inline TensorPtr exp_op(const TensorPtr& x) {
    return unary_op(
        x, [](double v) { return std::exp(v); }, [](double, double yv) { return yv; });
}

inline TensorPtr relu(const TensorPtr& x) {
    return unary_op(
        x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

/// elu(x)+1: the strictly positive feature map used by linear attention.
inline TensorPtr elu1(const TensorPtr& x) {
    return unary_op(
        x, [](double v) { return v > 0.0 ? v + 1.0 : std::exp(v); },
        [](double v, double) { return v > 0.0 ? 1.0 : std::exp(v); });
}

inline TensorPtr scale(const TensorPtr& x, double k) {
    return unary_op(
        x, [k](double v) { return k * v; }, [k](double, double) { return k; });
}

inline TensorPtr add_const(const TensorPtr& x, double k) {
    return unary_op(
        x, [k](double v) { return v + k; }, [](double, double) { return 1.0; });
}

/// Binary elementwise op on same-shape tensors. dfa/dfb give the partials.
template <class F, class DA, class DB>
TensorPtr binary_op(const TensorPtr& a, const TensorPtr& b, F f, DA dfa, DB dfb) {
    if (!a->same_shape(*b))
        throw std::invalid_argument("elementwise op: shape mismatch " + a->shape_str() +
                                    " vs " + b->shape_str());
    auto y = tensor_like(*a);
    for (std::size_t i = 0; i < y->data.size(); ++i) y->data[i] = f(a->data[i], b->data[i]);
    y->requires_grad = a->requires_grad || b->requires_grad;
    if (y->requires_grad) {
        y->parents = {a, b};
        TensorPtr ap = a, bp = b;
        y->backward_fn = [ap, bp, dfa, dfb](Tensor4& self) {
            for (std::size_t i = 0; i < self.data.size(); ++i) {
                const double g = self.grad[i];
                if (ap->requires_grad) ap->grad[i] += g * dfa(ap->data[i], bp->data[i]);
                if (bp->requires_grad) bp->grad[i] += g * dfb(ap->data[i], bp->data[i]);
            }
        };
    }
    return y;
}

inline TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    return binary_op(
        a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

inline TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    return binary_op(
        a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

inline TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    return binary_op(
        a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

inline TensorPtr div_op(const TensorPtr& a, const TensorPtr& b) {
    return binary_op(
        a, b, [](double x, double y) { return x / y; },
        [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); });
}

inline TensorPtr bmin(const TensorPtr& a, const TensorPtr& b) {
    return binary_op(
        a, b, [](double x, double y) { return std::min(x, y); },
        [](double x, double y) { return x <= y ? 1.0 : 0.0; },
        [](double x, double y) { return x <= y ? 0.0 : 1.0; });
}

inline TensorPtr bmax(const TensorPtr& a, const TensorPtr& b) {
    return binary_op(
        a, b, [](double x, double y) { return std::max(x, y); },
        [](double x, double y) { return x >= y ? 1.0 : 0.0; },
        [](double x, double y) { return x >= y ? 0.0 : 1.0; });
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

inline TensorPtr upsample2x(const TensorPtr& x) {
    auto y = tensor(x->n, x->c, 2 * x->h, 2 * x->w);
    for (int b = 0; b < x->n; ++b)
        for (int j = 0; j < x->c; ++j)
            for (int iy = 0; iy < x->h; ++iy)
                for (int ix = 0; ix < x->w; ++ix) {
                    const double v = x->at(b, j, iy, ix);
                    y->at(b, j, 2 * iy, 2 * ix) = v;
                    y->at(b, j, 2 * iy, 2 * ix + 1) = v;
                    y->at(b, j, 2 * iy + 1, 2 * ix) = v;
                    y->at(b, j, 2 * iy + 1, 2 * ix + 1) = v;
                }
    y->requires_grad = x->requires_grad;
    if (y->requires_grad) {
        y->parents = {x};
        TensorPtr xp = x;
        y->backward_fn = [xp](Tensor4& self) {
            for (int b = 0; b < xp->n; ++b)
                for (int j = 0; j < xp->c; ++j)
                    for (int iy = 0; iy < xp->h; ++iy)
                        for (int ix = 0; ix < xp->w; ++ix)
                            xp->grad[xp->index(b, j, iy, ix)] +=
                                self.grad[self.index(b, j, 2 * iy, 2 * ix)] +
                                self.grad[self.index(b, j, 2 * iy, 2 * ix + 1)] +
                                self.grad[self.index(b, j, 2 * iy + 1, 2 * ix)] +
                                self.grad[self.index(b, j, 2 * iy + 1, 2 * ix + 1)];
        };
    }
    return y;
}

inline TensorPtr concat_channels(const std::vector<TensorPtr>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_channels: empty input list");
    int ctotal = 0;
    for (const auto& x : xs) {
        if (x->n != xs[0]->n || x->h != xs[0]->h || x->w != xs[0]->w)
            throw std::invalid_argument("concat_channels: spatial/batch mismatch " +
                                        x->shape_str() + " vs " + xs[0]->shape_str());
        ctotal += x->c;
    }
    auto y = tensor(xs[0]->n, ctotal, xs[0]->h, xs[0]->w);
    const std::size_t plane = static_cast<std::size_t>(xs[0]->h) * xs[0]->w;
    for (int b = 0; b < y->n; ++b) {
        int coff = 0;
        for (const auto& x : xs) {
            std::copy(x->data.begin() + static_cast<std::ptrdiff_t>(b) * x->c * plane,
                      x->data.begin() + static_cast<std::ptrdiff_t>(b + 1) * x->c * plane,
                      y->data.begin() + (static_cast<std::size_t>(b) * ctotal + coff) * plane);
            coff += x->c;
        }
    }
    y->requires_grad = detail::any_requires_grad(xs);
    if (y->requires_grad) {
        y->parents = xs;
        std::vector<TensorPtr> parts = xs;
        y->backward_fn = [parts, plane](Tensor4& self) {
            for (int b = 0; b < self.n; ++b) {
                int coff = 0;
                for (const auto& x : parts) {
                    if (x->requires_grad) {
                        const std::size_t src = (static_cast<std::size_t>(b) * self.c + coff) * plane;
                        const std::size_t dst = static_cast<std::size_t>(b) * x->c * plane;
                        for (std::size_t i = 0; i < static_cast<std::size_t>(x->c) * plane; ++i)
                            x->grad[dst + i] += self.grad[src + i];
                    }
                    coff += x->c;
                }
            }
        };
    }
    return y;
}

/// General crop: half-open ranges on every axis. Used for channel splits
/// and per-cell gathers; backward scatters into the source region.
inline TensorPtr crop(const TensorPtr& x, int n0, int n1, int c0, int c1, int h0, int h1,
                      int w0, int w1) {
    if (n0 < 0 || n1 > x->n || c0 < 0 || c1 > x->c || h0 < 0 || h1 > x->h || w0 < 0 ||
        w1 > x->w || n0 >= n1 || c0 >= c1 || h0 >= h1 || w0 >= w1)
        throw std::invalid_argument("crop: range out of bounds for " + x->shape_str());
    auto y = tensor(n1 - n0, c1 - c0, h1 - h0, w1 - w0);
    for (int b = 0; b < y->n; ++b)
        for (int j = 0; j < y->c; ++j)
            for (int iy = 0; iy < y->h; ++iy)
                for (int ix = 0; ix < y->w; ++ix)
                    y->at(b, j, iy, ix) = x->at(b + n0, j + c0, iy + h0, ix + w0);
    y->requires_grad = x->requires_grad;
    if (y->requires_grad) {
        y->parents = {x};
        TensorPtr xp = x;
        y->backward_fn = [xp, n0, c0, h0, w0](Tensor4& self) {
            for (int b = 0; b < self.n; ++b)
                for (int j = 0; j < self.c; ++j)
                    for (int iy = 0; iy < self.h; ++iy)
                        for (int ix = 0; ix < self.w; ++ix)
                            xp->grad[xp->index(b + n0, j + c0, iy + h0, ix + w0)] +=
                                self.grad[self.index(b, j, iy, ix)];
        };
    }
    return y;
}

inline TensorPtr slice_channels(const TensorPtr& x, int c0, int c1) {
    return crop(x, 0, x->n, c0, c1, 0, x->h, 0, x->w);
}

/// Symmetric (edge-repeating) reflect pad on the spatial axes.
inline TensorPtr pad_reflect(const TensorPtr& x, int top, int bottom, int left, int right) {
    if (top < 0 || bottom < 0 || left < 0 || right < 0)
        throw std::invalid_argument("pad_reflect: negative pad");
    if (top > x->h || bottom > x->h || left > x->w || right > x->w)
        throw std::invalid_argument("pad_reflect: pad exceeds input extent");
    auto y = tensor(x->n, x->c, x->h + top + bottom, x->w + left + right);
    auto mirror = [](int i, int n) {
        if (i < 0) return -i - 1;
        if (i >= n) return 2 * n - 1 - i;
        return i;
    };
    for (int b = 0; b < y->n; ++b)
        for (int j = 0; j < y->c; ++j)
            for (int iy = 0; iy < y->h; ++iy) {
                const int sy = mirror(iy - top, x->h);
                for (int ix = 0; ix < y->w; ++ix)
                    y->at(b, j, iy, ix) = x->at(b, j, sy, mirror(ix - left, x->w));
            }
    y->requires_grad = x->requires_grad;
    if (y->requires_grad) {
        y->parents = {x};
        TensorPtr xp = x;
        y->backward_fn = [xp, top, left, mirror](Tensor4& self) {
            for (int b = 0; b < self.n; ++b)
                for (int j = 0; j < self.c; ++j)
                    for (int iy = 0; iy < self.h; ++iy) {
                        const int sy = mirror(iy - top, xp->h);
                        for (int ix = 0; ix < self.w; ++ix)
                            xp->grad[xp->index(b, j, sy, mirror(ix - left, xp->w))] +=
                                self.grad[self.index(b, j, iy, ix)];
                    }
        };
    }
    return y;
}

// ---------------------------------------------------------------------------
// broadcast / reduction ops
// ---------------------------------------------------------------------------

/// y = x * scale + shift, with scale/shift of shape (1, c, 1, 1).
inline TensorPtr channel_affine(const TensorPtr& x, const TensorPtr& sc, const TensorPtr& sh) {
    if (sc->c != x->c || sh->c != x->c || sc->n != 1 || sh->n != 1 || sc->h != 1 ||
        sc->w != 1 || sh->h != 1 || sh->w != 1)
        throw std::invalid_argument("channel_affine: scale/shift must be 1x" +
                                    std::to_string(x->c) + "x1x1");
    auto y = tensor_like(*x);
    const std::size_t plane = static_cast<std::size_t>(x->h) * x->w;
    for (int b = 0; b < x->n; ++b)
        for (int j = 0; j < x->c; ++j) {
            const double a = sc->data[j], t = sh->data[j];
            const std::size_t off = (static_cast<std::size_t>(b) * x->c + j) * plane;
            for (std::size_t i = 0; i < plane; ++i) y->data[off + i] = a * x->data[off + i] + t;
        }
    y->requires_grad = x->requires_grad || sc->requires_grad || sh->requires_grad;
    if (y->requires_grad) {
        y->parents = {x, sc, sh};
        TensorPtr xp = x, scp = sc, shp = sh;
        y->backward_fn = [xp, scp, shp, plane](Tensor4& self) {
            for (int b = 0; b < xp->n; ++b)
                for (int j = 0; j < xp->c; ++j) {
                    const double a = scp->data[j];
                    const std::size_t off = (static_cast<std::size_t>(b) * xp->c + j) * plane;
                    double dsc = 0.0, dsh = 0.0;
                    for (std::size_t i = 0; i < plane; ++i) {
                        const double g = self.grad[off + i];
                        if (xp->requires_grad) xp->grad[off + i] += g * a;
                        dsc += g * xp->data[off + i];
                        dsh += g;
                    }
                    if (scp->requires_grad) scp->grad[j] += dsc;
                    if (shp->requires_grad) shp->grad[j] += dsh;
                }
        };
    }
    return y;
}

inline TensorPtr sum_all(const TensorPtr& x) {
    auto y = tensor(1, 1, 1, 1);
    double s = 0.0;
    for (double v : x->data) s += v;
    y->data[0] = s;
    y->requires_grad = x->requires_grad;
    if (y->requires_grad) {
        y->parents = {x};
        TensorPtr xp = x;
        y->backward_fn = [xp](Tensor4& self) {
            const double g = self.grad[0];
            for (std::size_t i = 0; i < xp->grad.size(); ++i) xp->grad[i] += g;
        };
    }
    return y;
}

inline TensorPtr mean_all(const TensorPtr& x) {
    return scale(sum_all(x), 1.0 / static_cast<double>(x->numel()));
}

/// Weighted-mean binary cross-entropy on logits. `targets` and optional
/// `weights` are plain data tensors; gradient flows to `logits` only.
inline TensorPtr bce_with_logits(const TensorPtr& logits, const TensorPtr& targets,
                                 const TensorPtr& weights = nullptr) {
    if (!logits->same_shape(*targets))
        throw std::invalid_argument("bce_with_logits: logits " + logits->shape_str() +
                                    " vs targets " + targets->shape_str());
    if (weights && !weights->same_shape(*logits))
        throw std::invalid_argument("bce_with_logits: weights shape mismatch");
    double wsum = 0.0, acc = 0.0;
    for (std::size_t i = 0; i < logits->data.size(); ++i) {
        const double wv = weights ? weights->data[i] : 1.0;
        if (wv == 0.0) continue;
        const double z = logits->data[i], t = targets->data[i];
        // softplus(z) - z*t, stable for either sign of z
        const double sp = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
        acc += wv * (sp - z * t);
        wsum += wv;
    }
    auto y = tensor(1, 1, 1, 1);
    y->data[0] = wsum > 0.0 ? acc / wsum : 0.0;
    y->requires_grad = logits->requires_grad;
    if (y->requires_grad) {
        y->parents = {logits};
        TensorPtr lp = logits, tp = targets, wp = weights;
        y->backward_fn = [lp, tp, wp, wsum](Tensor4& self) {
            if (wsum <= 0.0) return;
            const double g = self.grad[0] / wsum;
            for (std::size_t i = 0; i < lp->data.size(); ++i) {
                const double wv = wp ? wp->data[i] : 1.0;
                if (wv == 0.0) continue;
                lp->grad[i] += g * wv * (sigmoid_scalar(lp->data[i]) - tp->data[i]);
            }
        };
    }
    return y;
}

/// Focal-modulated BCE on logits: per-element term
///   (t*(1-p)^g + (1-t)*p^g) * (softplus(z) - z*t),  p = sigmoid(z),
/// weighted-mean over nonzero weights. The modulating factor is part of the
/// graph: its derivative g*p*(1-p)*((1-t)*p^(g-1) - t*(1-p)^(g-1)) * bce is
/// included, so confident mistakes keep a strong gradient while easy
/// elements fade.
inline TensorPtr focal_bce_with_logits(const TensorPtr& logits, const TensorPtr& targets,
                                       double gamma, const TensorPtr& weights = nullptr) {
    if (!logits->same_shape(*targets))
        throw std::invalid_argument("focal_bce_with_logits: logits " + logits->shape_str() +
                                    " vs targets " + targets->shape_str());
    if (weights && !weights->same_shape(*logits))
        throw std::invalid_argument("focal_bce_with_logits: weights shape mismatch");
    if (gamma < 0.0) throw std::invalid_argument("focal_bce_with_logits: gamma must be >= 0");
    double wsum = 0.0, acc = 0.0;
    for (std::size_t i = 0; i < logits->data.size(); ++i) {
        const double wv = weights ? weights->data[i] : 1.0;
        if (wv == 0.0) continue;
        const double z = logits->data[i], t = targets->data[i];
        const double p = sigmoid_scalar(z);
        const double sp = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
        const double mod = t * std::pow(1.0 - p, gamma) + (1.0 - t) * std::pow(p, gamma);
        acc += wv * mod * (sp - z * t);
        wsum += wv;
    }
    auto y = tensor(1, 1, 1, 1);
    y->data[0] = wsum > 0.0 ? acc / wsum : 0.0;
    y->requires_grad = logits->requires_grad;
    if (y->requires_grad) {
        y->parents = {logits};
        TensorPtr lp = logits, tp = targets, wp = weights;
        y->backward_fn = [lp, tp, wp, wsum, gamma](Tensor4& self) {
            if (wsum <= 0.0) return;
            const double g = self.grad[0] / wsum;
            for (std::size_t i = 0; i < lp->data.size(); ++i) {
                const double wv = wp ? wp->data[i] : 1.0;
                if (wv == 0.0) continue;
                const double z = lp->data[i], t = tp->data[i];
                const double p = sigmoid_scalar(z);
                const double sp =
                    z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
                const double bce = sp - z * t;
                const double mod = t * std::pow(1.0 - p, gamma) + (1.0 - t) * std::pow(p, gamma);
                const double dmod =
                    gamma == 0.0
                        ? 0.0
                        : gamma * p * (1.0 - p) *
                              ((1.0 - t) * std::pow(p, gamma - 1.0) -
                               t * std::pow(1.0 - p, gamma - 1.0));
                lp->grad[i] += g * wv * (dmod * bce + mod * (p - t));
            }
        };
    }
    return y;
}

/// Mask assembly: y[b,0,y,x] = sum_p coef[b,p] * protos[b,p,y,x].
inline TensorPtr coef_proto_mask(const TensorPtr& coef, const TensorPtr& protos) {
    if (coef->n != protos->n || coef->c != protos->c || coef->h != 1 || coef->w != 1)
        throw std::invalid_argument("coef_proto_mask: coef must be " +
                                    std::to_string(protos->n) + "x" + std::to_string(protos->c) +
                                    "x1x1, got " + coef->shape_str());
    auto y = tensor(protos->n, 1, protos->h, protos->w);
    const std::size_t plane = static_cast<std::size_t>(protos->h) * protos->w;
    for (int b = 0; b < protos->n; ++b)
        for (int p = 0; p < protos->c; ++p) {
            const double cv = coef->data[coef->index(b, p, 0, 0)];
            const std::size_t off = (static_cast<std::size_t>(b) * protos->c + p) * plane;
            const std::size_t yoff = static_cast<std::size_t>(b) * plane;
            for (std::size_t i = 0; i < plane; ++i) y->data[yoff + i] += cv * protos->data[off + i];
        }
    add_flops(2ull * protos->numel());
    y->requires_grad = coef->requires_grad || protos->requires_grad;
    if (y->requires_grad) {
        y->parents = {coef, protos};
        TensorPtr cp = coef, pp = protos;
        y->backward_fn = [cp, pp, plane](Tensor4& self) {
            for (int b = 0; b < pp->n; ++b)
                for (int p = 0; p < pp->c; ++p) {
                    const double cv = cp->data[cp->index(b, p, 0, 0)];
                    const std::size_t off = (static_cast<std::size_t>(b) * pp->c + p) * plane;
                    const std::size_t yoff = static_cast<std::size_t>(b) * plane;
                    double dc = 0.0;
                    for (std::size_t i = 0; i < plane; ++i) {
                        const double g = self.grad[yoff + i];
                        if (pp->requires_grad) pp->grad[off + i] += g * cv;
                        dc += g * pp->data[off + i];
                    }
                    if (cp->requires_grad) cp->grad[cp->index(b, p, 0, 0)] += dc;
                }
        };
    }
    return y;
}

}  // namespace aaw
