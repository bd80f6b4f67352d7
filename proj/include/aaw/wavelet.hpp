// Copyright 2026 The aaw-seg Authors
// Licensed under the Apache License, Version 2.0;
// see http://www.apache.org/licenses/LICENSE-2.0 for details.

#pragma once

#include <array>

#include "aaw/ops.hpp"
#include "aaw/tensor.hpp"

namespace aaw {

/// Four subbands of one analysis level, each (n, c, h/2, w/2).
struct Subbands {
    TensorPtr ll, lh, hl, hh;
};

namespace detail {

// Orthonormal 2x2 Haar kernels, entries +-1/2. Row order inside a kernel is
// (top-left, top-right, bottom-left, bottom-right).
inline const std::array<std::array<double, 4>, 4>& haar_kernels() {
    static const std::array<std::array<double, 4>, 4> k = {{
        {0.5, 0.5, 0.5, 0.5},     // LL
        {0.5, -0.5, 0.5, -0.5},   // LH (horizontal detail)
        {0.5, 0.5, -0.5, -0.5},   // HL (vertical detail)
        {0.5, -0.5, -0.5, 0.5},   // HH (diagonal detail)
    }};
    return k;
}

}  // namespace detail

/// One level of the orthonormal 2-D Haar analysis transform, realized as
/// four fixed stride-2 depthwise convolutions. Requires even spatial dims.
inline Subbands dwt2_haar(const TensorPtr& x) {
    if (x->h % 2 != 0 || x->w % 2 != 0)
        throw std::invalid_argument("dwt2_haar: spatial dims must be even, got " +
                                    x->shape_str() + " (caller must pad)");
    const auto& hk = detail::haar_kernels();
    Subbands out;
    TensorPtr* slots[4] = {&out.ll, &out.lh, &out.hl, &out.hh};
    const int ho = x->h / 2, wo = x->w / 2;
    for (int band = 0; band < 4; ++band) {
        auto y = tensor(x->n, x->c, ho, wo);
        const auto& kk = hk[band];
        for (int b = 0; b < x->n; ++b)
            for (int j = 0; j < x->c; ++j)
                for (int oy = 0; oy < ho; ++oy)
                    for (int ox = 0; ox < wo; ++ox) {
                        const double a = x->at(b, j, 2 * oy, 2 * ox);
                        const double bb = x->at(b, j, 2 * oy, 2 * ox + 1);
                        const double cc = x->at(b, j, 2 * oy + 1, 2 * ox);
                        const double dd = x->at(b, j, 2 * oy + 1, 2 * ox + 1);
                        y->at(b, j, oy, ox) = kk[0] * a + kk[1] * bb + kk[2] * cc + kk[3] * dd;
                    }
        y->requires_grad = x->requires_grad;
        if (y->requires_grad) {
            y->parents = {x};
            TensorPtr xp = x;
            y->backward_fn = [xp, kk](Tensor4& self) {
                for (int b = 0; b < self.n; ++b)
                    for (int j = 0; j < self.c; ++j)
                        for (int oy = 0; oy < self.h; ++oy)
                            for (int ox = 0; ox < self.w; ++ox) {
                                const double g = self.grad[self.index(b, j, oy, ox)];
                                xp->grad[xp->index(b, j, 2 * oy, 2 * ox)] += g * kk[0];
                                xp->grad[xp->index(b, j, 2 * oy, 2 * ox + 1)] += g * kk[1];
                                xp->grad[xp->index(b, j, 2 * oy + 1, 2 * ox)] += g * kk[2];
                                xp->grad[xp->index(b, j, 2 * oy + 1, 2 * ox + 1)] += g * kk[3];
                            }
            };
        }
        *slots[band] = y;
    }
    // Counted as the four underlying 2x2 stride-2 depthwise convs.
    add_flops(2ull * 4 * 4 * x->c * ho * wo * x->n);
    return out;
}

/// Exact inverse of dwt2_haar.
inline TensorPtr idwt2_haar(const Subbands& s) {
    const auto& ll = s.ll;
    if (!ll->same_shape(*s.lh) || !ll->same_shape(*s.hl) || !ll->same_shape(*s.hh))
        throw std::invalid_argument("idwt2_haar: subband shape mismatch (LL " + ll->shape_str() +
                                    ", LH " + s.lh->shape_str() + ", HL " + s.hl->shape_str() +
                                    ", HH " + s.hh->shape_str() + ")");
    auto y = tensor(ll->n, ll->c, 2 * ll->h, 2 * ll->w);
    for (int b = 0; b < ll->n; ++b)
        for (int j = 0; j < ll->c; ++j)
            for (int oy = 0; oy < ll->h; ++oy)
                for (int ox = 0; ox < ll->w; ++ox) {
                    const double a = ll->at(b, j, oy, ox);
                    const double d1 = s.lh->at(b, j, oy, ox);
                    const double d2 = s.hl->at(b, j, oy, ox);
                    const double d3 = s.hh->at(b, j, oy, ox);
                    y->at(b, j, 2 * oy, 2 * ox) = 0.5 * (a + d1 + d2 + d3);
                    y->at(b, j, 2 * oy, 2 * ox + 1) = 0.5 * (a - d1 + d2 - d3);
                    y->at(b, j, 2 * oy + 1, 2 * ox) = 0.5 * (a + d1 - d2 - d3);
                    y->at(b, j, 2 * oy + 1, 2 * ox + 1) = 0.5 * (a - d1 - d2 + d3);
                }
    add_flops(2ull * 4 * 4 * ll->c * ll->h * ll->w * ll->n);
    y->requires_grad = ll->requires_grad || s.lh->requires_grad || s.hl->requires_grad ||
                       s.hh->requires_grad;
    if (y->requires_grad) {
        y->parents = {ll, s.lh, s.hl, s.hh};
        Subbands sp = s;
        y->backward_fn = [sp](Tensor4& self) {
            for (int b = 0; b < sp.ll->n; ++b)
                for (int j = 0; j < sp.ll->c; ++j)
                    for (int oy = 0; oy < sp.ll->h; ++oy)
                        for (int ox = 0; ox < sp.ll->w; ++ox) {
                            const double ga = self.grad[self.index(b, j, 2 * oy, 2 * ox)];
                            const double gb = self.grad[self.index(b, j, 2 * oy, 2 * ox + 1)];
                            const double gc = self.grad[self.index(b, j, 2 * oy + 1, 2 * ox)];
                            const double gd = self.grad[self.index(b, j, 2 * oy + 1, 2 * ox + 1)];
                            const std::size_t idx = sp.ll->index(b, j, oy, ox);
                            if (sp.ll->requires_grad) sp.ll->grad[idx] += 0.5 * (ga + gb + gc + gd);
                            if (sp.lh->requires_grad) sp.lh->grad[idx] += 0.5 * (ga - gb + gc - gd);
                            if (sp.hl->requires_grad) sp.hl->grad[idx] += 0.5 * (ga + gb - gc - gd);
                            if (sp.hh->requires_grad) sp.hh->grad[idx] += 0.5 * (ga - gb - gc + gd);
                        }
        };
    }
    return y;
}

/// Multi-level analysis stack with the original spatial extent remembered.
struct WaveletPyramid {
    std::vector<Subbands> levels;  // levels[l] has dims h/2^(l+1)
    int base_h = 0, base_w = 0;
};

inline WaveletPyramid wavelet_pyramid(const TensorPtr& x, int levels) {
    if (levels < 1) throw std::invalid_argument("wavelet_pyramid: levels must be >= 1");
    WaveletPyramid p;
    p.base_h = x->h;
    p.base_w = x->w;
    TensorPtr cur = x;
    for (int l = 0; l < levels; ++l) {
        p.levels.push_back(dwt2_haar(cur));
        cur = p.levels.back().ll;
    }
    return p;
}

/// Depthwise kernels for filtering in the subband domain: one base kernel on
/// the full-resolution image plus four kernels (LL, LH, HL, HH) per level.
struct WTConvParams {
    TensorPtr base_kernel;                             // (c, 1, k, k)
    std::vector<std::array<TensorPtr, 4>> subband_kernels;  // [level][band], (c, 1, k, k)

    int levels() const { return static_cast<int>(subband_kernels.size()); }
    int channels() const { return base_kernel ? base_kernel->n : 0; }
};

/// Wavelet-domain depthwise convolution. Decomposes L levels, filters every
/// subband depthwise, then resynthesizes deepest-first, merging each deeper
/// reconstruction into the filtered LL above it. A plain depthwise path on
/// the full-resolution input is added at the end.
inline TensorPtr wtconv_forward(const TensorPtr& x, const WTConvParams& p) {
    const int L = p.levels();
    if (L < 1) throw std::invalid_argument("wtconv_forward: needs at least one level");
    if (p.base_kernel->n != x->c)
        throw std::invalid_argument("wtconv_forward: kernels are for " +
                                    std::to_string(p.base_kernel->n) + " channels, input has " +
                                    std::to_string(x->c));
    const int mult = 1 << L;
    const int ph = (mult - x->h % mult) % mult;
    const int pw = (mult - x->w % mult) % mult;
    TensorPtr xin = x;
    if (ph > 0 || pw > 0) xin = pad_reflect(x, 0, ph, 0, pw);

    const int c = x->c;
    auto dconv = [c](const TensorPtr& t, const TensorPtr& kern) {
        return conv2d(t, kern, nullptr, 1, kern->h / 2, c);
    };

    // Analysis
    std::vector<Subbands> pyr;
    TensorPtr cur = xin;
    for (int l = 0; l < L; ++l) {
        pyr.push_back(dwt2_haar(cur));
        cur = pyr.back().ll;
    }

    // Filter + deepest-first synthesis
    TensorPtr carry;  // filtered reconstruction from the level below
    for (int l = L - 1; l >= 0; --l) {
        Subbands f;
        f.ll = dconv(pyr[l].ll, p.subband_kernels[l][0]);
        f.lh = dconv(pyr[l].lh, p.subband_kernels[l][1]);
        f.hl = dconv(pyr[l].hl, p.subband_kernels[l][2]);
        f.hh = dconv(pyr[l].hh, p.subband_kernels[l][3]);
        if (carry) f.ll = add(f.ll, carry);
        carry = idwt2_haar(f);
    }

    TensorPtr y = add(dconv(xin, p.base_kernel), carry);
    if (ph > 0 || pw > 0) y = crop(y, 0, y->n, 0, y->c, 0, x->h, 0, x->w);
    return y;
}

}  // namespace aaw
