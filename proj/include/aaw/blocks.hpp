// Copyright 2026 The aaw-seg Authors
// Licensed under the Apache License, Version 2.0;
// see http://www.apache.org/licenses/LICENSE-2.0 for details.

#pragma once

#include <cmath>
#include <string>

#include "aaw/attention.hpp"
#include "aaw/ops.hpp"
#include "aaw/rng.hpp"
#include "aaw/tensor.hpp"
#include "aaw/wavelet.hpp"

namespace aaw {

/// Owns every Param of a model in registration order. Registration order is
/// fixed by construction order, which makes checkpoints and SGD state stable.
class ParamStore {
public:
    ParamPtr add(const std::string& id, TensorPtr value, bool trainable = true) {
        for (const auto& p : params_)
            if (p->id == id) throw std::invalid_argument("ParamStore: duplicate param id " + id);
        value->requires_grad = trainable;
        auto p = std::make_shared<Param>(Param{id, std::move(value), trainable});
        params_.push_back(p);
        return p;
    }

    const std::vector<ParamPtr>& params() const { return params_; }

private:
    std::vector<ParamPtr> params_;
};

namespace detail {

/// Kaiming uniform init over fan-in (He bound sqrt(6/fan_in), variance
/// preserving under ReLU-family activations).
inline TensorPtr init_weight(Rng& rng, int cout, int cin_g, int k) {
    auto w = tensor(cout, cin_g, k, k);
    const double bound = std::sqrt(6.0 / (static_cast<double>(cin_g) * k * k));
    for (auto& v : w->data) v = rng.uniform(-bound, bound);
    return w;
}

}  // namespace detail

/// Plain convolution layer (weight + optional bias).
struct ConvLayer {
    ParamPtr w, b;
    int stride = 1, pad = 0, groups = 1;

    ConvLayer() = default;
    ConvLayer(ParamStore& ps, Rng& rng, const std::string& id, int cin, int cout, int k,
              int stride_, bool bias, int groups_ = 1)
        : stride(stride_), pad(k / 2), groups(groups_) {
        w = ps.add(id + ".w", detail::init_weight(rng, cout, cin / groups_, k));
        if (bias) b = ps.add(id + ".b", tensor(1, cout, 1, 1, 0.0));
    }

    TensorPtr operator()(const TensorPtr& x) const {
        return conv2d(x, w->value, b ? b->value : nullptr, stride, pad, groups);
    }
};

/// Conv + per-channel affine norm + SiLU: the standard composite unit.
/// The affine pair is batch-norm in inference form with frozen unit/zero
/// running stats.
struct ConvNormAct {
    ConvLayer conv;
    ParamPtr nscale, nshift;

    ConvNormAct() = default;
    ConvNormAct(ParamStore& ps, Rng& rng, const std::string& id, int cin, int cout, int k,
                int stride = 1, int groups = 1)
        : conv(ps, rng, id + ".conv", cin, cout, k, stride, /*bias=*/false, groups) {
        nscale = ps.add(id + ".nscale", tensor(1, cout, 1, 1, 1.0));
        nshift = ps.add(id + ".nshift", tensor(1, cout, 1, 1, 0.0));
    }

    TensorPtr operator()(const TensorPtr& x) const {
        return silu(channel_affine(conv(x), nscale->value, nshift->value));
    }
};

/// Depthwise wavelet-domain convolution layer (base path + per-level
/// subband kernels).
struct WTConvLayer {
    ParamPtr base;
    std::vector<std::array<ParamPtr, 4>> subband;  // [level][LL,LH,HL,HH]
    int channels = 0;

    WTConvLayer() = default;
    WTConvLayer(ParamStore& ps, Rng& rng, const std::string& id, int c, int levels, int k)
        : channels(c) {
        base = ps.add(id + ".base", detail::init_weight(rng, c, 1, k));
        static const char* band_names[4] = {"ll", "lh", "hl", "hh"};
        for (int l = 0; l < levels; ++l) {
            std::array<ParamPtr, 4> lvl;
            for (int bnd = 0; bnd < 4; ++bnd)
                lvl[bnd] = ps.add(id + ".l" + std::to_string(l) + "." + band_names[bnd],
                                  detail::init_weight(rng, c, 1, k));
            subband.push_back(lvl);
        }
    }

    WTConvParams params() const {
        WTConvParams p;
        p.base_kernel = base->value;
        for (const auto& lvl : subband)
            p.subband_kernels.push_back(
                {lvl[0]->value, lvl[1]->value, lvl[2]->value, lvl[3]->value});
        return p;
    }

    TensorPtr operator()(const TensorPtr& x) const { return wtconv_forward(x, params()); }
};

/// Two 3x3 units with a residual connection.
struct Bottleneck {
    ConvNormAct cv1, cv2;

    Bottleneck() = default;
    Bottleneck(ParamStore& ps, Rng& rng, const std::string& id, int c)
        : cv1(ps, rng, id + ".cv1", c, c, 3), cv2(ps, rng, id + ".cv2", c, c, 3) {}

    TensorPtr operator()(const TensorPtr& x) const { return add(x, cv2(cv1(x))); }
};

/// One linear-attention unit with learned projections.
struct AttnUnit {
    ParamPtr wq, wk, wv, wo;
    int heads = 2;
    double eps = 1e-6;

    AttnUnit() = default;
    AttnUnit(ParamStore& ps, Rng& rng, const std::string& id, int c, int heads_ = 2)
        : heads(heads_) {
        wq = ps.add(id + ".wq", detail::init_weight(rng, c, c, 1));
        wk = ps.add(id + ".wk", detail::init_weight(rng, c, c, 1));
        wv = ps.add(id + ".wv", detail::init_weight(rng, c, c, 1));
        wo = ps.add(id + ".wo", detail::init_weight(rng, c, c, 1));
    }

    LinearAttnParams params() const { return LinearAttnParams{wq->value, wk->value, wv->value, wo->value, heads, eps}; }

    TensorPtr operator()(const TensorPtr& x) const { return linear_attention(x, params()); }
};

enum class EntryKind { conv, wt };
enum class InnerKind { bottleneck, attention };

/// Split-transform-concatenate block. Entry projects to c_out (optionally
/// behind a wavelet-domain spatial head), the second half runs through the
/// stacked inner units, every intermediate is concatenated, exit projects
/// back to c_out.
struct C2fBlock {
    EntryKind entry_kind = EntryKind::conv;
    InnerKind inner_kind = InnerKind::bottleneck;
    WTConvLayer wt;  // only when entry_kind == wt
    ConvNormAct entry, exit;
    std::vector<Bottleneck> bneck;
    std::vector<AttnUnit> attn;
    int c_out = 0;

    C2fBlock() = default;
    C2fBlock(ParamStore& ps, Rng& rng, const std::string& id, int cin, int cout, int n_units,
             EntryKind ek, InnerKind ik, int wt_levels = 2, int wt_k = 3)
        : entry_kind(ek), inner_kind(ik), c_out(cout) {
        if (cout % 2 != 0)
            throw std::invalid_argument("C2fBlock: c_out must be even, got " + std::to_string(cout));
        if (ek == EntryKind::wt) wt = WTConvLayer(ps, rng, id + ".wt", cin, wt_levels, wt_k);
        entry = ConvNormAct(ps, rng, id + ".entry", cin, cout, 1);
        const int ch = cout / 2;
        for (int i = 0; i < n_units; ++i) {
            if (ik == InnerKind::bottleneck)
                bneck.emplace_back(ps, rng, id + ".u" + std::to_string(i), ch);
            else
                attn.emplace_back(ps, rng, id + ".u" + std::to_string(i), ch);
        }
        const int n = n_units;
        exit = ConvNormAct(ps, rng, id + ".exit", (2 + n) * ch, cout, 1);
    }

    TensorPtr operator()(const TensorPtr& x) const {
        TensorPtr t = x;
        if (entry_kind == EntryKind::wt) t = wt(t);
        t = entry(t);
        const int ch = c_out / 2;
        std::vector<TensorPtr> parts;
        parts.push_back(slice_channels(t, 0, ch));
        parts.push_back(slice_channels(t, ch, c_out));
        TensorPtr cur = parts.back();
        if (inner_kind == InnerKind::bottleneck)
            for (const auto& u : bneck) {
                cur = u(cur);
                parts.push_back(cur);
            }
        else
            for (const auto& u : attn) {
                cur = u(cur);
                parts.push_back(cur);
            }
        return exit(concat_channels(parts));
    }
};

/// 2x downsample by the Haar LL band rescaled to a plain 2x2 average.
inline TensorPtr haar_avgpool2(const TensorPtr& x) {
    return scale(dwt2_haar(x).ll, 0.5);
}

/// Stage downsampler. Plain: one 3x3 stride-2 unit. Wavelet: depthwise
/// wavelet head, pointwise projection, then Haar average pooling.
struct DownLayer {
    bool use_wt = false;
    ConvNormAct conv;  // plain: 3x3 s2; wt: 1x1 s1 projection
    WTConvLayer wt;

    DownLayer() = default;
    DownLayer(ParamStore& ps, Rng& rng, const std::string& id, int cin, int cout, bool wt_head,
              int wt_levels = 2, int wt_k = 3)
        : use_wt(wt_head) {
        if (wt_head) {
            wt = WTConvLayer(ps, rng, id + ".wt", cin, wt_levels, wt_k);
            conv = ConvNormAct(ps, rng, id + ".proj", cin, cout, 1);
        } else {
            conv = ConvNormAct(ps, rng, id + ".conv", cin, cout, 3, 2);
        }
    }

    TensorPtr operator()(const TensorPtr& x) const {
        if (!use_wt) return conv(x);
        return haar_avgpool2(conv(wt(x)));
    }
};

/// Free-function form of the attention block used by the shape tests:
/// a C2F block whose inner units are linear attention.
inline TensorPtr attention_c2f(const TensorPtr& x, int n_attn, Rng& rng) {
    ParamStore ps;
    C2fBlock blk(ps, rng, "attn_c2f", x->c, x->c, n_attn, EntryKind::conv, InnerKind::attention);
    return blk(x);
}

/// Free-function form of the wavelet block: C2F with a wavelet-domain entry
/// head and the plain residual bottlenecks retained.
inline TensorPtr wtc2f(const TensorPtr& x, int n_bottleneck, Rng& rng) {
    ParamStore ps;
    C2fBlock blk(ps, rng, "wtc2f", x->c, x->c, n_bottleneck, EntryKind::wt, InnerKind::bottleneck);
    return blk(x);
}

}  // namespace aaw
