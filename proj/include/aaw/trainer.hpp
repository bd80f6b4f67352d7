// Copyright 2026 The aaw-seg Authors
// Licensed under the Apache License, Version 2.0;
// see http://www.apache.org/licenses/LICENSE-2.0 for details.

#pragma once

#include <functional>
#include <tuple>

#include "aaw/decode.hpp"
#include "aaw/metrics.hpp"
#include "aaw/model.hpp"
#include "aaw/synth.hpp"

namespace aaw {

/// One ground-truth instance assigned to a head cell.
struct CellTarget {
    int scale;       // 0 -> stride 8, 1 -> stride 16
    int ci, cj;      // grid cell
    int gt_index;    // into the frame's instance list
};

/// Assigns each GT to the cell containing its box center, at the scale whose
/// stride best matches the box size (side/stride closest to 2.5; tie -> the
/// finer scale). One GT per cell: larger box wins, then lower class id.
inline std::vector<CellTarget> assign_targets(const std::vector<Instance>& gts, int frame_h,
                                              int frame_w) {
    std::map<std::tuple<int, int, int>, int> cell_owner;  // (scale, ci, cj) -> gt index
    for (int gi = 0; gi < static_cast<int>(gts.size()); ++gi) {
        const auto& g = gts[gi];
        const double side = std::sqrt(g.box_area());
        int scale = 0;
        double best = 1e18;
        for (int s = 0; s < 2; ++s) {
            const double d = std::abs(side / kStrides[s] - 2.5);
            if (d < best) {
                best = d;
                scale = s;
            }
        }
        const int stride = kStrides[scale];
        const int gh = frame_h / stride, gw = frame_w / stride;
        const int ci = std::min(gh - 1, static_cast<int>((g.y1 + g.y2) / 2.0 / stride));
        const int cj = std::min(gw - 1, static_cast<int>((g.x1 + g.x2) / 2.0 / stride));
        const auto key = std::make_tuple(scale, ci, cj);
        auto it = cell_owner.find(key);
        if (it == cell_owner.end()) {
            cell_owner[key] = gi;
        } else {
            const auto& cur = gts[it->second];
            if (g.box_area() > cur.box_area() ||
                (g.box_area() == cur.box_area() && g.class_id < cur.class_id))
                it->second = gi;
        }
    }
    std::vector<CellTarget> out;
    for (const auto& [key, gi] : cell_owner)
        out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), gi});
    return out;
}

struct LossBreakdown {
    TensorPtr total_tensor;
    double cls = 0, box = 0, mask = 0, total = 0;
    double lambda_cls = 1.0, lambda_box = 2.0, lambda_mask = 3.0;
};

namespace detail {

inline TensorPtr const_scalar(double v) {
    auto t = tensor(1, 1, 1, 1, v);
    return t;
}

/// Differentiable box decode at one cell; mirrors decode_box without the
/// frame clamp (the clamp would kill gradients at the border).
struct DecodedBox {
    TensorPtr x1, y1, x2, y2;
};

inline DecodedBox decode_box_diff(const TensorPtr& tx, const TensorPtr& ty, const TensorPtr& tw,
                                  const TensorPtr& th, int ci, int cj, int stride) {
    auto cx = scale(add_const(sigmoid(tx), cj), stride);
    auto cy = scale(add_const(sigmoid(ty), ci), stride);
    auto bw = scale(exp_op(scale(tanh_op(tw), 3.0)), stride);
    auto bh = scale(exp_op(scale(tanh_op(th), 3.0)), stride);
    DecodedBox b;
    b.x1 = sub(cx, scale(bw, 0.5));
    b.x2 = add(cx, scale(bw, 0.5));
    b.y1 = sub(cy, scale(bh, 0.5));
    b.y2 = add(cy, scale(bh, 0.5));
    return b;
}

inline TensorPtr iou_loss(const DecodedBox& p, const Instance& g) {
    auto c = [](double v) { return const_scalar(v); };
    auto ix = relu(sub(bmin(p.x2, c(g.x2)), bmax(p.x1, c(g.x1))));
    auto iy = relu(sub(bmin(p.y2, c(g.y2)), bmax(p.y1, c(g.y1))));
    auto inter = mul(ix, iy);
    auto parea = mul(sub(p.x2, p.x1), sub(p.y2, p.y1));
    auto uni = sub(add(parea, c(g.box_area())), inter);
    return sub(c(1.0), div_op(inter, uni));
}

/// GT mask at prototype resolution (fractional coverage of each 4x4 block,
/// a soft BCE target so the logit field encodes sub-block boundaries) and
/// the in-box weight mask.
inline void downsample_gt_mask(const Instance& g, int ph, int pw, Tensor4& tgt, Tensor4& wgt) {
    for (int py = 0; py < ph; ++py)
        for (int px = 0; px < pw; ++px) {
            int cnt = 0, tot = 0;
            for (int dy = 0; dy < 4; ++dy)
                for (int dx = 0; dx < 4; ++dx) {
                    const int y = py * 4 + dy, x = px * 4 + dx;
                    if (y >= g.mask_h || x >= g.mask_w) continue;
                    ++tot;
                    cnt += g.mask[static_cast<std::size_t>(y) * g.mask_w + x] ? 1 : 0;
                }
            tgt.at(0, 0, py, px) = tot > 0 ? static_cast<double>(cnt) / tot : 0.0;
            const bool inside = (px + 1) * 4 > g.x1 && px * 4 < g.x2 && (py + 1) * 4 > g.y1 &&
                                py * 4 < g.y2;
            wgt.at(0, 0, py, px) = inside ? 1.0 : 0.0;
        }
}

}  // namespace detail

/// Composite loss: BCE on class logits over all cells, (1 - IoU) on decoded
/// boxes at positive cells, BCE on assembled prototype masks inside the GT
/// box. Weights default to (1, 2, 2).
inline LossBreakdown loss(const RawOutputs& raw, const std::vector<Instance>& gts, int b,
                          int frame_h, int frame_w) {
    const auto targets = assign_targets(gts, frame_h, frame_w);
    const TensorPtr dets[2] = {raw.det8, raw.det16};

    // --- classification over both grids ---
    // Positive cells are outnumbered by background ~1000:1. A flat mean lets
    // negatives drown the positives; a per-group mean gives each individual
    // hard negative a ~1/1000 weight so false positives decay too slowly.
    // Instead: plain BCE mean over positives, plus a focal (gamma 2) sum
    // over negatives normalized by the positive count, so easy negatives
    // fade and confident false positives keep full pressure.
    TensorPtr lcls;
    double n_pos = 0;
    std::vector<TensorPtr> pos_terms, neg_terms;
    for (int s = 0; s < 2; ++s) {
        auto logits = crop(dets[s], b, b + 1, 0, kNumClasses, 0, dets[s]->h, 0, dets[s]->w);
        auto tgt = tensor_like(*logits, 0.0);
        for (const auto& t : targets)
            if (t.scale == s) tgt->at(0, gts[t.gt_index].class_id, t.ci, t.cj) = 1.0;
        auto wpos = tensor_like(*logits, 0.0);
        auto wneg = tensor_like(*logits, 1.0);
        double p = 0;
        for (std::size_t i = 0; i < tgt->data.size(); ++i)
            if (tgt->data[i] > 0.5) {
                wpos->data[i] = 1.0;
                wneg->data[i] = 0.0;
                ++p;
            }
        pos_terms.push_back(scale(bce_with_logits(logits, tgt, wpos), p));
        neg_terms.push_back(scale(focal_bce_with_logits(logits, tgt, 2.0, wneg),
                                  static_cast<double>(tgt->numel()) - p));
        n_pos += p;
    }
    const double pos_norm = std::max(n_pos, 1.0);
    auto lpos = scale(add(pos_terms[0], pos_terms[1]), 1.0 / pos_norm);
    auto lneg = scale(add(neg_terms[0], neg_terms[1]), 1.0 / pos_norm);
    lcls = add(lpos, lneg);

    // --- box and mask at positive cells ---
    TensorPtr lbox, lmask;
    if (targets.empty()) {
        lbox = detail::const_scalar(0.0);
        lmask = detail::const_scalar(0.0);
    } else {
        const int ph = raw.protos->h, pw = raw.protos->w;
        auto protos_b = crop(raw.protos, b, b + 1, 0, raw.protos->c, 0, ph, 0, pw);
        std::vector<TensorPtr> box_terms, mask_terms;
        for (const auto& t : targets) {
            const auto& det = dets[t.scale];
            const auto& g = gts[t.gt_index];
            auto ch = [&](int c0) {
                return crop(det, b, b + 1, c0, c0 + 1, t.ci, t.ci + 1, t.cj, t.cj + 1);
            };
            auto pb = detail::decode_box_diff(ch(kNumClasses), ch(kNumClasses + 1),
                                              ch(kNumClasses + 2), ch(kNumClasses + 3), t.ci,
                                              t.cj, kStrides[t.scale]);
            box_terms.push_back(detail::iou_loss(pb, g));

            auto coef = crop(det, b, b + 1, kNumClasses + kBoxChannels,
                             kNumClasses + kBoxChannels + kNumPrototypes, t.ci, t.ci + 1, t.cj,
                             t.cj + 1);
            auto mlogits = coef_proto_mask(coef, protos_b);
            auto tgt = tensor(1, 1, ph, pw);
            auto wgt = tensor(1, 1, ph, pw);
            detail::downsample_gt_mask(g, ph, pw, *tgt, *wgt);
            mask_terms.push_back(bce_with_logits(mlogits, tgt, wgt));
        }
        auto mean_of = [](std::vector<TensorPtr>& v) {
            TensorPtr s = v[0];
            for (std::size_t i = 1; i < v.size(); ++i) s = add(s, v[i]);
            return scale(s, 1.0 / static_cast<double>(v.size()));
        };
        lbox = mean_of(box_terms);
        lmask = mean_of(mask_terms);
    }

    LossBreakdown lb;
    lb.cls = lcls->data[0];
    lb.box = lbox->data[0];
    lb.mask = lmask->data[0];
    lb.total_tensor = add(add(scale(lcls, lb.lambda_cls), scale(lbox, lb.lambda_box)),
                          scale(lmask, lb.lambda_mask));
    lb.total = lb.total_tensor->data[0];
    if (!std::isfinite(lb.total))
        throw std::runtime_error("loss: non-finite total (cls=" + std::to_string(lb.cls) +
                                 " box=" + std::to_string(lb.box) +
                                 " mask=" + std::to_string(lb.mask) + ")");
    return lb;
}

struct LossRecord {
    int step;
    double total, cls, box, mask;
};

struct TrainResult {
    std::vector<LossRecord> trace;
};

/// SGD with momentum 0.9, constant lr, one frame per step picked from the
/// seeded stream. Deterministic under fixed seed. Aborts on divergence.
inline TrainResult train(SegModel& model, const std::vector<FrameSample>& samples, int steps,
                         double lr, std::uint64_t rng_seed,
                         const std::function<void(int)>& every_k = nullptr, int k = 0) {
    if (steps < 1) throw std::invalid_argument("train: steps must be >= 1");
    if (samples.empty()) throw std::invalid_argument("train: empty dataset");
    Rng rng = Rng::seeded(rng_seed);
    std::map<const Param*, std::vector<double>> vel;
    TrainResult res;
    for (int step = 0; step < steps; ++step) {
        const auto& s = samples[rng.below(samples.size())];
        auto raw = model.forward(s.image);
        auto lb = loss(raw, s.instances, 0, s.image->h, s.image->w);
        if (lb.total > 1e4)
            throw std::runtime_error("train: diverged at step " + std::to_string(step) +
                                     " (total=" + std::to_string(lb.total) + ")");
        backward(lb.total_tensor);
        // Global-norm gradient clip: occasional sharp steps (hard frames,
        // early training) otherwise launch the momentum buffer into a
        // divergent spiral at useful learning rates.
        double gsq = 0.0;
        for (const auto& p : model.params()) {
            if (!p->trainable || p->value->grad.size() != p->value->data.size()) continue;
            for (double gv : p->value->grad) gsq += gv * gv;
        }
        const double gclip = 10.0;
        const double gscale = gsq > gclip * gclip ? gclip / std::sqrt(gsq) : 1.0;
        for (const auto& p : model.params()) {
            if (!p->trainable) continue;
            auto& v = vel[p.get()];
            if (v.empty()) v.assign(p->value->numel(), 0.0);
            auto& g = p->value->grad;
            auto& d = p->value->data;
            if (g.size() != d.size()) continue;  // unreachable from this loss
            for (std::size_t i = 0; i < d.size(); ++i) {
                v[i] = 0.9 * v[i] + gscale * g[i];
                d[i] -= lr * v[i];
            }
            p->value->zero_grad();
        }
        model.detach_params();
        res.trace.push_back({step, lb.total, lb.cls, lb.box, lb.mask});
        if (every_k && k > 0 && (step + 1) % k == 0) every_k(step + 1);
    }
    return res;
}

/// Mask-level Dice of model predictions against GT over a sample set;
/// the overfit harness target.
inline double eval_mask_dice(const SegModel& model, const std::vector<FrameSample>& samples,
                             double score_thresh = 0.3, double nms_iou = 0.5) {
    std::vector<EvalFrame> frames;
    for (const auto& s : samples) {
        auto raw = model.forward(s.image);
        EvalFrame f;
        f.preds = decode(raw, 0, s.image->h, s.image->w, score_thresh, nms_iou);
        f.gts = s.instances;
        frames.push_back(std::move(f));
    }
    return evaluate(frames).aggregate.dice;
}

}  // namespace aaw
