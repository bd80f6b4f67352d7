// Copyright 2026 The aaw-seg Authors
// Licensed under the Apache License, Version 2.0;
// see http://www.apache.org/licenses/LICENSE-2.0 for details.

#pragma once

#include "aaw/instance.hpp"
#include "aaw/model.hpp"

namespace aaw {

namespace detail {

inline double decode_side(double t, int stride) {
    // Smooth, bounded size mapping: stride * e^(3*tanh(t)) in
    // [stride*e^-3, stride*e^3], differentiable everywhere.
    return stride * std::exp(3.0 * std::tanh(t));
}

}  // namespace detail

/// Cell-relative box decode shared by inference and the loss.
/// raw = (tx, ty, tw, th) at grid cell (i, j) of the given stride.
inline void decode_box(double tx, double ty, double tw, double th, int i, int j, int stride,
                       int frame_h, int frame_w, double& x1, double& y1, double& x2, double& y2) {
    const double cx = (j + sigmoid_scalar(tx)) * stride;
    const double cy = (i + sigmoid_scalar(ty)) * stride;
    const double bw = detail::decode_side(tw, stride);
    const double bh = detail::decode_side(th, stride);
    x1 = std::clamp(cx - bw / 2.0, 0.0, static_cast<double>(frame_w));
    y1 = std::clamp(cy - bh / 2.0, 0.0, static_cast<double>(frame_h));
    x2 = std::clamp(cx + bw / 2.0, 0.0, static_cast<double>(frame_w));
    y2 = std::clamp(cy + bh / 2.0, 0.0, static_cast<double>(frame_h));
}

/// Greedy per-class NMS. Deterministic ordering: score desc, then box area
/// desc, then x1 asc — so candidate input order never matters.
inline std::vector<Instance> nms(std::vector<Instance> cands, double nms_iou) {
    std::sort(cands.begin(), cands.end(), [](const Instance& a, const Instance& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.box_area() != b.box_area()) return a.box_area() > b.box_area();
        return a.x1 < b.x1;
    });
    std::vector<Instance> kept;
    for (auto& c : cands) {
        bool suppressed = false;
        for (const auto& k : kept)
            if (k.class_id == c.class_id && box_iou(k, c) > nms_iou) {
                suppressed = true;
                break;
            }
        if (!suppressed) kept.push_back(std::move(c));
    }
    return kept;
}

/// Turns raw head outputs for batch element `b` into instances.
/// Masks are assembled from prototypes, sigmoided, upsampled to the frame,
/// thresholded at 0.5, and cropped to the decoded box.
inline std::vector<Instance> decode(const RawOutputs& raw, int b, int frame_h, int frame_w,
                                    double score_thresh, double nms_iou) {
    if (score_thresh < 0.0 || score_thresh > 1.0 || nms_iou < 0.0 || nms_iou > 1.0)
        throw std::invalid_argument("decode: thresholds must lie in [0,1]");
    const int P = raw.protos->c;
    const int ph = raw.protos->h, pw = raw.protos->w;
    std::vector<Instance> cands;
    const TensorPtr grids[2] = {raw.det8, raw.det16};
    for (int s = 0; s < 2; ++s) {
        const auto& g = grids[s];
        const int stride = kStrides[s];
        for (int i = 0; i < g->h; ++i)
            for (int j = 0; j < g->w; ++j) {
                int best = 0;
                double best_logit = g->at(b, 0, i, j);
                for (int cc = 1; cc < kNumClasses; ++cc)
                    if (g->at(b, cc, i, j) > best_logit) {
                        best_logit = g->at(b, cc, i, j);
                        best = cc;
                    }
                const double score = sigmoid_scalar(best_logit);
                if (score < score_thresh) continue;
                Instance inst;
                inst.class_id = best;
                inst.score = score;
                decode_box(g->at(b, kNumClasses + 0, i, j), g->at(b, kNumClasses + 1, i, j),
                           g->at(b, kNumClasses + 2, i, j), g->at(b, kNumClasses + 3, i, j), i,
                           j, stride, frame_h, frame_w, inst.x1, inst.y1, inst.x2, inst.y2);
                if (inst.x2 <= inst.x1 || inst.y2 <= inst.y1) continue;
                // Assemble the mask logit field at prototype resolution
                // (stride 4), upsample it bilinearly to the frame, threshold
                // at logit 0 (sigmoid 0.5), crop to box. Interpolating the
                // logits recovers sub-block boundaries the coverage-trained
                // field encodes.
                std::vector<double> ml(static_cast<std::size_t>(ph) * pw, 0.0);
                for (int py = 0; py < ph; ++py)
                    for (int px = 0; px < pw; ++px)
                        for (int p = 0; p < P; ++p)
                            ml[static_cast<std::size_t>(py) * pw + px] +=
                                g->at(b, kNumClasses + kBoxChannels + p, i, j) *
                                raw.protos->at(b, p, py, px);
                inst.mask_h = frame_h;
                inst.mask_w = frame_w;
                inst.mask.assign(static_cast<std::size_t>(frame_h) * frame_w, 0);
                const int fy0 = std::max(0, static_cast<int>(std::floor(inst.y1)));
                const int fy1 = std::min(frame_h, static_cast<int>(std::ceil(inst.y2)));
                const int fx0 = std::max(0, static_cast<int>(std::floor(inst.x1)));
                const int fx1 = std::min(frame_w, static_cast<int>(std::ceil(inst.x2)));
                for (int fy = fy0; fy < fy1; ++fy) {
                    const double v = std::clamp((fy + 0.5) / 4.0 - 0.5, 0.0, ph - 1.0);
                    const int v0 = static_cast<int>(v), v1 = std::min(ph - 1, v0 + 1);
                    const double fv = v - v0;
                    for (int fx = fx0; fx < fx1; ++fx) {
                        const double u = std::clamp((fx + 0.5) / 4.0 - 0.5, 0.0, pw - 1.0);
                        const int u0 = static_cast<int>(u), u1 = std::min(pw - 1, u0 + 1);
                        const double fu = u - u0;
                        const double lv =
                            (1 - fv) * ((1 - fu) * ml[static_cast<std::size_t>(v0) * pw + u0] +
                                        fu * ml[static_cast<std::size_t>(v0) * pw + u1]) +
                            fv * ((1 - fu) * ml[static_cast<std::size_t>(v1) * pw + u0] +
                                  fu * ml[static_cast<std::size_t>(v1) * pw + u1]);
                        if (lv > 0.0)
                            inst.mask[static_cast<std::size_t>(fy) * frame_w + fx] = 1;
                    }
                }
                cands.push_back(std::move(inst));
            }
    }
    return nms(std::move(cands), nms_iou);
}

}  // namespace aaw
