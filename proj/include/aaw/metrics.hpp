// Copyright 2026 The aaw-seg Authors
// Licensed under the Apache License, Version 2.0;
// see http://www.apache.org/licenses/LICENSE-2.0 for details.

#pragma once

#include <map>
#include <optional>
#include <set>

#include "aaw/classes.hpp"
#include "aaw/instance.hpp"

namespace aaw {

/// Pixel confusion counts for one (frame, class) cell. True negatives are
/// tracked but never reported (background dominates Doppler frames).
struct PixelCounts {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline PixelCounts pixel_counts(const std::vector<std::uint8_t>& pred,
                                const std::vector<std::uint8_t>& gt, int h, int w) {
    if (pred.size() != gt.size() || pred.size() != static_cast<std::size_t>(h) * w)
        throw std::invalid_argument("pixel_counts: mask dimension mismatch");
    PixelCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] != 0, g = gt[i] != 0;
        if (p && g) ++c.tp;
        else if (p) ++c.fp;
        else if (g) ++c.fn;
        else ++c.tn;
    }
    return c;
}

// Degenerate convention: an empty-vs-empty cell scores 1.0 for dice/iou;
// precision/recall are undefined there and the caller skips the cell.
inline double dice(const PixelCounts& c) {
    const std::size_t d = 2 * c.tp + c.fp + c.fn;
    return d == 0 ? 1.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(d);
}

inline double iou(const PixelCounts& c) {
    const std::size_t d = c.tp + c.fp + c.fn;
    return d == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(d);
}

inline std::optional<double> precision(const PixelCounts& c) {
    const std::size_t d = c.tp + c.fp;
    if (d == 0) return std::nullopt;
    return static_cast<double>(c.tp) / static_cast<double>(d);
}

inline std::optional<double> recall(const PixelCounts& c) {
    const std::size_t d = c.tp + c.fn;
    if (d == 0) return std::nullopt;
    return static_cast<double>(c.tp) / static_cast<double>(d);
}

/// One evaluation frame: model predictions against ground truth.
struct EvalFrame {
    std::vector<Instance> preds;
    std::vector<Instance> gts;
};

/// Average precision for one class over a whole evaluation set.
/// Predictions are ranked by score; each is greedily matched to the
/// still-unmatched GT (same frame) of highest mask-IoU >= iou_thresh.
/// AP is the area under the all-point precision envelope.
/// Returns nullopt when the class has no GT instances.
inline std::optional<double> average_precision(const std::vector<EvalFrame>& frames,
                                               int class_id, double iou_thresh) {
    if (iou_thresh <= 0.0 || iou_thresh >= 1.0)
        throw std::invalid_argument("average_precision: iou_thresh must lie in (0,1)");
    struct Pred {
        double score;
        int frame;
        int idx;
    };
    std::vector<Pred> preds;
    std::size_t n_gt = 0;
    for (int f = 0; f < static_cast<int>(frames.size()); ++f) {
        for (int i = 0; i < static_cast<int>(frames[f].preds.size()); ++i)
            if (frames[f].preds[i].class_id == class_id)
                preds.push_back({frames[f].preds[i].score, f, i});
        for (const auto& g : frames[f].gts)
            if (g.class_id == class_id) ++n_gt;
    }
    if (n_gt == 0) return std::nullopt;
    std::sort(preds.begin(), preds.end(), [](const Pred& a, const Pred& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.frame != b.frame) return a.frame < b.frame;
        return a.idx < b.idx;
    });

    std::map<int, std::vector<bool>> gt_used;
    for (int f = 0; f < static_cast<int>(frames.size()); ++f)
        gt_used[f].assign(frames[f].gts.size(), false);

    std::vector<bool> is_tp(preds.size(), false);
    for (std::size_t r = 0; r < preds.size(); ++r) {
        const auto& p = frames[preds[r].frame].preds[preds[r].idx];
        const auto& gts = frames[preds[r].frame].gts;
        auto& used = gt_used[preds[r].frame];
        double best = iou_thresh;
        int best_g = -1;
        for (int g = 0; g < static_cast<int>(gts.size()); ++g) {
            if (used[g] || gts[g].class_id != class_id) continue;
            const double v = mask_iou(p, gts[g]);
            if (v >= best && (best_g < 0 || v > best)) {
                best = v;
                best_g = g;
            }
        }
        if (best_g >= 0) {
            used[best_g] = true;
            is_tp[r] = true;
        }
    }

    // PR points at every prefix of the ranked list, then the all-point envelope.
    std::vector<double> prec(preds.size()), rec(preds.size());
    std::size_t tp = 0;
    for (std::size_t r = 0; r < preds.size(); ++r) {
        if (is_tp[r]) ++tp;
        prec[r] = static_cast<double>(tp) / static_cast<double>(r + 1);
        rec[r] = static_cast<double>(tp) / static_cast<double>(n_gt);
    }
    double ap = 0.0, prev_rec = 0.0;
    for (std::size_t r = 0; r < preds.size(); ++r) {
        double env = 0.0;  // max precision at recall >= rec[r]
        for (std::size_t s = r; s < preds.size(); ++s) env = std::max(env, prec[s]);
        if (rec[r] > prev_rec) {
            ap += (rec[r] - prev_rec) * env;
            prev_rec = rec[r];
        }
    }
    return ap;
}

/// Unweighted mean over classes present in GT (Eq. 5 with n = class count).
inline std::optional<double> mean_average_precision(const std::vector<EvalFrame>& frames,
                                                    double iou_thresh) {
    double sum = 0.0;
    int n = 0;
    for (const auto& ci : class_table()) {
        auto ap = average_precision(frames, ci.id, iou_thresh);
        if (ap) {
            sum += *ap;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / n;
}

struct ScoreRow {
    double dice = 0, iou = 0, precision = 0, recall = 0;
};

struct SubgroupRow {
    double ipsilateral = 0, contralateral = 0, difference = 0;
};

/// Per-class and aggregate scores in the shape of the report tables:
/// per-class rows, a macro aggregate, and ipsilateral/contralateral
/// subgroup rows with their difference column.
struct MetricReport {
    std::map<int, ScoreRow> per_class;              // macro over (frame, class) cells
    std::map<int, std::optional<double>> class_ap;  // absent when class has no GT
    ScoreRow aggregate;
    std::optional<double> map;
    std::map<std::string, SubgroupRow> subgroup;  // keyed Dice/IoU/Precision/Recall
};

namespace detail {

/// Union mask of all instances of `class_id` in the list.
inline std::vector<std::uint8_t> class_union_mask(const std::vector<Instance>& xs, int class_id,
                                                  int h, int w) {
    std::vector<std::uint8_t> m(static_cast<std::size_t>(h) * w, 0);
    for (const auto& x : xs)
        if (x.class_id == class_id) {
            if (x.mask_h != h || x.mask_w != w)
                throw std::invalid_argument("class_union_mask: instance mask size mismatch");
            for (std::size_t i = 0; i < m.size(); ++i)
                if (x.mask[i]) m[i] = 1;
        }
    return m;
}

struct CellScores {
    int class_id;
    double dice, iou;
    std::optional<double> precision, recall;
};

/// One (frame, class) cell per class present in GT or predictions.
inline std::vector<CellScores> frame_cells(const EvalFrame& f, int h, int w) {
    std::set<int> present;
    for (const auto& g : f.gts) present.insert(g.class_id);
    for (const auto& p : f.preds) present.insert(p.class_id);
    std::vector<CellScores> cells;
    for (int cid : present) {
        const auto pm = class_union_mask(f.preds, cid, h, w);
        const auto gm = class_union_mask(f.gts, cid, h, w);
        const auto c = pixel_counts(pm, gm, h, w);
        cells.push_back({cid, dice(c), iou(c), precision(c), recall(c)});
    }
    return cells;
}

struct Acc {
    double sum = 0.0;
    std::size_t n = 0;
    void add(double v) {
        sum += v;
        ++n;
    }
    void add(const std::optional<double>& v) {
        if (v) add(*v);
    }
    double mean() const { return n == 0 ? 0.0 : sum / static_cast<double>(n); }
};

}  // namespace detail

/// Full report over an evaluation set. Frame dimensions are taken from the
/// first instance encountered. Aggregation is macro: the mean over
/// per-frame per-class cells.
inline MetricReport evaluate(const std::vector<EvalFrame>& frames, double iou_thresh = 0.5) {
    int h = 0, w = 0;
    for (const auto& f : frames) {
        for (const auto& g : f.gts) {
            h = g.mask_h;
            w = g.mask_w;
            break;
        }
        if (h) break;
    }
    if (h == 0) throw std::invalid_argument("evaluate: no ground-truth instances in any frame");

    MetricReport rep;
    std::map<int, detail::Acc> d, i, p, r;
    detail::Acc ad, ai, ap_, ar;
    detail::Acc sub_d[2], sub_i[2], sub_p[2], sub_r[2];  // [0]=ipsi, [1]=contra
    for (const auto& f : frames) {
        for (const auto& cell : detail::frame_cells(f, h, w)) {
            d[cell.class_id].add(cell.dice);
            i[cell.class_id].add(cell.iou);
            p[cell.class_id].add(cell.precision);
            r[cell.class_id].add(cell.recall);
            ad.add(cell.dice);
            ai.add(cell.iou);
            ap_.add(cell.precision);
            ar.add(cell.recall);
            const auto& ci = class_table().at(cell.class_id);
            // ACA_A2 belongs to neither subgroup (no laterality label).
            const int g = ci.ipsilateral ? 0 : (ci.contralateral ? 1 : -1);
            if (g >= 0) {
                sub_d[g].add(cell.dice);
                sub_i[g].add(cell.iou);
                sub_p[g].add(cell.precision);
                sub_r[g].add(cell.recall);
            }
        }
    }
    for (const auto& [cid, acc] : d) {
        rep.per_class[cid] = {acc.mean(), i[cid].mean(), p[cid].mean(), r[cid].mean()};
        rep.class_ap[cid] = average_precision(frames, cid, iou_thresh);
    }
    rep.aggregate = {ad.mean(), ai.mean(), ap_.mean(), ar.mean()};
    rep.map = mean_average_precision(frames, iou_thresh);
    auto row = [](const detail::Acc& a, const detail::Acc& b) {
        return SubgroupRow{a.mean(), b.mean(), a.mean() - b.mean()};
    };
    rep.subgroup["Dice"] = row(sub_d[0], sub_d[1]);
    rep.subgroup["IoU"] = row(sub_i[0], sub_i[1]);
    rep.subgroup["Precision"] = row(sub_p[0], sub_p[1]);
    rep.subgroup["Recall"] = row(sub_r[0], sub_r[1]);
    return rep;
}

/// Alias matching the subgroup-protocol naming: the per-instance results of
/// an evaluation set reduced to the Table-III-shaped rows.
inline MetricReport subgroup_report(const std::vector<EvalFrame>& frames,
                                    double iou_thresh = 0.5) {
    return evaluate(frames, iou_thresh);
}

}  // namespace aaw
