// Copyright 2026 The aaw-seg Authors
// Licensed under the Apache License, Version 2.0;
// see http://www.apache.org/licenses/LICENSE-2.0 for details.

#pragma once

#include <json.hpp>

#include "aaw/bench.hpp"
#include "aaw/metrics.hpp"

namespace aaw {

/// Published display names for the five variants.
inline std::string variant_display_name(Variant v) {
    switch (v) {
        case Variant::baseline: return "Yolo 11 Baseline";
        case Variant::baseline_wt: return "Yolo 11 w/ WTConv";
        case Variant::aa: return "AA-YOLO";
        case Variant::aa_wt: return "AA-YOLO w/ WTConv";
        case Variant::aaw: return "AAW-YOLO (Proposed)";
    }
    return "?";
}

inline double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

/// Segmentation report in the shape of the performance and subgroup tables.
inline nlohmann::json metric_report_json(const MetricReport& rep, Variant variant) {
    nlohmann::json j;
    j["performance"]["columns"] = {"Model Variant", "Dice", "IoU", "Precision", "Recall", "mAP"};
    nlohmann::json row;
    row["Model Variant"] = variant_display_name(variant);
    row["Dice"] = round3(rep.aggregate.dice);
    row["IoU"] = round3(rep.aggregate.iou);
    row["Precision"] = round3(rep.aggregate.precision);
    row["Recall"] = round3(rep.aggregate.recall);
    if (rep.map) row["mAP"] = round3(*rep.map);
    else row["mAP"] = nullptr;
    j["performance"]["rows"] = {row};

    nlohmann::json pc = nlohmann::json::array();
    for (const auto& [cid, sc] : rep.per_class) {
        nlohmann::json r;
        r["Artery Segment"] = class_name(cid);
        r["Dice"] = round3(sc.dice);
        r["IoU"] = round3(sc.iou);
        r["Precision"] = round3(sc.precision);
        r["Recall"] = round3(sc.recall);
        const auto& ap = rep.class_ap.at(cid);
        if (ap) r["AP"] = round3(*ap);
        else r["AP"] = nullptr;
        pc.push_back(r);
    }
    j["per_class"] = pc;

    j["subgroup"]["columns"] = {"Model Variant", "Metric", "Ipsilateral", "Contralateral",
                                "Difference"};
    nlohmann::json sg = nlohmann::json::array();
    for (const char* m : {"Dice", "IoU", "Precision", "Recall"}) {
        const auto& r = rep.subgroup.at(m);
        sg.push_back({{"Model Variant", variant_display_name(variant)},
                      {"Metric", m},
                      {"Ipsilateral", round3(r.ipsilateral)},
                      {"Contralateral", round3(r.contralateral)},
                      {"Difference", round3(r.difference)}});
    }
    j["subgroup"]["rows"] = sg;
    return j;
}

/// Efficiency report in the shape of the computational-comparison table.
/// GFLOPS uses the 2*MACs convention (noted in the report).
inline nlohmann::json bench_report_json(const std::vector<BenchReport>& rows) {
    nlohmann::json j;
    j["columns"] = {"Model Variants", "Parameters (M)", "GFLOPS", "Inference Speed (ms)", "FPS"};
    j["flops_convention"] = "2*MACs";
    nlohmann::json rs = nlohmann::json::array();
    for (const auto& r : rows) {
        rs.push_back({{"Model Variants", variant_display_name(variant_from_name(r.variant))},
                      {"Parameters (M)", round3(static_cast<double>(r.parameters) / 1e6)},
                      {"GFLOPS", r.gflops},
                      {"Inference Speed (ms)", round3(r.inference_ms)},
                      {"FPS", round3(r.fps)}});
    }
    j["rows"] = rs;
    return j;
}

}  // namespace aaw
