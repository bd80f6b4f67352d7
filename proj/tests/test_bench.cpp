// Copyright 2026 The aaw-seg Authors
// Licensed under the Apache License, Version 2.0;
// see http://www.apache.org/licenses/LICENSE-2.0 for details.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "aaw/report.hpp"
#include "oracles.hpp"

using namespace aaw;

TEST_CASE("flop counter: one conv layer by hand") {
    // 3x3, cin=cout=1, 8x8 input, pad 1: 64 outputs * 9 MACs * 2 = 1152
    auto x = tensor(1, 1, 8, 8, 1.0);
    auto w = tensor(1, 1, 3, 3, 0.1);
    FlopScope scope;
    conv2d(x, w, nullptr, 1, 1);
    CHECK(scope.total() == 1152);
}

TEST_CASE("flop counter follows the multiply-add convention: bias is free") {
    auto x = tensor(1, 2, 4, 4, 1.0);
    auto w = tensor(3, 2, 1, 1, 0.1);
    auto b = tensor(1, 3, 1, 1, 0.0);
    FlopScope without;
    conv2d(x, w, nullptr, 1, 0);
    const auto base = without.total();
    FlopScope with;
    conv2d(x, w, b, 1, 0);
    CHECK(base == 2ull * 1 * 1 * 2 * 3 * 16);
    CHECK(with.total() == base);
}

TEST_CASE("doubling the input side quadruples model flops") {
    SegModel m(Variant::baseline, 1);
    const double f64 = estimate_flops(m, 64);
    const double f128 = estimate_flops(m, 128);
    CHECK(f128 / f64 == doctest::Approx(4.0).epsilon(0.02));
}

TEST_CASE("model flops carry a per-layer stem oracle") {
    // The stem conv is the only op consuming the 3-channel input: its
    // contribution is exactly 2 * 8*3*3*3 * hw*hw on top of everything that
    // follows, so two models differing only in input channels would differ
    // by that margin. Here we check the stem contribution via a standalone
    // rebuild of the same conv.
    auto x = tensor(1, 3, 64, 64, 0.5);
    auto w = tensor(8, 3, 3, 3, 0.1);
    FlopScope scope;
    conv2d(x, w, nullptr, 1, 1);
    CHECK(scope.total() == 2ull * 8 * 3 * 3 * 3 * 64 * 64);
}

TEST_CASE("parameter counting by hand") {
    Rng rng(3);
    ParamStore ps;
    ConvLayer a(ps, rng, "a", 2, 4, 3, 1, /*bias=*/true);   // 4*2*9 + 4 = 76
    ConvLayer b(ps, rng, "b", 8, 8, 1, 1, /*bias=*/false);  // 64
    std::size_t total = 0;
    for (const auto& p : ps.params()) total += p->value->numel();
    CHECK(total == 76 + 64);
}

TEST_CASE("count_params covers every registered tensor once") {
    SegModel m(Variant::baseline, 1);
    std::size_t manual = 0;
    for (const auto& p : m.params()) manual += p->value->numel();
    CHECK(count_params(m) == manual);  // everything is trainable by default
    CHECK(count_params(m) > 100000);
    CHECK(count_params(m) < 1000000);
}

TEST_CASE("latency report satisfies fps = 1000/ms") {
    SegModel m(Variant::baseline, 1);
    auto [ms, fps] = measure_latency(m, 32, 1, 30);
    CHECK(ms > 0.0);
    CHECK(fps == 1000.0 / ms);
}

TEST_CASE("measure_latency rejects statistically useless run counts") {
    SegModel m(Variant::baseline, 1);
    CHECK_THROWS_AS(measure_latency(m, 32, 0, 10), std::invalid_argument);
}

TEST_CASE("published efficiency rows obey the fps identity to 3 decimals") {
    const struct {
        const char* name;
        double ms, fps;
    } rows[] = {
        {"Yolo 11 Baseline", 8.363, 119.574},
        {"Yolo 11 w/ WTConv", 10.871, 91.988},
        {"AA-YOLO", 10.984, 91.042},
        {"AA-YOLO w/ WTConv", 13.703, 72.977},
        {"AAW-YOLO (Proposed)", 14.199, 70.427},
    };
    for (const auto& r : rows) {
        CAPTURE(r.name);
        CHECK(round3(1000.0 / r.ms) == doctest::Approx(r.fps));
    }
}

TEST_CASE("bench report json has the efficiency table shape") {
    BenchReport r;
    r.variant = "aaw";
    r.parameters = 1234567;
    r.gflops = 2.5;
    r.inference_ms = 8.0;
    r.fps = 125.0;
    auto j = bench_report_json({r});
    CHECK(j["columns"] == nlohmann::json({"Model Variants", "Parameters (M)", "GFLOPS",
                                          "Inference Speed (ms)", "FPS"}));
    CHECK(j["flops_convention"] == "2*MACs");
    REQUIRE(j["rows"].size() == 1);
    CHECK(j["rows"][0]["Model Variants"] == "AAW-YOLO (Proposed)");
    CHECK(j["rows"][0]["Parameters (M)"] == doctest::Approx(1.235));
    CHECK(j["rows"][0]["FPS"] == doctest::Approx(125.0));
}

TEST_CASE("metric report json has the performance and subgroup table shapes") {
    MetricReport rep;
    rep.aggregate = {0.9, 0.82, 0.91, 0.89};
    rep.map = 0.75;
    rep.per_class[5] = {0.95, 0.9, 0.94, 0.96};
    rep.class_ap[5] = 0.8;
    rep.subgroup["Dice"] = {0.93, 0.85, 0.08};
    rep.subgroup["IoU"] = {0.88, 0.8, 0.08};
    rep.subgroup["Precision"] = {0.9, 0.86, 0.04};
    rep.subgroup["Recall"] = {0.92, 0.84, 0.08};
    auto j = metric_report_json(rep, Variant::aa);
    CHECK(j["performance"]["columns"] ==
          nlohmann::json({"Model Variant", "Dice", "IoU", "Precision", "Recall", "mAP"}));
    CHECK(j["performance"]["rows"][0]["Model Variant"] == "AA-YOLO");
    CHECK(j["performance"]["rows"][0]["mAP"] == doctest::Approx(0.75));
    CHECK(j["subgroup"]["rows"].size() == 4);
    CHECK(j["subgroup"]["rows"][0]["Difference"] == doctest::Approx(0.08));
    CHECK(j["per_class"][0]["Artery Segment"] == "Ipsilateral_ACA_A1");
}

TEST_CASE("the five display names match the published table") {
    CHECK(variant_display_name(Variant::baseline) == "Yolo 11 Baseline");
    CHECK(variant_display_name(Variant::baseline_wt) == "Yolo 11 w/ WTConv");
    CHECK(variant_display_name(Variant::aa) == "AA-YOLO");
    CHECK(variant_display_name(Variant::aa_wt) == "AA-YOLO w/ WTConv");
    CHECK(variant_display_name(Variant::aaw) == "AAW-YOLO (Proposed)");
}

TEST_CASE("flop estimates differ across variants in the expected direction") {
    SegModel base(Variant::baseline, 1), wt(Variant::baseline_wt, 1), aaw(Variant::aaw, 1);
    const double fb = estimate_flops(base, 64);
    const double fw = estimate_flops(wt, 64);
    const double fa = estimate_flops(aaw, 64);
    CHECK(fb > 0);
    CHECK(fw != fb);
    CHECK(fa != fb);
}
