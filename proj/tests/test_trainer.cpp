// Copyright 2026 The aaw-seg Authors
// Licensed under the Apache License, Version 2.0;
// see http://www.apache.org/licenses/LICENSE-2.0 for details.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "aaw/trainer.hpp"
#include "oracles.hpp"

using namespace aaw;

namespace {

Instance box_inst(int cls, int h, int w, double x1, double y1, double x2, double y2) {
    Instance i;
    i.class_id = cls;
    i.mask_h = h;
    i.mask_w = w;
    i.mask.assign(static_cast<std::size_t>(h) * w, 0);
    for (int y = static_cast<int>(y1); y < static_cast<int>(y2); ++y)
        for (int x = static_cast<int>(x1); x < static_cast<int>(x2); ++x)
            i.mask[static_cast<std::size_t>(y) * w + x] = 1;
    i.x1 = x1;
    i.y1 = y1;
    i.x2 = x2;
    i.y2 = y2;
    return i;
}

}  // namespace

TEST_CASE("target assignment picks the scale and cell by box geometry") {
    // 20x20 box centered in a 64x64 frame: side/8 = 2.5 exactly, side/16 =
    // 1.25, so stride 8 wins; center (32,32) lands in cell (4,4).
    auto g = box_inst(3, 64, 64, 22, 22, 42, 42);
    auto t = assign_targets({g}, 64, 64);
    REQUIRE(t.size() == 1);
    CHECK(t[0].scale == 0);
    CHECK(t[0].ci == 4);
    CHECK(t[0].cj == 4);
    CHECK(t[0].gt_index == 0);

    // 60x60 box: side/8 = 7.5 (off by 5), side/16 = 3.75 (off by 1.25)
    auto big = box_inst(1, 64, 64, 2, 2, 62, 62);
    auto tb = assign_targets({big}, 64, 64);
    REQUIRE(tb.size() == 1);
    CHECK(tb[0].scale == 1);
}

TEST_CASE("the scale preference flips at the crossover box size") {
    // |side/8 - 2.5| == |side/16 - 2.5| at side = 80/3; just below the
    // finer stride must win, just above the coarser one.
    auto below = box_inst(0, 64, 64, 10, 10, 36, 36);  // side 26
    auto above = box_inst(0, 64, 64, 10, 10, 38, 38);  // side 28
    auto tb = assign_targets({below}, 64, 64);
    auto ta = assign_targets({above}, 64, 64);
    REQUIRE(tb.size() == 1);
    REQUIRE(ta.size() == 1);
    CHECK(tb[0].scale == 0);
    CHECK(ta[0].scale == 1);
}

TEST_CASE("cell conflicts resolve to the larger box, then the lower class id") {
    // two boxes with the same center cell at stride 8
    auto small = box_inst(1, 64, 64, 28, 28, 38, 38);
    auto large = box_inst(7, 64, 64, 20, 22, 44, 44);
    auto t = assign_targets({small, large}, 64, 64);
    REQUIRE(t.size() == 1);
    CHECK(t[0].gt_index == 1);  // larger area wins

    auto twin = box_inst(3, 64, 64, 28, 28, 38, 38);  // same area as `small`
    auto t2 = assign_targets({small, twin}, 64, 64);
    REQUIRE(t2.size() == 1);
    CHECK(t2[0].gt_index == 0);  // class 1 beats class 3
}

TEST_CASE("distinct cells keep both targets") {
    auto a = box_inst(1, 64, 64, 4, 4, 24, 24);
    auto b = box_inst(2, 64, 64, 40, 40, 60, 60);
    auto t = assign_targets({a, b}, 64, 64);
    CHECK(t.size() == 2);
}

TEST_CASE("loss is non-negative and the breakdown adds up") {
    SegModel m(Variant::baseline, 3);
    auto samples = generate(2, 64, 5);
    for (const auto& s : samples) {
        auto raw = m.forward(s.image);
        auto lb = loss(raw, s.instances, 0, 64, 64);
        CHECK(lb.cls >= 0.0);
        CHECK(lb.mask >= 0.0);
        CHECK(lb.total >= 0.0);
        CHECK(lb.total == doctest::Approx(lb.lambda_cls * lb.cls + lb.lambda_box * lb.box +
                                          lb.lambda_mask * lb.mask));
    }
}

TEST_CASE("hand-built perfect raw outputs score a near-zero loss") {
    // One 20x20 GT at (24,24)-(44,44): center (34,34) lands in cell (4,4) at
    // stride 8 with a representable offset, and the block-aligned box makes
    // every 4x4 mask block fully covered or fully empty, so +/-40 logits can
    // match the fractional-coverage targets exactly.
    const int H = 64, W = 64;
    auto g = box_inst(2, H, W, 24, 24, 44, 44);
    RawOutputs raw;
    raw.det8 = tensor(1, 21, 8, 8, -40.0);
    raw.det16 = tensor(1, 21, 4, 4, -40.0);
    raw.protos = tensor(1, 8, 16, 16, 0.0);
    raw.det8->at(0, 2, 4, 4) = 40.0;  // confident class hit
    // exact box: cx=34 needs sigmoid(tx) = 34/8-4 = 0.25 -> tx = ln(1/3);
    // bw=20 needs tanh(tw) = ln(20/8)/3
    const double tx = std::log(1.0 / 3.0);
    raw.det8->at(0, kNumClasses + 0, 4, 4) = tx;
    raw.det8->at(0, kNumClasses + 1, 4, 4) = tx;
    const double tw = std::atanh(std::log(20.0 / 8.0) / 3.0);
    raw.det8->at(0, kNumClasses + 2, 4, 4) = tw;
    raw.det8->at(0, kNumClasses + 3, 4, 4) = tw;
    // mask: coefficient 0 = 1 and prototype 0 carries +/-40 logits matching
    // the coverage (0 or 1 here) of each 4x4 block, the rest zero
    raw.det8->at(0, kNumClasses + kBoxChannels + 0, 4, 4) = 1.0;
    auto covered = [](int p) { return p * 4 >= 24 && p * 4 + 4 <= 44; };
    for (int py = 0; py < 16; ++py)
        for (int px = 0; px < 16; ++px)
            raw.protos->at(0, 0, py, px) = (covered(px) && covered(py)) ? 40.0 : -40.0;
    auto lb = loss(raw, {g}, 0, H, W);
    CHECK(lb.cls < 1e-3);
    CHECK(lb.box < 1e-6);
    CHECK(lb.mask < 1e-6);
    CHECK(lb.total < 1e-3);
}

TEST_CASE("loss gradients agree with central differences through the model") {
    SegModel m(Variant::aaw, 7);
    auto samples = generate(1, 32, 11);
    const auto& s = samples[0];
    Rng rng(13);
    auto f = [&] {
        auto raw = m.forward(s.image);
        return loss(raw, s.instances, 0, 32, 32).total_tensor;
    };
    // probe a few parameters along distinct paths
    std::vector<ParamPtr> probes;
    for (const auto& p : m.params())
        if (p->id == "stem.conv.w" || p->id == "stage3.block.u0.wq" ||
            p->id == "proto.out.w" || p->id == "head8.out.b" ||
            p->id == "stage1.block.wt.base")
            probes.push_back(p);
    REQUIRE(probes.size() == 5);
    for (const auto& p : probes) {
        CAPTURE(p->id);
        m.detach_params();
        CHECK(oracles::finite_diff_check(f, p->value, rng, 4) < 2e-3);
        m.detach_params();
    }
}

TEST_CASE("lr zero leaves every parameter bit-identical") {
    SegModel m(Variant::baseline, 9);
    auto samples = generate(2, 64, 17);
    std::vector<std::vector<double>> before;
    for (const auto& p : m.params()) before.push_back(p->value->data);
    train(m, samples, 3, 0.0, 21);
    for (std::size_t i = 0; i < m.params().size(); ++i)
        CHECK(m.params()[i]->value->data == before[i]);
}

TEST_CASE("training is deterministic: same seed, same trace, same weights") {
    auto samples = generate(2, 64, 19);
    SegModel a(Variant::baseline, 5), b(Variant::baseline, 5);
    auto ra = train(a, samples, 5, 1e-3, 23);
    auto rb = train(b, samples, 5, 1e-3, 23);
    REQUIRE(ra.trace.size() == rb.trace.size());
    for (std::size_t i = 0; i < ra.trace.size(); ++i) {
        CHECK(ra.trace[i].total == rb.trace[i].total);
        CHECK(ra.trace[i].cls == rb.trace[i].cls);
    }
    for (std::size_t i = 0; i < a.params().size(); ++i)
        CHECK(a.params()[i]->value->data == b.params()[i]->value->data);
}

TEST_CASE("a short run reduces the loss on a tiny fixed set") {
    auto samples = generate(2, 64, 29);
    SegModel m(Variant::baseline, 5);
    auto res = train(m, samples, 200, 1e-2, 31);
    double first = 0, last = 0;
    for (int i = 0; i < 20; ++i) {
        first += res.trace[i].total;
        last += res.trace[res.trace.size() - 20 + i].total;
    }
    CHECK(last < 0.9 * first);
}

TEST_CASE("the periodic callback fires on schedule") {
    auto samples = generate(1, 64, 37);
    SegModel m(Variant::baseline, 5);
    std::vector<int> hits;
    train(m, samples, 7, 1e-4, 41, [&](int step) { hits.push_back(step); }, 3);
    CHECK(hits == std::vector<int>{3, 6});
}

TEST_CASE("train validates its arguments") {
    SegModel m(Variant::baseline, 5);
    auto samples = generate(1, 64, 43);
    CHECK_THROWS_AS(train(m, samples, 0, 1e-3, 1), std::invalid_argument);
    CHECK_THROWS_AS(train(m, {}, 5, 1e-3, 1), std::invalid_argument);
}
