// Copyright 2026 The aaw-seg Authors
// Licensed under the Apache License, Version 2.0;
// see http://www.apache.org/licenses/LICENSE-2.0 for details.

#pragma once

#include <chrono>

#include "aaw/model.hpp"
#include "aaw/rng.hpp"

namespace aaw {

/// Table-IV-shaped efficiency row. fps is definitionally 1000/inference_ms.
struct BenchReport {
    std::string variant;
    std::size_t parameters = 0;
    double gflops = 0.0;
    double inference_ms = 0.0;
    double fps = 0.0;
};

inline std::size_t count_params(const SegModel& model) {
    std::size_t s = 0;
    for (const auto& p : model.params())
        if (p->trainable) s += p->value->numel();
    return s;
}

/// Forward FLOPs at the given input size, 2*MACs convention, summed over
/// the recorded forward graph (convolutions, wavelet transforms as their
/// underlying depthwise convs, attention aggregation, mask assembly).
inline double estimate_flops(const SegModel& model, int hw) {
    if (hw % 16 != 0)
        throw std::invalid_argument("estimate_flops: input size must be divisible by 16");
    auto x = tensor(1, 3, hw, hw, 0.0);
    FlopScope scope;
    model.forward(x);
    return static_cast<double>(scope.total());
}

/// Wall-clock mean per-frame latency over `runs` measured forwards after
/// `warmup` unmeasured ones. Single-threaded by construction.
inline std::pair<double, double> measure_latency(const SegModel& model, int hw, int warmup,
                                                 int runs) {
    if (runs < 30) throw std::invalid_argument("measure_latency: need at least 30 runs");
    Rng rng = Rng::seeded(7);
    auto x = tensor(1, 3, hw, hw);
    for (auto& v : x->data) v = rng.uniform();
    for (int i = 0; i < warmup; ++i) model.forward(x);
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < runs; ++i) model.forward(x);
    const auto t1 = std::chrono::steady_clock::now();
    const double ms =
        std::chrono::duration<double, std::milli>(t1 - t0).count() / static_cast<double>(runs);
    return {ms, 1000.0 / ms};
}

inline BenchReport bench_variant(const SegModel& model, int hw, int warmup, int runs) {
    BenchReport r;
    r.variant = to_string(model.variant());
    r.parameters = count_params(model);
    r.gflops = estimate_flops(model, hw) / 1e9;
    auto [ms, fps] = measure_latency(model, hw, warmup, runs);
    r.inference_ms = ms;
    r.fps = fps;
    return r;
}

}  // namespace aaw
