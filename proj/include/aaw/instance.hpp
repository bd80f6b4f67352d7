// Copyright 2026 The aaw-seg Authors
// Licensed under the Apache License, Version 2.0;
// see http://www.apache.org/licenses/LICENSE-2.0 for details.

#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace aaw {

/// One predicted or ground-truth artery instance: class, confidence, box in
/// pixel coordinates (x1<x2, y1<y2), and a full-frame binary mask.
struct Instance {
    int class_id = 0;
    double score = 1.0;
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
    int mask_h = 0, mask_w = 0;
    std::vector<std::uint8_t> mask;  // mask_h * mask_w, 0/1

    double box_area() const { return std::max(0.0, x2 - x1) * std::max(0.0, y2 - y1); }

    std::size_t mask_pixels() const {
        std::size_t s = 0;
        for (auto v : mask) s += v ? 1 : 0;
        return s;
    }
};

inline double box_iou(const Instance& a, const Instance& b) {
    const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    const double inter = ix * iy;
    const double uni = a.box_area() + b.box_area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

inline double mask_iou(const Instance& a, const Instance& b) {
    if (a.mask_h != b.mask_h || a.mask_w != b.mask_w)
        throw std::invalid_argument("mask_iou: mask dimensions differ");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.mask.size(); ++i) {
        const bool av = a.mask[i] != 0, bv = b.mask[i] != 0;
        inter += (av && bv) ? 1 : 0;
        uni += (av || bv) ? 1 : 0;
    }
    return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

}  // namespace aaw
