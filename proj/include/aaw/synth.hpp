// Copyright 2026 The aaw-seg Authors
// Licensed under the Apache License, Version 2.0;
// see http://www.apache.org/licenses/LICENSE-2.0 for details.

#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "aaw/classes.hpp"
#include "aaw/instance.hpp"
#include "aaw/rng.hpp"
#include "aaw/tensor.hpp"

namespace aaw {

/// One synthetic Doppler-like frame with its ground-truth instances.
struct FrameSample {
    TensorPtr image;  // (1, 3, H, W), values on the 8-bit grid k/255
    std::vector<Instance> instances;
    std::uint64_t rng_seed = 0;
};

namespace synthdetail {

/// Geometry/appearance recipe per class. Contralateral vessels render
/// thinner and at lower contrast than their ipsilateral counterparts, so the
/// subgroup gap the evaluation protocol probes actually exists in the data.
struct Geometry {
    double cx, cy;           // canonical placement (normalized)
    double thick_lo, thick_hi;  // px at 128-px frames
    double amp_lo, amp_hi;      // color-channel contrast
    bool red;                   // red vs blue polarity
    double green;               // flat green-channel tint, a per-segment
                                // flow-signature stand-in that keeps classes
                                // separable by appearance, not just placement
};

inline Geometry geometry(int class_id) {
    switch (class_id) {
        case 0: return {0.50, 0.28, 14.0, 18.0, 0.42, 0.50, true, 0.88};   // ACA_A2
        case 1: return {0.65, 0.38, 11.0, 12.5, 0.26, 0.31, false, 0.18};  // C_ACA_A1
        case 2: return {0.75, 0.52, 13.5, 15.0, 0.26, 0.31, false, 0.28};  // C_MCA_M1
        case 3: return {0.62, 0.66, 11.0, 12.5, 0.36, 0.42, false, 0.38};  // C_PCA_P1
        case 4: return {0.70, 0.80, 13.5, 15.0, 0.36, 0.42, false, 0.48};  // C_PCA_P2
        case 5: return {0.35, 0.38, 16.0, 18.5, 0.52, 0.58, true, 0.58};   // I_ACA_A1
        case 6: return {0.25, 0.52, 20.0, 22.5, 0.52, 0.58, true, 0.68};   // I_MCA_M1
        case 7: return {0.38, 0.66, 16.0, 18.5, 0.72, 0.78, true, 0.78};   // I_PCA_P1
        case 8: return {0.30, 0.80, 20.0, 22.5, 0.72, 0.78, true, 0.98};   // I_PCA_P2
        default: throw std::invalid_argument("geometry: bad class id");
    }
}

inline int sample_class(Rng& rng) {
    const int total = total_sampling_weight();
    int r = static_cast<int>(rng.below(static_cast<std::uint64_t>(total)));
    for (const auto& ci : class_table()) {
        r -= ci.sampling_weight;
        if (r < 0) return ci.id;
    }
    return 8;
}

/// Rasterizes one curved ribbon (quadratic Bezier centerline, circular
/// cross-section, intensity ramp along the curve) into the image and a mask.
inline Instance render_ribbon(std::vector<double>& img, int H, int W, int class_id, Rng& rng) {
    const Geometry g = geometry(class_id);
    const double s = static_cast<double>(std::min(H, W)) / 128.0;
    const double cx = (g.cx + rng.uniform(-0.08, 0.08)) * W;
    const double cy = (g.cy + rng.uniform(-0.08, 0.08)) * H;
    const double len = rng.uniform(0.14, 0.28) * std::min(H, W);
    const double ang = rng.uniform(0.0, 6.283185307179586);
    const double curve = rng.uniform(-0.35, 0.35) * len;
    const double thick = rng.uniform(g.thick_lo, g.thick_hi) * s;
    const double amp = rng.uniform(g.amp_lo, g.amp_hi);

    const double dx = std::cos(ang), dy = std::sin(ang);
    const double p0x = cx - dx * len / 2, p0y = cy - dy * len / 2;
    const double p2x = cx + dx * len / 2, p2y = cy + dy * len / 2;
    const double p1x = cx - dy * curve, p1y = cy + dx * curve;

    Instance inst;
    inst.class_id = class_id;
    inst.score = 1.0;
    inst.mask_h = H;
    inst.mask_w = W;
    inst.mask.assign(static_cast<std::size_t>(H) * W, 0);
    const int chan = g.red ? 0 : 2;
    const double r = thick / 2.0;
    const int steps = std::max(16, static_cast<int>(len * 2));
    for (int step = 0; step <= steps; ++step) {
        const double t = static_cast<double>(step) / steps;
        const double u = 1.0 - t;
        const double px = u * u * p0x + 2 * u * t * p1x + t * t * p2x;
        const double py = u * u * p0y + 2 * u * t * p1y + t * t * p2y;
        const double boost = amp * (0.7 + 0.3 * t);  // flow-gradient along vessel
        const int y0 = std::max(0, static_cast<int>(std::floor(py - r)));
        const int y1 = std::min(H - 1, static_cast<int>(std::ceil(py + r)));
        const int x0 = std::max(0, static_cast<int>(std::floor(px - r)));
        const int x1 = std::min(W - 1, static_cast<int>(std::ceil(px + r)));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double ddx = x - px, ddy = y - py;
                if (ddx * ddx + ddy * ddy > r * r) continue;
                const std::size_t i = static_cast<std::size_t>(y) * W + x;
                inst.mask[i] = 1;
                double& pix = img[static_cast<std::size_t>(chan) * H * W + i];
                pix = std::min(1.0, std::max(pix, 0.18 + boost));
                img[static_cast<std::size_t>(H) * W + i] = g.green;
            }
    }
    // Tight box from rendered pixels (half-open on the far side).
    int bx0 = W, by0 = H, bx1 = -1, by1 = -1;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            if (inst.mask[static_cast<std::size_t>(y) * W + x]) {
                bx0 = std::min(bx0, x);
                by0 = std::min(by0, y);
                bx1 = std::max(bx1, x);
                by1 = std::max(by1, y);
            }
    if (bx1 < 0) return inst;  // empty render (off-frame); caller retries
    inst.x1 = bx0;
    inst.y1 = by0;
    inst.x2 = bx1 + 1;
    inst.y2 = by1 + 1;
    return inst;
}

inline double instance_pair_iou(const Instance& a, const Instance& b) {
    return mask_iou(a, b);
}

}  // namespace synthdetail

/// Deterministic frame generator. Same seed, same bytes. Frame i derives its
/// own RNG stream from the root seed, so frames are independent.
inline std::vector<FrameSample> generate(int n_frames, int hw, std::uint64_t rng_seed) {
    if (n_frames < 1) throw std::invalid_argument("generate: n_frames must be >= 1");
    if (hw < 16 || hw % 16 != 0)
        throw std::invalid_argument("generate: frame size must be a positive multiple of 16, got " +
                                    std::to_string(hw));
    const int H = hw, W = hw;
    Rng root = Rng::seeded(rng_seed);
    std::vector<FrameSample> out;
    out.reserve(n_frames);
    for (int f = 0; f < n_frames; ++f) {
        Rng rng = root.fork(static_cast<std::uint64_t>(f) + 1);
        FrameSample fs;
        fs.rng_seed = rng_seed;
        std::vector<double> img(static_cast<std::size_t>(3) * H * W, 0.0);

        // Low-frequency gray field under multiplicative speckle.
        double a[3], fx[3], fy[3], ph[3];
        for (int t = 0; t < 3; ++t) {
            a[t] = rng.uniform(0.02, 0.08);
            fx[t] = rng.uniform(0.5, 2.5);
            fy[t] = rng.uniform(0.5, 2.5);
            ph[t] = rng.uniform(0.0, 6.283185307179586);
        }
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double base = 0.30;
                for (int t = 0; t < 3; ++t)
                    base += a[t] * std::sin(6.283185307179586 *
                                                (fx[t] * x / W + fy[t] * y / H) +
                                            ph[t]);
                const double speckle = std::exp(0.15 * rng.normal());
                const double v = std::clamp(base * speckle, 0.0, 1.0);
                for (int ch = 0; ch < 3; ++ch)
                    img[static_cast<std::size_t>(ch) * H * W + static_cast<std::size_t>(y) * W + x] = v * (ch == 1 ? 0.9 : 0.8);
            }

        const int want = 2 + static_cast<int>(rng.below(4));  // 2..5 instances
        for (int k = 0; k < want; ++k) {
            const int cid = synthdetail::sample_class(rng);
            for (int attempt = 0; attempt < 10; ++attempt) {
                Instance inst = synthdetail::render_ribbon(img, H, W, cid, rng);
                if (inst.mask_pixels() == 0) continue;
                bool ok = true;
                for (const auto& prev : fs.instances)
                    if (prev.class_id == cid && synthdetail::instance_pair_iou(prev, inst) > 0.20) {
                        ok = false;
                        break;
                    }
                if (ok) {
                    fs.instances.push_back(std::move(inst));
                    break;
                }
            }
        }
        // Per-frame instance count must be >= 1.
        while (fs.instances.empty()) {
            Instance inst = synthdetail::render_ribbon(img, H, W, synthdetail::sample_class(rng), rng);
            if (inst.mask_pixels() > 0) fs.instances.push_back(std::move(inst));
        }

        fs.image = tensor(1, 3, H, W);
        for (std::size_t i = 0; i < img.size(); ++i)
            fs.image->data[i] = std::round(std::clamp(img[i], 0.0, 1.0) * 255.0) / 255.0;
        out.push_back(std::move(fs));
    }
    return out;
}

// ---------------------------------------------------------------------------
// on-disk dataset: manifest.txt + frames/NNNN.ppm + masks/NNNN_K.pgm
// ---------------------------------------------------------------------------

namespace synthdetail {

inline std::string frame_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d", i);
    return buf;
}

inline void write_ppm(const std::string& path, const Tensor4& img) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "P6\n" << img.w << " " << img.h << "\n255\n";
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int ch = 0; ch < 3; ++ch)
                f.put(static_cast<char>(
                    static_cast<int>(std::round(img.at(0, ch, y, x) * 255.0))));
}

inline TensorPtr read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::string magic;
    int w, h, maxv;
    f >> magic >> w >> h >> maxv;
    if (magic != "P6" || maxv != 255)
        throw std::runtime_error(path + ": not a P6/255 portable pixmap");
    f.get();
    auto img = tensor(1, 3, h, w);
    std::vector<char> buf(static_cast<std::size_t>(3) * h * w);
    f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw std::runtime_error(path + ": truncated pixel data");
    std::size_t i = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < 3; ++ch)
                img->at(0, ch, y, x) =
                    static_cast<double>(static_cast<unsigned char>(buf[i++])) / 255.0;
    return img;
}

inline void write_pgm_mask(const std::string& path, const Instance& inst) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "P5\n" << inst.mask_w << " " << inst.mask_h << "\n255\n";
    // Foreground carries class_id+1; 0 is background.
    const char fg = static_cast<char>(inst.class_id + 1);
    for (auto v : inst.mask) f.put(v ? fg : 0);
}

inline void read_pgm_mask(const std::string& path, Instance& inst) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read mask file " + path);
    std::string magic;
    int w, h, maxv;
    f >> magic >> w >> h >> maxv;
    if (magic != "P5") throw std::runtime_error(path + ": not a P5 portable graymap");
    f.get();
    inst.mask_h = h;
    inst.mask_w = w;
    inst.mask.assign(static_cast<std::size_t>(h) * w, 0);
    std::vector<char> buf(inst.mask.size());
    f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw std::runtime_error(path + ": truncated mask data");
    for (std::size_t i = 0; i < buf.size(); ++i) inst.mask[i] = buf[i] ? 1 : 0;
}

}  // namespace synthdetail

inline void write_dataset(const std::vector<FrameSample>& samples, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "frames");
    fs::create_directories(fs::path(dir) / "masks");
    std::ofstream man((fs::path(dir) / "manifest.txt").string());
    if (!man) throw std::runtime_error("cannot write manifest in " + dir);
    for (int i = 0; i < static_cast<int>(samples.size()); ++i) {
        const auto& s = samples[i];
        const std::string fn = synthdetail::frame_name(i);
        synthdetail::write_ppm((fs::path(dir) / "frames" / (fn + ".ppm")).string(), *s.image);
        for (int k = 0; k < static_cast<int>(s.instances.size()); ++k) {
            const auto& inst = s.instances[k];
            const std::string mp = "masks/" + fn + "_" + std::to_string(k) + ".pgm";
            synthdetail::write_pgm_mask((fs::path(dir) / mp).string(), inst);
            man << i << " " << inst.class_id << " " << static_cast<int>(inst.x1) << " "
                << static_cast<int>(inst.y1) << " " << static_cast<int>(inst.x2) << " "
                << static_cast<int>(inst.y2) << " " << mp << "\n";
        }
    }
}

inline std::vector<FrameSample> read_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    const std::string man_path = (fs::path(dir) / "manifest.txt").string();
    std::ifstream man(man_path);
    if (!man) throw std::runtime_error("cannot open manifest: " + man_path);
    std::map<int, std::vector<Instance>> by_frame;
    std::string line;
    int lineno = 0;
    while (std::getline(man, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        int frame_id, class_id, x1, y1, x2, y2;
        std::string mask_path;
        if (!(ss >> frame_id >> class_id >> x1 >> y1 >> x2 >> y2 >> mask_path))
            throw std::runtime_error(man_path + ":" + std::to_string(lineno) +
                                     ": malformed manifest line");
        if (class_id < 0 || class_id > 8)
            throw std::runtime_error(man_path + ":" + std::to_string(lineno) +
                                     ": class id out of range: " + std::to_string(class_id));
        Instance inst;
        inst.class_id = class_id;
        inst.score = 1.0;
        inst.x1 = x1;
        inst.y1 = y1;
        inst.x2 = x2;
        inst.y2 = y2;
        synthdetail::read_pgm_mask((fs::path(dir) / mask_path).string(), inst);
        by_frame[frame_id].push_back(std::move(inst));
    }
    if (by_frame.empty()) throw std::runtime_error(man_path + ": no instances listed");
    std::vector<FrameSample> out;
    for (auto& [fid, insts] : by_frame) {
        FrameSample s;
        s.image = synthdetail::read_ppm(
            (fs::path(dir) / "frames" / (synthdetail::frame_name(fid) + ".ppm")).string());
        s.instances = std::move(insts);
        out.push_back(std::move(s));
    }
    return out;
}

/// Seeded 70/15/15 frame split.
struct DataSplit {
    std::vector<int> train, val, test;
};

inline DataSplit split_indices(int n, std::uint64_t seed) {
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    Rng rng = Rng::seeded(seed ^ 0x5eedull);
    for (int i = n - 1; i > 0; --i)
        std::swap(idx[i], idx[rng.below(static_cast<std::uint64_t>(i + 1))]);
    DataSplit sp;
    const int n_train = static_cast<int>(n * 0.70);
    const int n_val = static_cast<int>(n * 0.15);
    for (int i = 0; i < n; ++i) {
        if (i < n_train) sp.train.push_back(idx[i]);
        else if (i < n_train + n_val) sp.val.push_back(idx[i]);
        else sp.test.push_back(idx[i]);
    }
    return sp;
}

}  // namespace aaw
