// Copyright 2026 The aaw-seg Authors
// Licensed under the Apache License, Version 2.0;
// see http://www.apache.org/licenses/LICENSE-2.0 for details.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "aaw/synth.hpp"

using namespace aaw;

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir(const char* tag) : path(fs::temp_directory_path() / tag) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("generation is deterministic: same seed, same bytes") {
    auto a = generate(4, 64, 123);
    auto b = generate(4, 64, 123);
    REQUIRE(a.size() == b.size());
    for (std::size_t f = 0; f < a.size(); ++f) {
        CHECK(a[f].image->data == b[f].image->data);
        REQUIRE(a[f].instances.size() == b[f].instances.size());
        for (std::size_t k = 0; k < a[f].instances.size(); ++k) {
            CHECK(a[f].instances[k].class_id == b[f].instances[k].class_id);
            CHECK(a[f].instances[k].mask == b[f].instances[k].mask);
        }
    }
    auto c = generate(4, 64, 124);
    CHECK(a[0].image->data != c[0].image->data);
}

TEST_CASE("a frame prefix is stable when more frames are requested") {
    auto a = generate(3, 64, 7);
    auto b = generate(6, 64, 7);
    for (std::size_t f = 0; f < a.size(); ++f)
        CHECK(a[f].image->data == b[f].image->data);
}

TEST_CASE("frames carry 1 to 5 instances with sane geometry") {
    auto samples = generate(20, 64, 11);
    for (const auto& s : samples) {
        CHECK(s.instances.size() >= 1);
        CHECK(s.instances.size() <= 5);
        for (const auto& inst : s.instances) {
            CHECK(inst.class_id >= 0);
            CHECK(inst.class_id <= 8);
            CHECK(inst.mask_pixels() > 0);
            CHECK(inst.x1 < inst.x2);
            CHECK(inst.y1 < inst.y2);
            // tight box: every on pixel inside, and the box rows/cols touched
            int minx = 64, miny = 64, maxx = -1, maxy = -1;
            for (int y = 0; y < 64; ++y)
                for (int x = 0; x < 64; ++x)
                    if (inst.mask[static_cast<std::size_t>(y) * 64 + x]) {
                        minx = std::min(minx, x);
                        maxx = std::max(maxx, x);
                        miny = std::min(miny, y);
                        maxy = std::max(maxy, y);
                    }
            CHECK(inst.x1 == minx);
            CHECK(inst.y1 == miny);
            CHECK(inst.x2 == maxx + 1);
            CHECK(inst.y2 == maxy + 1);
        }
    }
}

TEST_CASE("image values live on the 8-bit grid in [0,1]") {
    auto samples = generate(3, 64, 17);
    for (const auto& s : samples)
        for (double v : s.image->data) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            const double k = v * 255.0;
            CHECK(std::abs(k - std::round(k)) < 1e-9);
        }
}

TEST_CASE("class frequencies track the annotation-count weights") {
    auto samples = generate(2500, 64, 29);
    std::array<int, 9> counts{};
    int total = 0;
    for (const auto& s : samples)
        for (const auto& inst : s.instances) {
            ++counts[inst.class_id];
            ++total;
        }
    REQUIRE(total > 5000);
    const double wt = total_sampling_weight();
    for (const auto& ci : class_table()) {
        const double want = ci.sampling_weight / wt;
        const double got = static_cast<double>(counts[ci.id]) / total;
        CAPTURE(ci.name);
        CHECK(std::abs(got - want) < 0.02);
    }
}

TEST_CASE("contralateral vessels render thinner and dimmer") {
    auto samples = generate(300, 64, 31);
    double ipsi_px = 0, contra_px = 0, ipsi_amp = 0, contra_amp = 0;
    int n_ipsi = 0, n_contra = 0;
    for (const auto& s : samples)
        for (const auto& inst : s.instances) {
            const auto& ci = class_table()[inst.class_id];
            if (!ci.ipsilateral && !ci.contralateral) continue;
            // mean peak intensity of the vessel's own color channel
            const int chan = ci.ipsilateral ? 0 : 2;
            double peak = 0.0;
            for (int y = 0; y < 64; ++y)
                for (int x = 0; x < 64; ++x)
                    if (inst.mask[static_cast<std::size_t>(y) * 64 + x])
                        peak = std::max(peak, s.image->at(0, chan, y, x));
            const double px = static_cast<double>(inst.mask_pixels());
            if (ci.ipsilateral) {
                ipsi_px += px;
                ipsi_amp += peak;
                ++n_ipsi;
            } else {
                contra_px += px;
                contra_amp += peak;
                ++n_contra;
            }
        }
    REQUIRE(n_ipsi > 30);
    REQUIRE(n_contra > 30);
    CHECK(ipsi_px / n_ipsi > 1.3 * contra_px / n_contra);
    CHECK(ipsi_amp / n_ipsi > contra_amp / n_contra);
}

TEST_CASE("same-class instances in a frame overlap at most 20 percent") {
    auto samples = generate(200, 64, 37);
    for (const auto& s : samples)
        for (std::size_t i = 0; i < s.instances.size(); ++i)
            for (std::size_t j = i + 1; j < s.instances.size(); ++j)
                if (s.instances[i].class_id == s.instances[j].class_id)
                    CHECK(mask_iou(s.instances[i], s.instances[j]) <= 0.20);
}

TEST_CASE("generate validates its arguments") {
    CHECK_THROWS_AS(generate(0, 64, 1), std::invalid_argument);
    CHECK_THROWS_AS(generate(2, 60, 1), std::invalid_argument);
    CHECK_THROWS_AS(generate(2, 0, 1), std::invalid_argument);
}

TEST_CASE("dataset round trip is lossless") {
    TempDir dir("aaw_synth_rt");
    auto samples = generate(5, 64, 41);
    write_dataset(samples, dir.path.string());
    auto back = read_dataset(dir.path.string());
    REQUIRE(back.size() == samples.size());
    for (std::size_t f = 0; f < samples.size(); ++f) {
        CHECK(back[f].image->data == samples[f].image->data);
        REQUIRE(back[f].instances.size() == samples[f].instances.size());
        for (std::size_t k = 0; k < samples[f].instances.size(); ++k) {
            const auto& a = samples[f].instances[k];
            const auto& b = back[f].instances[k];
            CHECK(a.class_id == b.class_id);
            CHECK(a.mask == b.mask);
            CHECK(a.x1 == b.x1);
            CHECK(a.y1 == b.y1);
            CHECK(a.x2 == b.x2);
            CHECK(a.y2 == b.y2);
        }
    }
}

TEST_CASE("manifest recount matches the in-memory instances") {
    TempDir dir("aaw_synth_man");
    auto samples = generate(6, 64, 43);
    write_dataset(samples, dir.path.string());
    std::size_t want = 0;
    for (const auto& s : samples) want += s.instances.size();
    std::ifstream man((dir.path / "manifest.txt").string());
    std::string line;
    std::size_t lines = 0;
    while (std::getline(man, line))
        if (!line.empty()) ++lines;
    CHECK(lines == want);
}

TEST_CASE("a truncated mask file is rejected with the file named") {
    TempDir dir("aaw_synth_trunc");
    auto samples = generate(2, 64, 47);
    write_dataset(samples, dir.path.string());
    // truncate the first mask file
    fs::path victim;
    for (const auto& e : fs::directory_iterator(dir.path / "masks")) {
        victim = e.path();
        break;
    }
    REQUIRE_FALSE(victim.empty());
    fs::resize_file(victim, 20);
    try {
        read_dataset(dir.path.string());
        FAIL("expected a read error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find(victim.filename().string()) != std::string::npos);
    }
}

TEST_CASE("a malformed manifest line is rejected with its line number") {
    TempDir dir("aaw_synth_badman");
    auto samples = generate(2, 64, 53);
    write_dataset(samples, dir.path.string());
    std::ofstream man((dir.path / "manifest.txt").string(), std::ios::app);
    man << "oops not numbers\n";
    man.close();
    CHECK_THROWS_WITH_AS(read_dataset(dir.path.string()), doctest::Contains("malformed"),
                         std::runtime_error);
}

TEST_CASE("split covers all indices once in 70/15/15 proportions") {
    auto sp = split_indices(100, 9);
    CHECK(sp.train.size() == 70);
    CHECK(sp.val.size() == 15);
    CHECK(sp.test.size() == 15);
    std::vector<int> seen(100, 0);
    for (int i : sp.train) ++seen[i];
    for (int i : sp.val) ++seen[i];
    for (int i : sp.test) ++seen[i];
    for (int c : seen) CHECK(c == 1);
    // deterministic under the same seed, shuffled between seeds
    auto sp2 = split_indices(100, 9);
    CHECK(sp.train == sp2.train);
    auto sp3 = split_indices(100, 10);
    CHECK(sp.train != sp3.train);
}
