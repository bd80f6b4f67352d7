// Copyright 2026 The aaw-seg Authors
// Licensed under the Apache License, Version 2.0;
// see http://www.apache.org/licenses/LICENSE-2.0 for details.
//
// Command-line surface: synthetic data generation, training, evaluation,
// and efficiency benchmarking for the five backbone variants.

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "aaw/bench.hpp"
#include "aaw/decode.hpp"
#include "aaw/report.hpp"
#include "aaw/synth.hpp"
#include "aaw/trainer.hpp"

namespace {

std::uint64_t env_seed_default() {
    if (const char* s = std::getenv("AAW_SEED")) return std::strtoull(s, nullptr, 10);
    return 42;
}

void write_json(const std::string& path, const nlohmann::json& j) {
    if (path.empty() || path == "-") {
        std::cout << j.dump(2) << "\n";
        return;
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write report: " + path);
    f << j.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Doppler artery segmentation: synthetic data, training, evaluation, benchmarks"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic Doppler-like dataset");
    int g_frames = 32, g_size = 128;
    std::uint64_t g_seed = env_seed_default();
    std::string g_out;
    gen->add_option("--frames", g_frames, "Number of frames")->check(CLI::PositiveNumber);
    gen->add_option("--size", g_size, "Frame side in pixels (multiple of 16)");
    gen->add_option("--seed", g_seed, "RNG seed (default from AAW_SEED)");
    gen->add_option("--out", g_out, "Output directory")->required();

    // train
    auto* tr = app.add_subcommand("train", "Train a variant on a dataset directory");
    std::string t_variant = "aaw", t_data, t_ckpt, t_trace;
    int t_steps = 500;
    double t_lr = 1e-3;
    std::uint64_t t_seed = env_seed_default();
    tr->add_option("--variant", t_variant, "baseline|baseline_wt|aa|aa_wt|aaw");
    tr->add_option("--data", t_data, "Dataset directory")->required();
    tr->add_option("--steps", t_steps, "Training steps")->check(CLI::PositiveNumber);
    tr->add_option("--lr", t_lr, "Learning rate");
    tr->add_option("--seed", t_seed, "RNG seed (default from AAW_SEED)");
    tr->add_option("--out", t_ckpt, "Checkpoint output path")->required();
    tr->add_option("--trace", t_trace, "Loss trace output ('step total cls box mask' lines)");

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    std::string e_ckpt, e_data, e_report;
    double e_score = 0.3, e_nms = 0.5, e_iou_thresh = 0.5;
    ev->add_option("--ckpt", e_ckpt, "Checkpoint path")->required();
    ev->add_option("--data", e_data, "Dataset directory")->required();
    ev->add_option("--report", e_report, "Report output path ('-' for stdout)");
    ev->add_option("--score-thresh", e_score, "Decode score threshold");
    ev->add_option("--nms-iou", e_nms, "NMS IoU threshold");
    ev->add_option("--map-iou", e_iou_thresh, "Mask IoU threshold for AP matching");

    // bench
    auto* be = app.add_subcommand("bench", "Efficiency report (params, GFLOPs, latency, FPS)");
    std::string b_variant = "all", b_ckpt, b_report;
    int b_size = 128, b_runs = 100, b_warmup = 10;
    be->add_option("--variant", b_variant, "Variant name or 'all'");
    be->add_option("--ckpt", b_ckpt, "Optional checkpoint to bench");
    be->add_option("--size", b_size, "Input side in pixels (multiple of 16)");
    be->add_option("--runs", b_runs, "Measured runs (>= 30)");
    be->add_option("--warmup", b_warmup, "Warmup runs");
    be->add_option("--report", b_report, "Report output path ('-' for stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            auto samples = aaw::generate(g_frames, g_size, g_seed);
            aaw::write_dataset(samples, g_out);
            std::size_t n_inst = 0;
            for (const auto& s : samples) n_inst += s.instances.size();
            std::cout << "wrote " << samples.size() << " frames, " << n_inst << " instances to "
                      << g_out << "\n";
        } else if (*tr) {
            auto samples = aaw::read_dataset(t_data);
            auto model = aaw::build_variant(t_variant, t_seed);
            auto res = aaw::train(model, samples, t_steps, t_lr, t_seed);
            model.save_file(t_ckpt);
            std::ostream* out = &std::cout;
            std::ofstream tf;
            if (!t_trace.empty()) {
                tf.open(t_trace);
                if (!tf) throw std::runtime_error("cannot write trace: " + t_trace);
                out = &tf;
            }
            for (const auto& r : res.trace)
                *out << r.step << " " << r.total << " " << r.cls << " " << r.box << " " << r.mask
                     << "\n";
            std::cout << "saved checkpoint to " << t_ckpt << " (final loss "
                      << res.trace.back().total << ")\n";
        } else if (*ev) {
            auto model = aaw::SegModel::load_file(e_ckpt);
            auto samples = aaw::read_dataset(e_data);
            std::vector<aaw::EvalFrame> frames;
            for (const auto& s : samples) {
                auto raw = model.forward(s.image);
                aaw::EvalFrame f;
                f.preds = aaw::decode(raw, 0, s.image->h, s.image->w, e_score, e_nms);
                f.gts = s.instances;
                frames.push_back(std::move(f));
            }
            auto rep = aaw::evaluate(frames, e_iou_thresh);
            write_json(e_report, aaw::metric_report_json(rep, model.variant()));
        } else if (*be) {
            std::vector<aaw::BenchReport> rows;
            if (!b_ckpt.empty()) {
                auto model = aaw::SegModel::load_file(b_ckpt);
                rows.push_back(aaw::bench_variant(model, b_size, b_warmup, b_runs));
            } else if (b_variant == "all") {
                for (const auto& [v, name] : aaw::variant_names()) {
                    auto model = aaw::build_variant(name, 1);
                    rows.push_back(aaw::bench_variant(model, b_size, b_warmup, b_runs));
                }
            } else {
                auto model = aaw::build_variant(b_variant, 1);
                rows.push_back(aaw::bench_variant(model, b_size, b_warmup, b_runs));
            }
            write_json(b_report, aaw::bench_report_json(rows));
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
