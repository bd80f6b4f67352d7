// Copyright 2026 The aaw-seg Authors
// Licensed under the Apache License, Version 2.0;
// see http://www.apache.org/licenses/LICENSE-2.0 for details.

#pragma once

#include <fstream>
#include <map>

#include "aaw/blocks.hpp"

namespace aaw {

enum class Variant { baseline, baseline_wt, aa, aa_wt, aaw };

inline const std::vector<std::pair<Variant, std::string>>& variant_names() {
    static const std::vector<std::pair<Variant, std::string>> v = {
        {Variant::baseline, "baseline"},
        {Variant::baseline_wt, "baseline_wt"},
        {Variant::aa, "aa"},
        {Variant::aa_wt, "aa_wt"},
        {Variant::aaw, "aaw"},
    };
    return v;
}

inline std::string to_string(Variant v) {
    for (const auto& [var, name] : variant_names())
        if (var == v) return name;
    return "?";
}

inline Variant variant_from_name(const std::string& name) {
    std::string valid;
    for (const auto& [var, nm] : variant_names()) {
        if (nm == name) return var;
        valid += (valid.empty() ? "" : ", ") + nm;
    }
    throw std::invalid_argument("unknown variant '" + name + "' (valid: " + valid + ")");
}

/// Per-stage construction recipe: the downsampler kind and the block kind.
struct StageSpec {
    std::string down;   // "conv" | "wtconv"
    std::string block;  // "c2f" | "attn_c2f" | "wtc2f"
    int channels = 0;
    int repeats = 1;
};

// Shared desk-scale widths; four stride-2 stages so heads are
// interchangeable across variants.
inline const int kStageChannels[4] = {16, 32, 64, 128};
inline constexpr int kStemChannels = 8;
inline constexpr int kNumClasses = 9;
inline constexpr int kNumPrototypes = 8;
inline constexpr int kBoxChannels = 4;
inline constexpr int kHeadChannels = kNumClasses + kBoxChannels + kNumPrototypes;

/// Stage recipes for the five ablation variants. Attention replaces the
/// bottlenecks in the two deepest stages; the wavelet treatments differ:
/// the "_wt" variants swap the stage downsampling conv heads for wavelet
/// convolutions, while aaw swaps the shallow-stage blocks themselves for
/// wtc2f (wavelet entry head, bottlenecks retained).
inline std::vector<StageSpec> stage_specs(Variant v) {
    std::vector<StageSpec> s(4);
    for (int i = 0; i < 4; ++i) {
        s[i].channels = kStageChannels[i];
        s[i].repeats = 1;
        s[i].down = "conv";
        s[i].block = "c2f";
    }
    switch (v) {
        case Variant::baseline:
            break;
        case Variant::baseline_wt:
            for (int i = 0; i < 4; ++i) s[i].down = "wtconv";
            break;
        case Variant::aa:
            s[2].block = s[3].block = "attn_c2f";
            break;
        case Variant::aa_wt:
            for (int i = 0; i < 4; ++i) s[i].down = "wtconv";
            s[2].block = s[3].block = "attn_c2f";
            break;
        case Variant::aaw:
            s[0].block = s[1].block = "wtc2f";
            s[2].block = s[3].block = "attn_c2f";
            break;
    }
    return s;
}

/// Raw head outputs: per-scale grids of (class logits, box offsets, mask
/// coefficients) plus the stride-4 prototype tensor.
struct RawOutputs {
    TensorPtr det8;    // (n, 21, H/8, W/8)
    TensorPtr det16;   // (n, 21, H/16, W/16)
    TensorPtr protos;  // (n, P, H/4, W/4)
};

inline constexpr int kStrides[2] = {8, 16};

/// Backbone variant + shared neck + prototype-mask segmentation head.
class SegModel {
public:
    SegModel() = default;

    SegModel(Variant variant, std::uint64_t init_seed) : variant_(variant) {
        Rng rng = Rng::seeded(init_seed);
        const auto specs = stage_specs(variant);
        stem_ = ConvNormAct(store_, rng, "stem", 3, kStemChannels, 3);
        int cin = kStemChannels;
        for (int i = 0; i < 4; ++i) {
            const auto& sp = specs[i];
            const std::string sid = "stage" + std::to_string(i + 1);
            downs_[i] = DownLayer(store_, rng, sid + ".down", cin, sp.channels, sp.down == "wtconv");
            EntryKind ek = sp.block == "wtc2f" ? EntryKind::wt : EntryKind::conv;
            InnerKind ik = sp.block == "attn_c2f" ? InnerKind::attention : InnerKind::bottleneck;
            blocks_[i] = C2fBlock(store_, rng, sid + ".block", sp.channels, sp.channels,
                                  sp.repeats, ek, ik);
            cin = sp.channels;
        }
        // Plain neck shared by all variants.
        neck_ = C2fBlock(store_, rng, "neck.c2f", kStageChannels[3] + kStageChannels[2],
                         kStageChannels[2], 1, EntryKind::conv, InnerKind::bottleneck);
        proto_mix_ = ConvNormAct(store_, rng, "proto.mix", kStageChannels[2] + kStageChannels[1],
                                 32, 3);
        proto_out_ = ConvLayer(store_, rng, "proto.out", 32, kNumPrototypes, 1, 1, /*bias=*/true);
        head8_mix_ = ConvNormAct(store_, rng, "head8.mix", kStageChannels[2], kStageChannels[2], 3);
        head8_out_ = ConvLayer(store_, rng, "head8.out", kStageChannels[2], kHeadChannels, 1, 1, true);
        head16_mix_ = ConvNormAct(store_, rng, "head16.mix", kStageChannels[3], kStageChannels[3], 3);
        head16_out_ = ConvLayer(store_, rng, "head16.out", kStageChannels[3], kHeadChannels, 1, 1, true);
        // Start class logits at a ~1% prior so the dense negative grid does
        // not flood early training with confident false positives.
        const double prior_logit = std::log(0.01 / 0.99);
        for (const auto& p : store_.params())
            if (p->id == "head8.out.b" || p->id == "head16.out.b")
                for (int c = 0; c < kNumClasses; ++c) p->value->data[c] = prior_logit;
    }

    Variant variant() const { return variant_; }
    const std::vector<ParamPtr>& params() const { return store_.params(); }

    RawOutputs forward(const TensorPtr& x) const {
        if (x->h % 16 != 0 || x->w % 16 != 0)
            throw std::invalid_argument("SegModel::forward: spatial dims must be divisible by 16, got " +
                                        x->shape_str());
        auto t = stem_(x);
        TensorPtr s[4];
        for (int i = 0; i < 4; ++i) {
            t = blocks_[i](downs_[i](t));
            s[i] = t;
        }
        // Top-down fusion to stride 8, then on to stride 4 for prototypes.
        auto n3 = neck_(concat_channels({upsample2x(s[3]), s[2]}));
        auto pfeat = proto_mix_(concat_channels({upsample2x(n3), s[1]}));
        RawOutputs out;
        out.protos = proto_out_(pfeat);
        out.det8 = head8_out_(head8_mix_(n3));
        out.det16 = head16_out_(head16_mix_(s[3]));
        return out;
    }

    /// Releases graph edges held by param tensors after a training step.
    void detach_params() {
        for (const auto& p : store_.params()) detach(p->value);
    }

    void save(std::ostream& os) const {
        os << "CKPT1 " << to_string(variant_) << " " << store_.params().size() << "\n";
        for (const auto& p : store_.params()) {
            os << p->id << " " << (p->trainable ? 1 : 0) << "\n";
            write_tensor(os, *p->value);
        }
    }

    void save_file(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
        save(f);
    }

    static SegModel load(std::istream& is) {
        std::string magic, vname;
        std::size_t count;
        if (!(is >> magic >> vname >> count) || magic != "CKPT1")
            throw std::runtime_error("bad checkpoint header");
        SegModel m(variant_from_name(vname), /*init_seed=*/0);
        if (count != m.params().size())
            throw std::runtime_error("checkpoint param count " + std::to_string(count) +
                                     " does not match model (" +
                                     std::to_string(m.params().size()) + ")");
        std::map<std::string, ParamPtr> by_id;
        for (const auto& p : m.params()) by_id[p->id] = p;
        for (std::size_t i = 0; i < count; ++i) {
            std::string id;
            int trainable;
            if (!(is >> id >> trainable)) throw std::runtime_error("truncated checkpoint");
            is.get();
            auto t = read_tensor(is);
            auto it = by_id.find(id);
            if (it == by_id.end()) throw std::runtime_error("unknown param id in checkpoint: " + id);
            if (!it->second->value->same_shape(*t))
                throw std::runtime_error("shape mismatch for param " + id);
            it->second->value->data = t->data;
        }
        return m;
    }

    static SegModel load_file(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
        return load(f);
    }

private:
    Variant variant_ = Variant::baseline;
    ParamStore store_;
    ConvNormAct stem_;
    DownLayer downs_[4];
    C2fBlock blocks_[4];
    C2fBlock neck_;
    ConvNormAct proto_mix_;
    ConvLayer proto_out_;
    ConvNormAct head8_mix_;
    ConvLayer head8_out_;
    ConvNormAct head16_mix_;
    ConvLayer head16_out_;
};

inline SegModel build_variant(const std::string& name, std::uint64_t init_seed = 1) {
    return SegModel(variant_from_name(name), init_seed);
}

}  // namespace aaw
