// Task-token decoder: fused tokens plus two task tokens run through a small
// transformer stack; per level a patch-task attention produces camouflage and
// boundary features that project to sigmoid maps.
#pragma once

#include <string>
#include <vector>

#include "capsroute/attention.hpp"

namespace capsroute {

struct TaskTokens {
    Tensor camouflage;  // d
    Tensor boundary;    // d
};

struct PatchTaskParams {
    Tensor w_q, w_k, w_v;  // d x d each

    static PatchTaskParams seeded(const ParamBundle& params, const std::string& prefix,
                                  std::size_t dim) {
        PatchTaskParams p;
        p.w_q = params.uniform(prefix + ".w_q", {dim, dim}, dim);
        p.w_k = params.uniform(prefix + ".w_k", {dim, dim}, dim);
        p.w_v = params.uniform(prefix + ".w_v", {dim, dim}, dim);
        return p;
    }
};

/// Patch-task attention with a sigmoid gate (no softmax):
///   out = Sigmoid(Q k^T / sqrt(d)) v + tokens
/// The attention term is rank one: every row of (out - tokens) is a multiple
/// of the projected task value.
inline Tensor patch_task_attention(const Tensor& tokens, const Tensor& task,
                                   const PatchTaskParams& p) {
    if (tokens.rank() != 2 || task.rank() != 1 || tokens.dim(1) != task.dim(0)) {
        throw shape_error("patch_task_attention: token dims must match");
    }
    const std::size_t v_len = tokens.dim(0);
    const std::size_t dim = tokens.dim(1);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));

    const Tensor q = linear(tokens, p.w_q);
    std::vector<double> key(dim, 0.0), value(dim, 0.0);
    for (std::size_t o = 0; o < dim; ++o) {
        double acc_k = 0.0, acc_v = 0.0;
        for (std::size_t c = 0; c < dim; ++c) {
            acc_k += p.w_k(o, c) * task(c);
            acc_v += p.w_v(o, c) * task(c);
        }
        key[o] = acc_k;
        value[o] = acc_v;
    }

    Tensor out(tokens.shape());
    for (std::size_t v = 0; v < v_len; ++v) {
        double logit = 0.0;
        for (std::size_t c = 0; c < dim; ++c) logit += q(v, c) * key[c];
        const double gate = sigmoid(logit * scale);
        for (std::size_t c = 0; c < dim; ++c) {
            out(v, c) = gate * value[c] + tokens(v, c);
        }
    }
    return out;
}

struct PredictHead {
    Tensor w;  // 1 x d
    Tensor b;  // 1

    static PredictHead seeded(const ParamBundle& params, const std::string& prefix,
                              std::size_t dim) {
        return PredictHead{params.uniform(prefix + ".w", {1, dim}, dim),
                           params.uniform(prefix + ".b", {1}, dim)};
    }
};

/// Per-token linear + sigmoid, reshaped to the h2 x w2 grid. All outputs lie
/// strictly in (0, 1).
inline Tensor predict_map(const Tensor& tokens, const PredictHead& head, std::size_t h2,
                          std::size_t w2) {
    if (tokens.dim(0) != h2 * w2) {
        throw shape_error("predict_map: token count must equal h2*w2");
    }
    const Tensor logits = linear(tokens, head.w, head.b);
    Tensor map({h2, w2});
    for (std::size_t r = 0; r < h2; ++r) {
        for (std::size_t c = 0; c < w2; ++c) {
            map(r, c) = unit_open(sigmoid(logits(r * w2 + c, 0)));
        }
    }
    return map;
}

struct DecoderLevelParams {
    TransformerLayerParams layer;
    PatchTaskParams cam_attn, bnd_attn;
    PredictHead cam_head, bnd_head;
};

struct DecoderParams {
    std::vector<DecoderLevelParams> levels;
    PredictHead cam_input_scale, bnd_input_scale;
    TaskTokens tokens;
    std::size_t heads = 4;

    static DecoderParams seeded(const ParamBundle& params, std::size_t dim,
                                std::size_t heads, std::size_t num_levels = 3) {
        DecoderParams p;
        p.heads = heads;
        for (std::size_t j = 0; j < num_levels; ++j) {
            const std::string prefix = "decoder.level" + std::to_string(j);
            DecoderLevelParams level;
            level.layer = TransformerLayerParams::seeded(params, prefix, dim, heads);
            level.cam_attn = PatchTaskParams::seeded(params, prefix + ".cam", dim);
            level.bnd_attn = PatchTaskParams::seeded(params, prefix + ".bnd", dim);
            level.cam_head = PredictHead::seeded(params, prefix + ".cam_head", dim);
            level.bnd_head = PredictHead::seeded(params, prefix + ".bnd_head", dim);
            p.levels.push_back(std::move(level));
        }
        p.cam_input_scale = PredictHead::seeded(params, "decoder.cam_input_scale", dim);
        p.bnd_input_scale = PredictHead::seeded(params, "decoder.bnd_input_scale", dim);
        p.tokens.camouflage = params.uniform("decoder.token.cam", {dim}, dim);
        p.tokens.boundary = params.uniform("decoder.token.bnd", {dim}, dim);
        return p;
    }
};

/// Per-level camouflage and boundary maps. Index 0..levels-1 follow the
/// decoder blocks; the last entry is the input-scale pair produced from the
/// final level's task-attended tokens.
struct PredictionMaps {
    std::vector<Tensor> camouflage;
    std::vector<Tensor> boundary;
};

inline PredictionMaps decode(const Tensor& fused, const DecoderParams& params,
                             std::size_t h2, std::size_t w2) {
    const std::size_t v_len = h2 * w2;
    if (fused.dim(0) != v_len) throw shape_error("decode: token count must equal h2*w2");
    const std::size_t dim = fused.dim(1);

    // Task tokens ride along as two extra sequence rows through the trunk.
    Tensor x({v_len + 2, dim});
    for (std::size_t v = 0; v < v_len; ++v) {
        for (std::size_t c = 0; c < dim; ++c) x(v, c) = fused(v, c);
    }
    for (std::size_t c = 0; c < dim; ++c) {
        x(v_len, c) = params.tokens.camouflage(c);
        x(v_len + 1, c) = params.tokens.boundary(c);
    }

    PredictionMaps maps;
    Tensor cam_feats, bnd_feats;
    for (const DecoderLevelParams& level : params.levels) {
        x = transformer_layer(x, level.layer);

        Tensor patches({v_len, dim});
        Tensor cam_token({dim}), bnd_token({dim});
        for (std::size_t v = 0; v < v_len; ++v) {
            for (std::size_t c = 0; c < dim; ++c) patches(v, c) = x(v, c);
        }
        for (std::size_t c = 0; c < dim; ++c) {
            cam_token(c) = x(v_len, c);
            bnd_token(c) = x(v_len + 1, c);
        }

        cam_feats = patch_task_attention(patches, cam_token, level.cam_attn);
        bnd_feats = patch_task_attention(patches, bnd_token, level.bnd_attn);
        maps.camouflage.push_back(predict_map(cam_feats, level.cam_head, h2, w2));
        maps.boundary.push_back(predict_map(bnd_feats, level.bnd_head, h2, w2));
    }

    maps.camouflage.push_back(predict_map(cam_feats, params.cam_input_scale, h2, w2));
    maps.boundary.push_back(predict_map(bnd_feats, params.bnd_input_scale, h2, w2));
    return maps;
}

}  // namespace capsroute
