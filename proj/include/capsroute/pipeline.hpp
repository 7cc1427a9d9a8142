// End-to-end forward pipeline on synthetic inputs, with per-stage records
// (shape, content hash, invariant checks) suitable for byte-stable reports.
#pragma once

#include <array>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "capsroute/config.hpp"
#include "capsroute/csdr.hpp"
#include "capsroute/decoder.hpp"
#include "capsroute/image_io.hpp"
#include "capsroute/losses.hpp"
#include "capsroute/mcg.hpp"
#include "capsroute/metrics.hpp"
#include "capsroute/routing.hpp"

namespace capsroute {

/// FNV-1a over the IEEE-754 bytes; stable fingerprint of a tensor's content.
inline std::uint64_t content_hash(const Tensor& t) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (double v : t.data()) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof(bits));
        for (int k = 0; k < 8; ++k) {
            h ^= (bits >> (8 * k)) & 0xFFu;
            h *= 0x100000001B3ull;
        }
    }
    return h;
}

inline std::string hash_string(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Centered rectangle mask covering the middle half of the grid.
inline Tensor synthetic_camouflage_gt(std::size_t h2, std::size_t w2) {
    Tensor gt({h2, w2});
    const std::size_t r0 = h2 / 4, r1 = h2 - h2 / 4;
    const std::size_t c0 = w2 / 4, c1 = w2 - w2 / 4;
    for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t c = c0; c < c1; ++c) gt(r, c) = 1.0;
    }
    return gt;
}

/// Ring of rectangle pixels with at least one 4-neighbor outside it.
inline Tensor synthetic_boundary_gt(std::size_t h2, std::size_t w2) {
    const Tensor fg = synthetic_camouflage_gt(h2, w2);
    Tensor ring({h2, w2});
    for (std::size_t r = 0; r < h2; ++r) {
        for (std::size_t c = 0; c < w2; ++c) {
            if (fg(r, c) != 1.0) continue;
            const bool edge = r == 0 || c == 0 || r + 1 == h2 || c + 1 == w2 ||
                              fg(r - 1, c) == 0.0 || fg(r + 1, c) == 0.0 ||
                              fg(r, c - 1) == 0.0 || fg(r, c + 1) == 0.0;
            if (edge) ring(r, c) = 1.0;
        }
    }
    return ring;
}

struct StageRecord {
    std::string stage;
    nlohmann::json payload;
};

struct DemoReport {
    std::vector<StageRecord> stages;
    nlohmann::json summary;
    bool all_invariants_passed = true;

    /// Line-delimited JSON: one record per stage, then the summary record.
    std::string to_jsonl() const {
        std::string out;
        for (const StageRecord& s : stages) {
            nlohmann::json j = s.payload;
            j["stage"] = s.stage;
            out += j.dump();
            out += '\n';
        }
        nlohmann::json j = summary;
        j["stage"] = "summary";
        out += j.dump();
        out += '\n';
        return out;
    }
};

namespace detail {

inline bool activations_in_unit_interval(const Tensor& t) {
    for (double v : t.data()) {
        if (!(v > 0.0 && v < 1.0)) return false;
    }
    return true;
}

inline nlohmann::json shape_json(const Tensor& t) {
    return nlohmann::json(t.shape());
}

}  // namespace detail

/// Run every stage of the pipeline on a synthetic feature grid and collect a
/// deterministic report. Prediction maps are written under `out_dir` when it
/// is non-empty.
inline DemoReport run_demo(const PipelineConfig& cfg,
                           const std::filesystem::path& out_dir = {}) {
    cfg.validate();
    DemoReport report;
    auto check = [&report](nlohmann::json& payload, const char* name, bool ok) {
        payload["checks"][name] = ok;
        if (!ok) report.all_invariants_passed = false;
    };

    const ParamBundle params(cfg.seed);
    std::string failed_stage = "synth_features";
    try {
        // Stage: synthetic backbone features.
        const FeatureGrid features =
            synth_features(cfg.seed, cfg.height, cfg.width, cfg.channels);
        {
            nlohmann::json j;
            j["shape"] = detail::shape_json(features.values);
            j["hash"] = hash_string(content_hash(features.values));
            check(j, "finite", features.values.all_finite());
            report.stages.push_back({"synth_features", std::move(j)});
        }

        // Stage: primary capsules.
        failed_stage = "primary_capsules";
        const PrimaryProjection proj = PrimaryProjection::seeded(
            params, cfg.channels, cfg.num_types, cfg.share_primary_projection);
        const CapsuleGrid grid = primary_capsules(features, proj);
        {
            nlohmann::json j;
            j["pose_shape"] = detail::shape_json(grid.pose);
            j["activation_shape"] = detail::shape_json(grid.activation);
            j["pose_hash"] = hash_string(content_hash(grid.pose));
            j["activation_hash"] = hash_string(content_hash(grid.activation));
            check(j, "activation_in_(0,1)",
                  detail::activations_in_unit_interval(grid.activation));
            check(j, "pose_finite", grid.pose.all_finite());
            report.stages.push_back({"primary_capsules", std::move(j)});
        }

        // Stage: four-direction serialization.
        failed_stage = "serialize";
        const CapsuleSequenceSet seqs = serialize(grid);
        {
            nlohmann::json j;
            j["shape"] = detail::shape_json(seqs.sequences[0]);
            bool roundtrip = true;
            for (int g = 1; g <= 4; ++g) {
                const Tensor back = realign(seqs.sequences[g - 1], g, cfg.height, cfg.width);
                if (!(back.data().size() == seqs.sequences[0].size() &&
                      std::memcmp(back.raw(), seqs.sequences[0].raw(),
                                  back.size() * sizeof(double)) == 0)) {
                    roundtrip = false;
                }
            }
            for (int g = 0; g < 4; ++g) {
                j["hashes"].push_back(hash_string(content_hash(seqs.sequences[g])));
            }
            check(j, "realign_roundtrip_exact", roundtrip);
            report.stages.push_back({"serialize", std::move(j)});
        }

        // Stage: mamba capsules per direction.
        failed_stage = "mamba_capsules";
        const McgParams mcg_params =
            McgParams::seeded(params, kCapsuleDim, cfg.state_dim, cfg.discretization);
        const McgResult mcg = mamba_capsules(grid, mcg_params);
        {
            nlohmann::json j;
            j["pose_shape"] = detail::shape_json(mcg.capsules[0].pose);
            j["activation_shape"] = detail::shape_json(mcg.capsules[0].activation);
            bool act_ok = true;
            for (int g = 0; g < 4; ++g) {
                act_ok = act_ok &&
                         detail::activations_in_unit_interval(mcg.capsules[g].activation);
                j["pose_hashes"].push_back(hash_string(content_hash(mcg.capsules[g].pose)));
                j["sequence_hashes"].push_back(
                    hash_string(content_hash(mcg.sequences.outputs[g])));
            }
            check(j, "activation_in_(0,1)", act_ok);
            report.stages.push_back({"mamba_capsules", std::move(j)});
        }

        // Stage: EM routing per direction.
        failed_stage = "em_routing";
        RoutingConfig routing_cfg;
        routing_cfg.iterations = cfg.em_iterations;
        routing_cfg.beta_a = cfg.beta_a;
        routing_cfg.beta_u = cfg.beta_u;
        routing_cfg.lambda_schedule = cfg.lambda_schedule;
        routing_cfg.variance_floor = cfg.variance_floor;
        const Tensor transforms =
            seeded_transforms(params, "routing.w", cfg.num_types, cfg.num_types);

        std::array<RoutingResult, 4> routed;
        {
            nlohmann::json j;
            bool rows_ok = true, act_ok = true;
            for (int g = 0; g < 4; ++g) {
                TypeCapsuleSet low;
                low.pose = Tensor({cfg.num_types, kPoseDim});
                low.activation = Tensor({cfg.num_types});
                for (std::size_t u = 0; u < cfg.num_types; ++u) {
                    for (std::size_t o = 0; o < kPoseDim; ++o) {
                        low.pose(u, o) = mcg.capsules[g].pose(o, u);
                    }
                    low.activation(u) = mcg.capsules[g].activation(0, u);
                }
                routed[g] = em_routing(low, transforms, routing_cfg);
                for (std::size_t i = 0; i < cfg.num_types; ++i) {
                    double row = 0.0;
                    for (std::size_t o = 0; o < cfg.num_types; ++o) {
                        row += routed[g].state.assignments(i, o);
                    }
                    if (std::abs(row - 1.0) > 1e-12) rows_ok = false;
                }
                act_ok = act_ok &&
                         detail::activations_in_unit_interval(routed[g].capsules.activation);
                j["pose_hashes"].push_back(
                    hash_string(content_hash(routed[g].capsules.pose)));
            }
            j["output_capsules"] = cfg.num_types;
            check(j, "assignment_rows_sum_to_1", rows_ok);
            check(j, "activation_in_(0,1)", act_ok);
            report.stages.push_back({"em_routing", std::move(j)});
        }

        // Stage: similarity + retrieval + per-direction fusion.
        failed_stage = "csdr";
        std::array<Tensor, 4> fused_dirs;
        {
            nlohmann::json j;
            bool cos_ok = true;
            for (int g = 0; g < 4; ++g) {
                const SimilarityMatrix sim =
                    similarity_matrix(mcg.capsules[g], routed[g].capsules);
                for (double e : sim.raw.data()) {
                    if (!(e >= -1.0 && e <= 1.0)) cos_ok = false;
                }
                const Tensor retrieved = retrieve(seqs, sim, g + 1);
                fused_dirs[g] =
                    fuse_direction(retrieved, mcg.sequences.outputs[g], cfg.fusion);
                j["similarity_hashes"].push_back(hash_string(content_hash(sim.raw)));
                j["retrieval_hashes"].push_back(hash_string(content_hash(retrieved)));
                j["fused_hashes"].push_back(hash_string(content_hash(fused_dirs[g])));
            }
            j["fusion_mode"] = to_string(cfg.fusion);
            check(j, "cosine_in_[-1,1]", cos_ok);
            report.stages.push_back({"csdr", std::move(j)});
        }

        // Stage: four-direction fusion.
        failed_stage = "fuse_all";
        const FusionParams fusion_params =
            FusionParams::seeded(params, cfg.num_types, cfg.token_dim, cfg.attention_heads);
        const Tensor fused = fuse_all(fused_dirs, cfg.height, cfg.width, fusion_params);
        {
            nlohmann::json j;
            j["shape"] = detail::shape_json(fused);
            j["hash"] = hash_string(content_hash(fused));
            check(j, "finite", fused.all_finite());
            report.stages.push_back({"fuse_all", std::move(j)});
        }

        // Stage: decoder maps.
        failed_stage = "decode";
        const DecoderParams decoder_params = DecoderParams::seeded(
            params, cfg.token_dim, cfg.attention_heads, cfg.decoder_levels);
        const PredictionMaps maps = decode(fused, decoder_params, cfg.height, cfg.width);
        {
            nlohmann::json j;
            bool in_unit = true;
            for (const Tensor& m : maps.camouflage) {
                for (double v : m.data()) in_unit = in_unit && v >= 0.0 && v <= 1.0;
                j["camouflage_hashes"].push_back(hash_string(content_hash(m)));
            }
            for (const Tensor& m : maps.boundary) {
                for (double v : m.data()) in_unit = in_unit && v >= 0.0 && v <= 1.0;
                j["boundary_hashes"].push_back(hash_string(content_hash(m)));
            }
            j["levels"] = maps.camouflage.size();
            j["map_shape"] = detail::shape_json(maps.camouflage.front());
            check(j, "maps_in_[0,1]", in_unit);
            report.stages.push_back({"decode", std::move(j)});
        }

        // Stage: losses against the synthetic ground truth.
        failed_stage = "losses";
        const Tensor gt_cam = synthetic_camouflage_gt(cfg.height, cfg.width);
        const Tensor gt_bnd = synthetic_boundary_gt(cfg.height, cfg.width);
        LevelGroundTruth gts;
        for (std::size_t j = 0; j < maps.camouflage.size(); ++j) {
            gts.camouflage.push_back(gt_cam);
            gts.boundary.push_back(gt_bnd);
        }
        const double loss_wbce = wbce_loss(maps, gts);
        const double loss_iou = iou_loss(maps.camouflage.back(), gt_cam);
        {
            nlohmann::json j;
            j["wbce"] = loss_wbce;
            j["iou"] = loss_iou;
            check(j, "losses_finite",
                  std::isfinite(loss_wbce) && std::isfinite(loss_iou) && loss_wbce >= 0.0 &&
                      loss_iou >= 0.0 && loss_iou <= 1.0);
            report.stages.push_back({"losses", std::move(j)});
        }

        failed_stage = "write_outputs";
        if (!out_dir.empty()) {
            std::filesystem::create_directories(out_dir);
            const GrayImage cam = from_unit_tensor(maps.camouflage.back());
            const GrayImage bnd = from_unit_tensor(maps.boundary.back());
            write_pgm(out_dir / "camouflage_map.pgm", cam);
            write_pgm(out_dir / "boundary_map.pgm", bnd);
            write_png(out_dir / "camouflage_map.png", cam);
            write_png(out_dir / "boundary_map.png", bnd);
        }

        report.summary["seed"] = cfg.seed;
        report.summary["wbce"] = loss_wbce;
        report.summary["iou"] = loss_iou;
        report.summary["camouflage_map_hash"] =
            hash_string(content_hash(maps.camouflage.back()));
        report.summary["all_invariants_passed"] = report.all_invariants_passed;
    } catch (const std::exception& e) {
        throw std::runtime_error("run_demo: stage '" + failed_stage + "' failed: " + e.what());
    }
    return report;
}

}  // namespace capsroute
