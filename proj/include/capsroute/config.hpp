// Pipeline configuration: one flat JSON document; every field round-trips
// losslessly.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "capsroute/capsules.hpp"
#include "capsroute/csdr.hpp"
#include "capsroute/ssm.hpp"

namespace capsroute {

inline const char* to_string(FusionMode mode) {
    return mode == FusionMode::Gating ? "gating" : "additive";
}

inline const char* to_string(Discretization mode) {
    return mode == Discretization::Standard ? "standard" : "paper-literal";
}

inline FusionMode fusion_mode_from_string(const std::string& s) {
    if (s == "gating") return FusionMode::Gating;
    if (s == "additive") return FusionMode::Additive;
    throw std::invalid_argument("unknown fusion mode: " + s);
}

inline Discretization discretization_from_string(const std::string& s) {
    if (s == "standard") return Discretization::Standard;
    if (s == "paper-literal") return Discretization::PaperLiteral;
    throw std::invalid_argument("unknown discretization mode: " + s);
}

struct PipelineConfig {
    std::uint64_t seed = 7;
    std::size_t height = 8;        // h2
    std::size_t width = 8;         // w2
    std::size_t channels = 96;     // d2
    std::size_t num_types = 32;    // U
    std::size_t state_dim = 16;    // N
    std::size_t pose_dim = kPoseDim;

    int em_iterations = 3;
    double beta_a = 1.0;
    double beta_u = 1.0;
    std::vector<double> lambda_schedule{1.0, 2.0, 3.0};
    double variance_floor = 1e-8;

    FusionMode fusion = FusionMode::Gating;
    Discretization discretization = Discretization::Standard;
    bool share_primary_projection = false;

    std::size_t token_dim = 128;       // decoder/fusion channel width
    std::size_t attention_heads = 4;
    std::size_t decoder_levels = 3;

    std::string output_dir = "out";

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["seed"] = seed;
        j["h2"] = height;
        j["w2"] = width;
        j["d2"] = channels;
        j["num_types"] = num_types;
        j["state_dim"] = state_dim;
        j["pose_dim"] = pose_dim;
        j["em_iterations"] = em_iterations;
        j["beta_a"] = beta_a;
        j["beta_u"] = beta_u;
        j["lambda_schedule"] = lambda_schedule;
        j["variance_floor"] = variance_floor;
        j["fusion"] = to_string(fusion);
        j["discretization"] = to_string(discretization);
        j["share_primary_projection"] = share_primary_projection;
        j["token_dim"] = token_dim;
        j["attention_heads"] = attention_heads;
        j["decoder_levels"] = decoder_levels;
        j["output_dir"] = output_dir;
        return j;
    }

    static PipelineConfig from_json(const nlohmann::json& j) {
        PipelineConfig cfg;
        cfg.seed = j.value("seed", cfg.seed);
        cfg.height = j.value("h2", cfg.height);
        cfg.width = j.value("w2", cfg.width);
        cfg.channels = j.value("d2", cfg.channels);
        cfg.num_types = j.value("num_types", cfg.num_types);
        cfg.state_dim = j.value("state_dim", cfg.state_dim);
        cfg.pose_dim = j.value("pose_dim", cfg.pose_dim);
        cfg.em_iterations = j.value("em_iterations", cfg.em_iterations);
        cfg.beta_a = j.value("beta_a", cfg.beta_a);
        cfg.beta_u = j.value("beta_u", cfg.beta_u);
        cfg.lambda_schedule = j.value("lambda_schedule", cfg.lambda_schedule);
        cfg.variance_floor = j.value("variance_floor", cfg.variance_floor);
        cfg.fusion = fusion_mode_from_string(j.value("fusion", std::string(to_string(cfg.fusion))));
        cfg.discretization = discretization_from_string(
            j.value("discretization", std::string(to_string(cfg.discretization))));
        cfg.share_primary_projection =
            j.value("share_primary_projection", cfg.share_primary_projection);
        cfg.token_dim = j.value("token_dim", cfg.token_dim);
        cfg.attention_heads = j.value("attention_heads", cfg.attention_heads);
        cfg.decoder_levels = j.value("decoder_levels", cfg.decoder_levels);
        cfg.output_dir = j.value("output_dir", cfg.output_dir);
        cfg.validate();
        return cfg;
    }

    static PipelineConfig load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("PipelineConfig: cannot open " + path.string());
        nlohmann::json j;
        in >> j;
        return from_json(j);
    }

    void validate() const {
        if (height == 0 || width == 0 || channels == 0 || num_types == 0) {
            throw std::invalid_argument("PipelineConfig: grid dimensions must be positive");
        }
        if (pose_dim != kPoseDim) {
            throw std::invalid_argument("PipelineConfig: pose_dim is fixed at 16");
        }
        if (em_iterations < 1) {
            throw std::invalid_argument("PipelineConfig: em_iterations must be >= 1");
        }
        if (token_dim == 0 || attention_heads == 0 || token_dim % attention_heads != 0) {
            throw std::invalid_argument(
                "PipelineConfig: attention heads must divide token dim");
        }
        if (decoder_levels == 0 || decoder_levels + 1 > 4) {
            throw std::invalid_argument(
                "PipelineConfig: decoder levels plus the input-scale map must fit 4 loss weights");
        }
    }
};

}  // namespace capsroute
