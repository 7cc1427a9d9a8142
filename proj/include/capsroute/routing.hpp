// EM routing between capsule layers. Votes are pose matrices transformed per
// (input, output) pair; iterations alternate a Gaussian M-step with a
// soft-assignment E-step. The same routine serves the type-level path and the
// dense pixel-level baseline, which differ only in how many input capsules
// they feed in.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "capsroute/capsules.hpp"
#include "capsroute/params.hpp"
#include "capsroute/tensor.hpp"

namespace capsroute {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

/// A flat layer of capsules: one pose row and one activation per capsule.
struct TypeCapsuleSet {
    Tensor pose;        // count x 16
    Tensor activation;  // count

    std::size_t count() const { return activation.rank() ? activation.dim(0) : 0; }
};

struct RoutingConfig {
    int iterations = 3;
    double beta_a = 1.0;
    double beta_u = 1.0;
    std::vector<double> lambda_schedule{1.0, 2.0, 3.0};
    double variance_floor = 1e-8;
};

/// Internal EM state exposed for inspection: soft assignments, the per-output
/// Gaussians and activations of the last M-step.
struct RoutingState {
    Tensor assignments;  // U_in x U_out, rows sum to 1
    Tensor mean;         // U_out x 16
    Tensor variance;     // U_out x 16, floored
    Tensor activation;   // U_out
    bool degenerate_input = false;
};

struct RoutingResult {
    TypeCapsuleSet capsules;
    RoutingState state;
};

enum class RoutingMode { TypeLevel, PixelLevel };

/// Pose-transform votes: the 16-vector is read as a row-major 4x4 matrix and
/// multiplied by the 4x4 transform of its (input, output) pair.
inline void compute_votes(const Tensor& pose, const Tensor& w, std::vector<double>& votes) {
    const std::size_t num_in = pose.dim(0);
    const std::size_t num_out = w.dim(1);
    votes.assign(num_in * num_out * kPoseDim, 0.0);
    const double* w_ptr = w.raw();
    for (std::size_t i = 0; i < num_in; ++i) {
        const double* p = pose.raw() + i * kPoseDim;
        for (std::size_t j = 0; j < num_out; ++j) {
            const double* wij = w_ptr + (i * num_out + j) * kPoseDim;
            double* vote = votes.data() + (i * num_out + j) * kPoseDim;
            for (std::size_t r = 0; r < 4; ++r) {
                for (std::size_t col = 0; col < 4; ++col) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < 4; ++k) {
                        acc += p[r * 4 + k] * wij[k * 4 + col];
                    }
                    vote[r * 4 + col] = acc;
                }
            }
        }
    }
}

/// EM routing from `input` to w.dim(1) output capsules.
/// `w` holds one 4x4 transform per (input, output) pair: U_in x U_out x 4 x 4.
inline RoutingResult em_routing(const TypeCapsuleSet& input, const Tensor& w,
                                const RoutingConfig& cfg = RoutingConfig{}) {
    if (cfg.iterations < 1) throw std::invalid_argument("em_routing: iterations must be >= 1");
    if (input.pose.rank() != 2 || input.pose.dim(1) != kPoseDim) {
        throw shape_error("em_routing: pose must be U_in x 16");
    }
    const std::size_t num_in = input.pose.dim(0);
    if (w.rank() != 4 || w.dim(0) != num_in || w.dim(2) != 4 || w.dim(3) != 4) {
        throw shape_error("em_routing: transforms must be U_in x U_out x 4 x 4");
    }
    const std::size_t num_out = w.dim(1);
    require_shape(input.activation, {num_in}, "em_routing: activation");

    std::vector<double> votes;
    compute_votes(input.pose, w, votes);
    for (double v : votes) {
        if (!std::isfinite(v)) throw numeric_error("em_routing: non-finite vote");
    }

    const double* act_in = input.activation.raw();
    bool all_zero = true;
    for (std::size_t i = 0; i < num_in; ++i) {
        if (act_in[i] != 0.0) {
            all_zero = false;
            break;
        }
    }

    RoutingState state;
    state.assignments = Tensor({num_in, num_out}, 1.0 / static_cast<double>(num_out));
    state.mean = Tensor({num_out, kPoseDim});
    state.variance = Tensor({num_out, kPoseDim});
    state.activation = Tensor({num_out});
    state.degenerate_input = all_zero;

    double* r_ptr = state.assignments.raw();
    double* mu = state.mean.raw();
    double* var = state.variance.raw();
    double* act_out = state.activation.raw();
    std::vector<double> weighted(num_in * num_out);
    std::vector<double> sum_r(num_out);

    const int rounds = all_zero ? 1 : cfg.iterations;
    for (int t = 0; t < rounds; ++t) {
        const double lambda =
            cfg.lambda_schedule.empty()
                ? 1.0
                : cfg.lambda_schedule[std::min<std::size_t>(t, cfg.lambda_schedule.size() - 1)];

        // M-step: activation-weighted Gaussian fit per output capsule.
        for (std::size_t i = 0; i < num_in; ++i) {
            const double a = all_zero ? 1.0 : act_in[i];
            for (std::size_t j = 0; j < num_out; ++j) {
                weighted[i * num_out + j] = r_ptr[i * num_out + j] * a;
            }
        }
        for (std::size_t j = 0; j < num_out; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < num_in; ++i) acc += weighted[i * num_out + j];
            sum_r[j] = acc;
        }
        for (std::size_t j = 0; j < num_out; ++j) {
            const double denom = sum_r[j] > 0.0 ? sum_r[j] : 1.0;
            for (std::size_t h = 0; h < kPoseDim; ++h) {
                double acc = 0.0;
                for (std::size_t i = 0; i < num_in; ++i) {
                    acc += weighted[i * num_out + j] * votes[(i * num_out + j) * kPoseDim + h];
                }
                mu[j * kPoseDim + h] = acc / denom;
            }
            double cost_total = 0.0;
            for (std::size_t h = 0; h < kPoseDim; ++h) {
                double acc = 0.0;
                for (std::size_t i = 0; i < num_in; ++i) {
                    const double diff =
                        votes[(i * num_out + j) * kPoseDim + h] - mu[j * kPoseDim + h];
                    acc += weighted[i * num_out + j] * diff * diff;
                }
                double v2 = acc / denom;
                if (v2 < cfg.variance_floor) v2 = cfg.variance_floor;
                var[j * kPoseDim + h] = v2;
                cost_total += (cfg.beta_u + 0.5 * std::log(v2)) * sum_r[j];
            }
            act_out[j] = unit_open(sigmoid(lambda * (cfg.beta_a - cost_total)));
        }

        if (all_zero) break;  // keep the uniform assignments, flag the result

        // E-step: posterior assignment of each input to the output Gaussians,
        // computed in log space and normalized per input row.
        std::vector<double> scores(num_out);
        std::vector<double> log_norm(num_out);  // per-output log normalizer, input-free
        for (std::size_t j = 0; j < num_out; ++j) {
            double acc = std::log(act_out[j]);
            for (std::size_t h = 0; h < kPoseDim; ++h) {
                acc -= 0.5 * std::log(kTwoPi * var[j * kPoseDim + h]);
            }
            log_norm[j] = acc;
        }
        for (std::size_t i = 0; i < num_in; ++i) {
            double max_score = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < num_out; ++j) {
                double logp = log_norm[j];
                for (std::size_t h = 0; h < kPoseDim; ++h) {
                    const double diff =
                        votes[(i * num_out + j) * kPoseDim + h] - mu[j * kPoseDim + h];
                    logp -= diff * diff / (2.0 * var[j * kPoseDim + h]);
                }
                scores[j] = logp;
                if (logp > max_score) max_score = logp;
            }
            double norm = 0.0;
            for (std::size_t j = 0; j < num_out; ++j) {
                scores[j] = std::exp(scores[j] - max_score);
                norm += scores[j];
            }
            for (std::size_t j = 0; j < num_out; ++j) {
                r_ptr[i * num_out + j] = scores[j] / norm;
            }
        }
    }

    RoutingResult result;
    result.capsules.pose = state.mean;
    result.capsules.activation = state.activation;
    result.state = std::move(state);
    return result;
}

/// Flatten a capsule grid to one input layer: index = cell * U + type with
/// cells in row-major order.
inline TypeCapsuleSet flatten_pixel_capsules(const CapsuleGrid& grid) {
    const std::size_t v_len = grid.height * grid.width;
    const std::size_t num_types = grid.num_types;
    TypeCapsuleSet set;
    set.pose = Tensor({v_len * num_types, kPoseDim});
    set.activation = Tensor({v_len * num_types});
    for (std::size_t r = 0; r < grid.height; ++r) {
        for (std::size_t c = 0; c < grid.width; ++c) {
            const std::size_t v = r * grid.width + c;
            for (std::size_t u = 0; u < num_types; ++u) {
                const std::size_t i = v * num_types + u;
                for (std::size_t o = 0; o < kPoseDim; ++o) {
                    set.pose(i, o) = grid.pose(r, c, o, u);
                }
                set.activation(i) = grid.activation(r, c, 0, u);
            }
        }
    }
    return set;
}

/// Dense baseline: every pixel capsule routes to the output layer, so the
/// input count is V*U and all costs grow with V.
inline RoutingResult em_routing_pixel(const CapsuleGrid& grid, const Tensor& w,
                                      const RoutingConfig& cfg = RoutingConfig{}) {
    return em_routing(flatten_pixel_capsules(grid), w, cfg);
}

/// Closed-form multiply-accumulate count of one routing call: the pairwise
/// terms only (vote transform plus per-pair statistics and density work).
/// With P = pose_dim, each (input, output) pair costs P*sqrt(P) for the vote
/// and 6P+3 per iteration. Type-level routing feeds U_in inputs regardless of
/// V; the pixel-level baseline feeds V*U_in.
inline std::uint64_t routing_op_count(std::size_t v_cells, std::size_t num_in,
                                      std::size_t num_out, std::size_t pose_dim,
                                      int iterations, RoutingMode mode) {
    if (v_cells == 0 || num_in == 0 || num_out == 0 || pose_dim == 0 || iterations < 1) {
        throw std::invalid_argument("routing_op_count: arguments must be positive");
    }
    const auto root = static_cast<std::uint64_t>(std::llround(std::sqrt(double(pose_dim))));
    if (root * root != pose_dim) {
        throw std::invalid_argument("routing_op_count: pose_dim must be a perfect square");
    }
    const std::uint64_t inputs =
        mode == RoutingMode::PixelLevel ? std::uint64_t(v_cells) * num_in : num_in;
    const std::uint64_t per_pair =
        pose_dim * root + std::uint64_t(iterations) * (6 * pose_dim + 3);
    return inputs * num_out * per_pair;
}

/// Seeded per-pair transforms, shared by every routing call of a run.
inline Tensor seeded_transforms(const ParamBundle& params, const std::string& name,
                                std::size_t num_in, std::size_t num_out) {
    return params.uniform(name, {num_in, num_out, 4, 4}, 4);
}

/// Identity transforms: votes equal the input poses.
inline Tensor identity_transforms(std::size_t num_in, std::size_t num_out) {
    Tensor w({num_in, num_out, 4, 4});
    for (std::size_t i = 0; i < num_in; ++i) {
        for (std::size_t j = 0; j < num_out; ++j) {
            for (std::size_t k = 0; k < 4; ++k) w(i, j, k, k) = 1.0;
        }
    }
    return w;
}

}  // namespace capsroute
