// Primary capsule construction: a feature grid is projected position-wise
// into per-type pose vectors and sigmoid activations.
#pragma once

#include <cstdint>
#include <stdexcept>

#include "capsroute/params.hpp"
#include "capsroute/prng.hpp"
#include "capsroute/tensor.hpp"

namespace capsroute {

inline constexpr std::size_t kPoseDim = 16;     // pose vector length per capsule
inline constexpr std::size_t kActDim = 1;       // activation channels per capsule
inline constexpr std::size_t kCapsuleDim = kPoseDim + kActDim;

inline double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

inline constexpr double kUnitOpenEps = 1e-12;

/// Nudge a probability into the open interval; the logistic saturates to
/// exactly 0 or 1 in double precision for |x| beyond ~37.
inline double unit_open(double p) {
    if (p < kUnitOpenEps) return kUnitOpenEps;
    if (p > 1.0 - kUnitOpenEps) return 1.0 - kUnitOpenEps;
    return p;
}

/// Backbone stand-in: an h2 x w2 grid of d2-channel features.
struct FeatureGrid {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    Tensor values;  // height x width x channels
};

/// Pixel-level capsules: one 16-value pose and one activation per grid cell
/// and capsule type.
struct CapsuleGrid {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t num_types = 0;            // U
    Tensor pose;                          // height x width x 16 x U
    Tensor activation;                    // height x width x 1 x U, values in (0,1)
};

/// Deterministic pseudo-random feature grid, uniform on [-1, 1).
/// Identical (seed, dims) always produce a bit-identical grid.
inline FeatureGrid synth_features(std::uint64_t seed, std::size_t h2, std::size_t w2,
                                  std::size_t d2) {
    if (h2 == 0 || w2 == 0 || d2 == 0) {
        throw std::invalid_argument("synth_features: dimensions must be positive");
    }
    FeatureGrid grid{h2, w2, d2, Tensor({h2, w2, d2})};
    const std::uint64_t key = rng::stream_key(seed, "features");
    auto out = grid.values.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = rng::symmetric_double(rng::draw_u64(key, i), 1.0);
    }
    return grid;
}

/// The two position-wise projections feeding the capsule grid: one for pose,
/// one for the pre-sigmoid activation. Each is linear + bias + rectifier.
struct PrimaryProjection {
    Tensor w_pose;  // (16*U) x d2
    Tensor b_pose;  // 16*U
    Tensor w_act;   // U x d2
    Tensor b_act;   // U

    /// Seeded projections. With `shared` the pose and activation rows come
    /// from one joint (17*U) x d2 map split along its output axis; otherwise
    /// the two maps are independent draws.
    static PrimaryProjection seeded(const ParamBundle& params, std::size_t d2,
                                    std::size_t num_types, bool shared = false) {
        PrimaryProjection p;
        if (shared) {
            Tensor w = params.uniform("primary.phi.w", {kCapsuleDim * num_types, d2}, d2);
            Tensor b = params.uniform("primary.phi.b", {kCapsuleDim * num_types}, d2);
            p.w_pose = Tensor({kPoseDim * num_types, d2});
            p.b_pose = Tensor({kPoseDim * num_types});
            p.w_act = Tensor({num_types, d2});
            p.b_act = Tensor({num_types});
            for (std::size_t k = 0; k < kPoseDim * num_types; ++k) {
                p.b_pose(k) = b(k);
                for (std::size_t c = 0; c < d2; ++c) p.w_pose(k, c) = w(k, c);
            }
            for (std::size_t u = 0; u < num_types; ++u) {
                const std::size_t k = kPoseDim * num_types + u;
                p.b_act(u) = b(k);
                for (std::size_t c = 0; c < d2; ++c) p.w_act(u, c) = w(k, c);
            }
        } else {
            p.w_pose = params.uniform("primary.phi_pose.w", {kPoseDim * num_types, d2}, d2);
            p.b_pose = params.uniform("primary.phi_pose.b", {kPoseDim * num_types}, d2);
            p.w_act = params.uniform("primary.phi_act.w", {num_types, d2}, d2);
            p.b_act = params.uniform("primary.phi_act.b", {num_types}, d2);
        }
        return p;
    }
};

/// Capsule grid from a feature grid. Pose rows use the rectified projection
/// directly; activations pass the rectified projection through a sigmoid, so
/// every activation lies strictly in (0, 1).
inline CapsuleGrid primary_capsules(const FeatureGrid& f, const PrimaryProjection& proj) {
    const std::size_t d2 = f.channels;
    if (proj.w_pose.rank() != 2 || proj.w_pose.dim(1) != d2 ||
        proj.w_act.rank() != 2 || proj.w_act.dim(1) != d2) {
        throw shape_error("primary_capsules: projection input width does not match feature channels");
    }
    if (!f.values.all_finite()) {
        throw std::invalid_argument("primary_capsules: non-finite feature values");
    }
    const std::size_t num_types = proj.w_act.dim(0);
    if (proj.w_pose.dim(0) != kPoseDim * num_types) {
        throw shape_error("primary_capsules: pose rows must equal 16 * U");
    }

    CapsuleGrid grid;
    grid.height = f.height;
    grid.width = f.width;
    grid.num_types = num_types;
    grid.pose = Tensor({f.height, f.width, kPoseDim, num_types});
    grid.activation = Tensor({f.height, f.width, kActDim, num_types});

    for (std::size_t r = 0; r < f.height; ++r) {
        for (std::size_t c = 0; c < f.width; ++c) {
            for (std::size_t o = 0; o < kPoseDim; ++o) {
                for (std::size_t u = 0; u < num_types; ++u) {
                    const std::size_t k = o * num_types + u;
                    double acc = proj.b_pose(k);
                    for (std::size_t ch = 0; ch < d2; ++ch) {
                        acc += proj.w_pose(k, ch) * f.values(r, c, ch);
                    }
                    grid.pose(r, c, o, u) = relu(acc);
                }
            }
            for (std::size_t u = 0; u < num_types; ++u) {
                double acc = proj.b_act(u);
                for (std::size_t ch = 0; ch < d2; ++ch) {
                    acc += proj.w_act(u, ch) * f.values(r, c, ch);
                }
                grid.activation(r, c, 0, u) = unit_open(sigmoid(relu(acc)));
            }
        }
    }
    return grid;
}

}  // namespace capsroute
