// Capsule spatial-details retrieval: adjacent-layer cosine correlation,
// activation-sequence retrieval, per-direction integration and the
// four-direction fusion into one token sequence.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "capsroute/attention.hpp"
#include "capsroute/mcg.hpp"
#include "capsroute/routing.hpp"
#include "capsroute/scan.hpp"

namespace capsroute {

inline constexpr double kCosineNormFloor = 1e-12;

/// Adjacent-layer correlation: raw cosine in [-1, 1] and its sigmoid.
struct SimilarityMatrix {
    Tensor raw;        // U x U
    Tensor activated;  // U x U, sigmoid of raw
    bool zero_norm_flagged = false;
};

/// Cosine of every (low capsule m, high capsule n) pair over the full
/// pose+activation vector. Zero-norm capsules yield similarity 0 and set the
/// flag.
inline SimilarityMatrix similarity_matrix(const MambaCapsuleSet& low,
                                          const TypeCapsuleSet& high) {
    const std::size_t vec_len = low.combined.dim(0);
    const std::size_t num_low = low.combined.dim(1);
    const std::size_t num_high = high.count();
    if (vec_len != kPoseDim + kActDim || high.pose.dim(1) != kPoseDim) {
        throw shape_error("similarity_matrix: capsule vector lengths must match");
    }

    // High-layer capsules as full vectors: pose rows then activation.
    Tensor high_vec({vec_len, num_high});
    for (std::size_t n = 0; n < num_high; ++n) {
        for (std::size_t o = 0; o < kPoseDim; ++o) high_vec(o, n) = high.pose(n, o);
        high_vec(kPoseDim, n) = high.activation(n);
    }

    SimilarityMatrix sim;
    sim.raw = Tensor({num_low, num_high});
    sim.activated = Tensor({num_low, num_high});

    std::vector<double> low_norm(num_low), high_norm(num_high);
    for (std::size_t m = 0; m < num_low; ++m) {
        double acc = 0.0;
        for (std::size_t x = 0; x < vec_len; ++x) acc += low.combined(x, m) * low.combined(x, m);
        low_norm[m] = std::sqrt(acc);
    }
    for (std::size_t n = 0; n < num_high; ++n) {
        double acc = 0.0;
        for (std::size_t x = 0; x < vec_len; ++x) acc += high_vec(x, n) * high_vec(x, n);
        high_norm[n] = std::sqrt(acc);
    }

    for (std::size_t m = 0; m < num_low; ++m) {
        for (std::size_t n = 0; n < num_high; ++n) {
            double value = 0.0;
            if (low_norm[m] < kCosineNormFloor || high_norm[n] < kCosineNormFloor) {
                sim.zero_norm_flagged = true;
            } else {
                double dot = 0.0;
                for (std::size_t x = 0; x < vec_len; ++x) {
                    dot += low.combined(x, m) * high_vec(x, n);
                }
                value = dot / (low_norm[m] * high_norm[n]);
                value = std::clamp(value, -1.0, 1.0);
            }
            sim.raw(m, n) = value;
            sim.activated(m, n) = sigmoid(value);
        }
    }
    return sim;
}

/// Retrieval of spatial detail: the activation slice of the direction-g
/// sequence is multiplied by the activated similarity matrix.
///   out[v, 0, n] = sum_m act_seq[v, 0, m] * activated[m, n]
inline Tensor retrieve(const CapsuleSequenceSet& seqs, const SimilarityMatrix& sim, int g) {
    if (g < 1 || g > kNumDirections) throw std::invalid_argument("retrieve: direction in 1..4");
    const Tensor& seq = seqs.sequences[g - 1];
    const std::size_t v_len = seqs.length();
    const std::size_t num_types = seqs.num_types;
    if (sim.activated.dim(0) != num_types || sim.activated.dim(1) != num_types) {
        throw shape_error("retrieve: similarity matrix must be U x U");
    }
    Tensor out({v_len, kActDim, num_types});
    for (std::size_t v = 0; v < v_len; ++v) {
        for (std::size_t n = 0; n < num_types; ++n) {
            double acc = 0.0;
            for (std::size_t m = 0; m < num_types; ++m) {
                acc += seq(v, kPoseDim, m) * sim.activated(m, n);
            }
            out(v, 0, n) = acc;
        }
    }
    return out;
}

enum class FusionMode { Gating, Additive };

/// Integrate the retrieved activation field with the mamba sequence.
/// Gating scales each token by (1 + retrieved); Additive adds the retrieved
/// value to every channel.
inline Tensor fuse_direction(const Tensor& retrieved, const Tensor& mamba_seq,
                             FusionMode mode = FusionMode::Gating) {
    if (retrieved.rank() != 3 || mamba_seq.rank() != 3 ||
        retrieved.dim(0) != mamba_seq.dim(0) || retrieved.dim(2) != mamba_seq.dim(2) ||
        retrieved.dim(1) != kActDim) {
        throw shape_error("fuse_direction: expected V x 1 x U and V x O x U inputs");
    }
    const std::size_t v_len = mamba_seq.dim(0);
    const std::size_t channels = mamba_seq.dim(1);
    const std::size_t num_types = mamba_seq.dim(2);
    Tensor out(mamba_seq.shape());
    for (std::size_t v = 0; v < v_len; ++v) {
        for (std::size_t u = 0; u < num_types; ++u) {
            const double r = retrieved(v, 0, u);
            for (std::size_t o = 0; o < channels; ++o) {
                out(v, o, u) = mode == FusionMode::Gating
                                   ? mamba_seq(v, o, u) * (1.0 + r)
                                   : mamba_seq(v, o, u) + r;
            }
        }
    }
    return out;
}

struct FusionParams {
    Tensor w_concat;  // d x (4 * O * U)
    Tensor b_concat;  // d
    MsaParams msa;

    static FusionParams seeded(const ParamBundle& params, std::size_t num_types,
                               std::size_t token_dim, std::size_t heads) {
        FusionParams p;
        const std::size_t concat_dim = 4 * kCapsuleDim * num_types;
        p.w_concat = params.uniform("fuse.concat.w", {token_dim, concat_dim}, concat_dim);
        p.b_concat = params.uniform("fuse.concat.b", {token_dim}, concat_dim);
        p.msa = MsaParams::seeded(params, "fuse.msa", token_dim, heads);
        return p;
    }
};

/// Realign all four direction sequences to direction-1 order, concatenate
/// their channels per token, project and run self-attention over the tokens.
inline Tensor fuse_all(const std::array<Tensor, 4>& directions, std::size_t h2,
                       std::size_t w2, const FusionParams& params) {
    const std::size_t v_len = h2 * w2;
    for (int g = 0; g < 4; ++g) {
        if (directions[g].rank() != 3 || directions[g].dim(0) != v_len) {
            throw shape_error("fuse_all: direction tensors must be V x O x U");
        }
        if (!(directions[g].shape() == directions[0].shape())) {
            throw shape_error("fuse_all: direction tensors must share one shape");
        }
    }
    const std::size_t channels = directions[0].dim(1);
    const std::size_t num_types = directions[0].dim(2);
    const std::size_t per_dir = channels * num_types;

    Tensor concat({v_len, 4 * per_dir});
    for (int g = 0; g < 4; ++g) {
        const Tensor aligned = realign(directions[g], g + 1, h2, w2);
        const double* src = aligned.raw();
        for (std::size_t v = 0; v < v_len; ++v) {
            double* dst = concat.raw() + v * 4 * per_dir + g * per_dir;
            const double* row = src + v * per_dir;
            for (std::size_t k = 0; k < per_dir; ++k) dst[k] = row[k];
        }
    }
    const Tensor projected = linear(concat, params.w_concat, params.b_concat);
    return multi_head_self_attention(projected, params.msa);
}

}  // namespace capsroute
