// Mamba capsule generation: each capsule type's 1D sequence is pushed through
// a per-direction selective SSM; the final latent state becomes that type's
// pose vector and a small sigmoid head produces its activation.
#pragma once

#include <array>
#include <string>

#include "capsroute/capsules.hpp"
#include "capsroute/params.hpp"
#include "capsroute/scan.hpp"
#include "capsroute/ssm.hpp"

namespace capsroute {

/// Type-level capsules of one scan direction.
struct MambaCapsuleSet {
    int direction = 1;
    Tensor pose;        // N x U, column u = final latent of sequence u
    Tensor activation;  // 1 x U, values in (0,1)
    Tensor combined;    // (N+1) x U, pose rows then the activation row
};

/// Per-direction output token sequences of the selective scans.
struct MambaSequences {
    std::array<Tensor, 4> outputs;  // each V x 17 x U
};

struct McgParams {
    // One selective block shared by all four directions, so single-token and
    // constant grids stay direction-invariant.
    SelectiveMaps ssm;
    Tensor w_act;  // 1 x N activation head
    double b_act = 0.0;
    Discretization mode = Discretization::Standard;

    static McgParams seeded(const ParamBundle& params, std::size_t token_dim,
                            std::size_t state_dim,
                            Discretization mode = Discretization::Standard) {
        McgParams p;
        p.ssm = SelectiveMaps::seeded(params, "mcg.ssm", token_dim, state_dim);
        p.w_act = params.uniform("mcg.act.w", {1, state_dim}, state_dim);
        p.b_act = params.uniform("mcg.act.b", {1}, state_dim)(0);
        p.mode = mode;
        return p;
    }
};

struct McgResult {
    std::array<MambaCapsuleSet, 4> capsules;
    MambaSequences sequences;
};

/// Final latent state (D x N) collapsed to the N-vector pose by summing the
/// per-channel states.
inline Tensor latent_to_pose(const Tensor& final_state) {
    const std::size_t token_dim = final_state.dim(0);
    const std::size_t state_dim = final_state.dim(1);
    Tensor pose({state_dim});
    for (std::size_t n = 0; n < state_dim; ++n) {
        double acc = 0.0;
        for (std::size_t d = 0; d < token_dim; ++d) acc += final_state(d, n);
        pose(n) = acc;
    }
    return pose;
}

inline McgResult mamba_capsules(const CapsuleGrid& grid, const McgParams& params) {
    const CapsuleSequenceSet seqs = serialize(grid);
    const std::size_t v_len = seqs.length();
    const std::size_t num_types = grid.num_types;
    const std::size_t state_dim = params.ssm.w_b.dim(0);

    McgResult result;
    for (int g = 0; g < 4; ++g) {
        MambaCapsuleSet set;
        set.direction = g + 1;
        set.pose = Tensor({state_dim, num_types});
        set.activation = Tensor({kActDim, num_types});
        set.combined = Tensor({state_dim + kActDim, num_types});
        Tensor out_seq({v_len, kCapsuleDim, num_types});

        for (std::size_t u = 0; u < num_types; ++u) {
            Tensor token_seq({v_len, kCapsuleDim});
            for (std::size_t v = 0; v < v_len; ++v) {
                for (std::size_t o = 0; o < kCapsuleDim; ++o) {
                    token_seq(v, o) = seqs.sequences[g](v, o, u);
                }
            }
            ScanResult scan;
            try {
                scan = ssm_scan(token_seq, params.ssm, params.mode);
            } catch (const numeric_error& e) {
                throw numeric_error("mamba_capsules: direction " + std::to_string(g + 1) +
                                        ", type " + std::to_string(u) + ": " + e.what(),
                                    e.index);
            }
            for (std::size_t v = 0; v < v_len; ++v) {
                for (std::size_t o = 0; o < kCapsuleDim; ++o) {
                    out_seq(v, o, u) = scan.outputs(v, o);
                }
            }
            const Tensor pose = latent_to_pose(scan.final_state);
            double act_logit = params.b_act;
            for (std::size_t n = 0; n < state_dim; ++n) {
                set.pose(n, u) = pose(n);
                set.combined(n, u) = pose(n);
                act_logit += params.w_act(0, n) * pose(n);
            }
            const double act = unit_open(sigmoid(act_logit));
            set.activation(0, u) = act;
            set.combined(state_dim, u) = act;
        }
        result.sequences.outputs[g] = std::move(out_seq);
        result.capsules[g] = std::move(set);
    }
    return result;
}

}  // namespace capsroute
