// Four-direction grid serialization and the flip/transpose realignment that
// maps every direction back to direction-1 (row-major) order.
//
// Direction 1: row-major          Direction 3: reverse of direction 1
// Direction 2: column-major       Direction 4: reverse of direction 2
#pragma once

#include <array>
#include <cstddef>
#include <utility>
#include <vector>

#include "capsroute/capsules.hpp"
#include "capsroute/tensor.hpp"

namespace capsroute {

inline constexpr int kNumDirections = 4;

/// One traversal order over the h2 x w2 grid; a bijection over all V cells.
struct ScanOrder {
    int direction = 1;                                   // 1..4
    std::vector<std::pair<std::size_t, std::size_t>> cells;  // (row, col) per step
};

inline std::array<ScanOrder, 4> scan_orders(std::size_t h2, std::size_t w2) {
    if (h2 == 0 || w2 == 0) {
        throw std::invalid_argument("scan_orders: dimensions must be positive");
    }
    std::array<ScanOrder, 4> orders;
    const std::size_t cell_count = h2 * w2;
    for (int g = 0; g < 4; ++g) {
        orders[g].direction = g + 1;
        orders[g].cells.reserve(cell_count);
    }
    for (std::size_t r = 0; r < h2; ++r) {
        for (std::size_t c = 0; c < w2; ++c) {
            orders[0].cells.emplace_back(r, c);
        }
    }
    for (std::size_t c = 0; c < w2; ++c) {
        for (std::size_t r = 0; r < h2; ++r) {
            orders[1].cells.emplace_back(r, c);
        }
    }
    orders[2].cells.assign(orders[0].cells.rbegin(), orders[0].cells.rend());
    orders[3].cells.assign(orders[1].cells.rbegin(), orders[1].cells.rend());
    return orders;
}

/// The four 1D capsule sequences of a grid; each is V x 17 x U with the pose
/// channels first and the activation channel last.
struct CapsuleSequenceSet {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t num_types = 0;
    std::array<Tensor, 4> sequences;  // per direction: V x 17 x U

    std::size_t length() const { return height * width; }
};

inline CapsuleSequenceSet serialize(const CapsuleGrid& grid) {
    CapsuleSequenceSet set;
    set.height = grid.height;
    set.width = grid.width;
    set.num_types = grid.num_types;
    const std::size_t v_len = grid.height * grid.width;
    const auto orders = scan_orders(grid.height, grid.width);
    for (int g = 0; g < 4; ++g) {
        Tensor seq({v_len, kCapsuleDim, grid.num_types});
        for (std::size_t v = 0; v < v_len; ++v) {
            const auto [r, c] = orders[g].cells[v];
            for (std::size_t u = 0; u < grid.num_types; ++u) {
                for (std::size_t o = 0; o < kPoseDim; ++o) {
                    seq(v, o, u) = grid.pose(r, c, o, u);
                }
                seq(v, kPoseDim, u) = grid.activation(r, c, 0, u);
            }
        }
        set.sequences[g] = std::move(seq);
    }
    return set;
}

/// Rebuild the grid from the direction-1 sequence.
inline CapsuleGrid deserialize(const CapsuleSequenceSet& set) {
    CapsuleGrid grid;
    grid.height = set.height;
    grid.width = set.width;
    grid.num_types = set.num_types;
    grid.pose = Tensor({set.height, set.width, kPoseDim, set.num_types});
    grid.activation = Tensor({set.height, set.width, kActDim, set.num_types});
    const Tensor& seq = set.sequences[0];
    for (std::size_t r = 0; r < set.height; ++r) {
        for (std::size_t c = 0; c < set.width; ++c) {
            const std::size_t v = r * set.width + c;
            for (std::size_t u = 0; u < set.num_types; ++u) {
                for (std::size_t o = 0; o < kPoseDim; ++o) {
                    grid.pose(r, c, o, u) = seq(v, o, u);
                }
                grid.activation(r, c, 0, u) = seq(v, kPoseDim, u);
            }
        }
    }
    return grid;
}

/// Position map sending direction-1 index v1 to the index holding the same
/// cell in direction-g order. Identity for g=1, transpose for g=2, flip for
/// g=3 and flip-of-transpose for g=4.
inline std::vector<std::size_t> realign_permutation(int g, std::size_t h2, std::size_t w2) {
    if (g < 1 || g > kNumDirections) {
        throw std::invalid_argument("realign_permutation: direction must be in 1..4");
    }
    const std::size_t v_len = h2 * w2;
    std::vector<std::size_t> src(v_len);
    for (std::size_t r = 0; r < h2; ++r) {
        for (std::size_t c = 0; c < w2; ++c) {
            const std::size_t v1 = r * w2 + c;
            switch (g) {
                case 1: src[v1] = v1; break;
                case 2: src[v1] = c * h2 + r; break;
                case 3: src[v1] = v_len - 1 - v1; break;
                default: src[v1] = v_len - 1 - (c * h2 + r); break;
            }
        }
    }
    return src;
}

/// Reorder a direction-g sequence (axis 0 of length V) into direction-1
/// order. A pure permutation: values are moved, never changed.
inline Tensor realign(const Tensor& seq, int g, std::size_t h2, std::size_t w2) {
    const std::size_t v_len = h2 * w2;
    if (seq.rank() == 0 || seq.dim(0) != v_len) {
        throw shape_error("realign: sequence length does not match h2*w2");
    }
    const auto src = realign_permutation(g, h2, w2);
    Tensor out(seq.shape());
    const std::size_t stride = seq.size() / v_len;
    const double* in_ptr = seq.raw();
    double* out_ptr = out.raw();
    for (std::size_t v = 0; v < v_len; ++v) {
        const double* row = in_ptr + src[v] * stride;
        double* dst = out_ptr + v * stride;
        for (std::size_t k = 0; k < stride; ++k) dst[k] = row[k];
    }
    return out;
}

}  // namespace capsroute
