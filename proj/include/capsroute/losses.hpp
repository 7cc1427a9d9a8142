// Forward-only training objectives: level-weighted binary cross-entropy over
// the camouflage and boundary map pyramid, and the IoU loss on the
// input-scale camouflage map.
#pragma once

#include <array>
#include <cmath>

#include "capsroute/decoder.hpp"
#include "capsroute/tensor.hpp"

namespace capsroute {

inline constexpr double kLogEps = 1e-7;
inline constexpr std::array<double, 4> kLevelWeights{1.0, 0.8, 0.5, 0.5};

inline void require_binary(const Tensor& gt, const char* what) {
    for (double g : gt.data()) {
        if (g != 0.0 && g != 1.0) {
            throw std::invalid_argument(std::string(what) + ": ground truth must be binary");
        }
    }
}

/// Mean binary cross-entropy with clamped logs.
inline double bce(const Tensor& pred, const Tensor& gt) {
    if (!pred.same_shape(gt)) throw shape_error("bce: prediction/ground-truth shape mismatch");
    require_binary(gt, "bce");
    double total = 0.0;
    const auto p = pred.data();
    const auto g = gt.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double pc = std::min(std::max(p[i], kLogEps), 1.0 - kLogEps);
        total -= g[i] * std::log(pc) + (1.0 - g[i]) * std::log(1.0 - pc);
    }
    return total / static_cast<double>(p.size());
}

/// Ground-truth pyramid matching PredictionMaps level for level.
struct LevelGroundTruth {
    std::vector<Tensor> camouflage;
    std::vector<Tensor> boundary;
};

/// Weighted sum over levels of the camouflage and boundary cross-entropies.
inline double wbce_loss(const PredictionMaps& preds, const LevelGroundTruth& gts) {
    if (preds.camouflage.size() != gts.camouflage.size() ||
        preds.boundary.size() != gts.boundary.size() ||
        preds.camouflage.size() != preds.boundary.size()) {
        throw shape_error("wbce_loss: level counts must match");
    }
    if (preds.camouflage.size() > kLevelWeights.size()) {
        throw std::invalid_argument("wbce_loss: more levels than configured weights");
    }
    double total = 0.0;
    for (std::size_t j = 0; j < preds.camouflage.size(); ++j) {
        total += kLevelWeights[j] * (bce(preds.camouflage[j], gts.camouflage[j]) +
                                     bce(preds.boundary[j], gts.boundary[j]));
    }
    return total;
}

/// 1 - |intersection| / |union| on soft predictions. Empty prediction against
/// empty ground truth scores 0.
inline double iou_loss(const Tensor& pred, const Tensor& gt) {
    if (!pred.same_shape(gt)) throw shape_error("iou_loss: shape mismatch");
    require_binary(gt, "iou_loss");
    double intersection = 0.0;
    double union_sum = 0.0;
    const auto p = pred.data();
    const auto g = gt.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
        intersection += p[i] * g[i];
        union_sum += p[i] + g[i] - p[i] * g[i];
    }
    if (union_sum == 0.0) return 0.0;
    return 1.0 - intersection / union_sum;
}

}  // namespace capsroute
