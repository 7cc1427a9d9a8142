// Camouflaged-object-detection metrics over prediction/ground-truth mask
// pairs: mean absolute error, maximum F-measure (beta^2 = 0.3), maximum
// enhanced-alignment measure and the structure measure (alpha = 0.5).
//
// F and E sweep 256 thresholds uniform on [0, 1]; a pixel is foreground when
// its prediction strictly exceeds the threshold.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "capsroute/tensor.hpp"

namespace capsroute {

inline constexpr int kThresholdCount = 256;
inline constexpr double kFMeasureBetaSq = 0.3;
inline constexpr double kSMeasureAlpha = 0.5;
inline constexpr double kMetricEps = 1e-8;

struct MaskPair {
    Tensor prediction;    // values in [0, 1]
    Tensor ground_truth;  // values in {0, 1}
};

inline void validate_pair(const MaskPair& pair) {
    if (!pair.prediction.same_shape(pair.ground_truth) || pair.prediction.rank() != 2) {
        throw shape_error("MaskPair: prediction and ground truth must be equal 2-D grids");
    }
    for (double p : pair.prediction.data()) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw std::invalid_argument("MaskPair: prediction values must lie in [0, 1]");
        }
    }
    for (double g : pair.ground_truth.data()) {
        if (g != 0.0 && g != 1.0) {
            throw std::invalid_argument("MaskPair: ground truth must be binary");
        }
    }
}

inline double threshold_value(int k) {
    return static_cast<double>(k) / 255.0;
}

inline double mae(const MaskPair& pair) {
    validate_pair(pair);
    double total = 0.0;
    const auto f = pair.prediction.data();
    const auto g = pair.ground_truth.data();
    for (std::size_t i = 0; i < f.size(); ++i) total += std::abs(f[i] - g[i]);
    return total / static_cast<double>(f.size());
}

struct ThresholdCurve {
    std::array<double, kThresholdCount> values{};
    double max = 0.0;
};

inline ThresholdCurve f_measure_curve(const MaskPair& pair) {
    validate_pair(pair);
    const auto f = pair.prediction.data();
    const auto g = pair.ground_truth.data();
    double gt_count = 0.0;
    for (double v : g) gt_count += v;

    ThresholdCurve curve;
    for (int k = 0; k < kThresholdCount; ++k) {
        const double t = threshold_value(k);
        double fg = 0.0, hit = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i) {
            if (f[i] > t) {
                fg += 1.0;
                hit += g[i];
            }
        }
        double score = 0.0;
        if (gt_count == 0.0) {
            // Empty ground truth: credit only an empty thresholded prediction.
            score = fg == 0.0 ? 1.0 : 0.0;
        } else if (fg > 0.0) {
            const double precision = hit / fg;
            const double recall = hit / gt_count;
            const double denom = kFMeasureBetaSq * precision + recall;
            if (denom > 0.0) {
                score = (1.0 + kFMeasureBetaSq) * precision * recall / denom;
            }
        }
        curve.values[k] = score;
        curve.max = std::max(curve.max, score);
    }
    return curve;
}

inline double f_measure_max(const MaskPair& pair) { return f_measure_curve(pair).max; }

inline ThresholdCurve e_measure_curve(const MaskPair& pair) {
    validate_pair(pair);
    const auto f = pair.prediction.data();
    const auto g = pair.ground_truth.data();
    const std::size_t n = f.size();
    double gt_mean = 0.0;
    for (double v : g) gt_mean += v;
    gt_mean /= static_cast<double>(n);

    ThresholdCurve curve;
    std::vector<char> fb(n);
    for (int k = 0; k < kThresholdCount; ++k) {
        const double t = threshold_value(k);
        double fb_mean = 0.0;
        bool all_match = true, all_miss = true;
        for (std::size_t i = 0; i < n; ++i) {
            fb[i] = f[i] > t ? 1 : 0;
            fb_mean += fb[i];
            if (fb[i] == static_cast<char>(g[i])) {
                all_miss = false;
            } else {
                all_match = false;
            }
        }
        fb_mean /= static_cast<double>(n);

        double score;
        if (all_match) {
            score = 1.0;
        } else if (all_miss) {
            score = 0.0;
        } else {
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double phi_f = fb[i] - fb_mean;
                const double phi_g = g[i] - gt_mean;
                const double align =
                    2.0 * phi_f * phi_g / (phi_f * phi_f + phi_g * phi_g + kMetricEps);
                const double enhanced = (align + 1.0) * (align + 1.0) / 4.0;
                total += enhanced;
            }
            score = total / static_cast<double>(n);
        }
        curve.values[k] = score;
        curve.max = std::max(curve.max, score);
    }
    return curve;
}

inline double e_measure_max(const MaskPair& pair) { return e_measure_curve(pair).max; }

namespace detail {

/// Object similarity of one region: 2*mean / (mean^2 + 1 + std + eps), with
/// the standard deviation taken over the region (n-1 normalization).
inline double object_score(const std::vector<double>& values) {
    if (values.empty()) return 0.0;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    const double stddev =
        values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1)) : 0.0;
    return 2.0 * mean / (mean * mean + 1.0 + stddev + kMetricEps);
}

/// SSIM-style similarity of one block.
inline double region_ssim(const std::vector<double>& pred, const std::vector<double>& gt) {
    const std::size_t n = pred.size();
    if (n == 0) return 1.0;
    double x = 0.0, y = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        x += pred[i];
        y += gt[i];
    }
    x /= static_cast<double>(n);
    y /= static_cast<double>(n);
    double sx = 0.0, sy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += (pred[i] - x) * (pred[i] - x);
        sy += (gt[i] - y) * (gt[i] - y);
        sxy += (pred[i] - x) * (gt[i] - y);
    }
    const double denom_n = n > 1 ? static_cast<double>(n - 1) : 1.0;
    sx /= denom_n;
    sy /= denom_n;
    sxy /= denom_n;

    const double num = 4.0 * x * y * sxy;
    const double den = (x * x + y * y) * (sx + sy);
    if (num != 0.0) return num / (den + kMetricEps);
    if (den == 0.0) return 1.0;
    return 0.0;
}

}  // namespace detail

struct SMeasureParts {
    double object_term = 0.0;
    double region_term = 0.0;
};

inline SMeasureParts s_measure_parts(const MaskPair& pair) {
    const Tensor& f = pair.prediction;
    const Tensor& g = pair.ground_truth;
    const std::size_t rows = f.dim(0);
    const std::size_t cols = f.dim(1);
    const std::size_t n = rows * cols;

    double gt_mean = 0.0;
    for (double v : g.data()) gt_mean += v;
    gt_mean /= static_cast<double>(n);

    SMeasureParts parts;

    // Object term: foreground similarity on the prediction, background
    // similarity on its complement, weighted by the foreground share.
    std::vector<double> fg, bg;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            if (g(r, c) == 1.0) {
                fg.push_back(f(r, c));
            } else {
                bg.push_back(1.0 - f(r, c));
            }
        }
    }
    parts.object_term =
        gt_mean * detail::object_score(fg) + (1.0 - gt_mean) * detail::object_score(bg);

    // Region term: 2x2 split at the ground-truth centroid, block similarities
    // weighted by block area.
    std::size_t cx = cols / 2, cy = rows / 2;
    double mass = 0.0, mx = 0.0, my = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            if (g(r, c) == 1.0) {
                mass += 1.0;
                mx += static_cast<double>(c);
                my += static_cast<double>(r);
            }
        }
    }
    if (mass > 0.0) {
        cx = static_cast<std::size_t>(std::llround(mx / mass));
        cy = static_cast<std::size_t>(std::llround(my / mass));
    }
    cx = std::min(cx, cols - 1);
    cy = std::min(cy, rows - 1);

    const std::array<std::pair<std::size_t, std::size_t>, 4> row_ranges{
        std::pair{std::size_t{0}, cy + 1}, {std::size_t{0}, cy + 1},
        {cy + 1, rows}, {cy + 1, rows}};
    const std::array<std::pair<std::size_t, std::size_t>, 4> col_ranges{
        std::pair{std::size_t{0}, cx + 1}, {cx + 1, cols},
        {std::size_t{0}, cx + 1}, {cx + 1, cols}};

    double region = 0.0;
    for (int blk = 0; blk < 4; ++blk) {
        std::vector<double> pv, gv;
        for (std::size_t r = row_ranges[blk].first; r < row_ranges[blk].second; ++r) {
            for (std::size_t c = col_ranges[blk].first; c < col_ranges[blk].second; ++c) {
                pv.push_back(f(r, c));
                gv.push_back(g(r, c));
            }
        }
        const double weight = static_cast<double>(pv.size()) / static_cast<double>(n);
        region += weight * detail::region_ssim(pv, gv);
    }
    parts.region_term = region;
    return parts;
}

inline double s_measure(const MaskPair& pair) {
    validate_pair(pair);
    const auto g = pair.ground_truth.data();
    const auto f = pair.prediction.data();
    double gt_mean = 0.0, pred_mean = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        gt_mean += g[i];
        pred_mean += f[i];
    }
    gt_mean /= static_cast<double>(g.size());
    pred_mean /= static_cast<double>(f.size());

    // Degenerate masks score by the mean prediction alone.
    if (gt_mean == 0.0) return 1.0 - pred_mean;
    if (gt_mean == 1.0) return pred_mean;

    const SMeasureParts parts = s_measure_parts(pair);
    const double s =
        kSMeasureAlpha * parts.object_term + (1.0 - kSMeasureAlpha) * parts.region_term;
    return std::clamp(s, 0.0, 1.0);
}

struct MetricReport {
    double mae = 0.0;
    double f_max = 0.0;
    double e_max = 0.0;
    double s_measure = 0.0;
    ThresholdCurve f_curve;
    ThresholdCurve e_curve;
    bool empty_gt = false;
};

inline MetricReport evaluate_pair(const MaskPair& pair) {
    MetricReport report;
    report.mae = mae(pair);
    report.f_curve = f_measure_curve(pair);
    report.f_max = report.f_curve.max;
    report.e_curve = e_measure_curve(pair);
    report.e_max = report.e_curve.max;
    report.s_measure = s_measure(pair);
    report.empty_gt = true;
    for (double g : pair.ground_truth.data()) {
        if (g == 1.0) {
            report.empty_gt = false;
            break;
        }
    }
    return report;
}

/// Deterministic pairwise summation, used for batch aggregation.
inline double pairwise_sum(const std::vector<double>& values, std::size_t begin,
                           std::size_t end) {
    const std::size_t count = end - begin;
    if (count == 0) return 0.0;
    if (count == 1) return values[begin];
    const std::size_t mid = begin + count / 2;
    return pairwise_sum(values, begin, mid) + pairwise_sum(values, mid, end);
}

inline double pairwise_mean(const std::vector<double>& values) {
    if (values.empty()) return 0.0;
    return pairwise_sum(values, 0, values.size()) / static_cast<double>(values.size());
}

}  // namespace capsroute
