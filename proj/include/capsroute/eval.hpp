// Directory evaluation: prediction and ground-truth masks matched by file
// stem, scored per image and aggregated with a deterministic pairwise mean.
#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "capsroute/image_io.hpp"
#include "capsroute/metrics.hpp"

namespace capsroute {

struct EvalOptions {
    bool allow_missing = false;
    unsigned workers = 0;  // 0: hardware concurrency
};

struct ImageScore {
    std::string name;
    MetricReport report;
};

struct EvalResult {
    std::vector<ImageScore> scores;            // sorted by name
    std::vector<std::string> missing_gt;        // predictions without ground truth
    std::vector<std::string> missing_pred;      // ground truths without prediction
    double mean_mae = 0.0;
    double mean_f = 0.0;
    double mean_e = 0.0;
    double mean_s = 0.0;

    bool complete() const { return missing_gt.empty() && missing_pred.empty(); }

    std::string to_jsonl() const {
        std::string out;
        for (const ImageScore& s : scores) {
            nlohmann::json j;
            j["image"] = s.name;
            j["mae"] = s.report.mae;
            j["f_max"] = s.report.f_max;
            j["e_max"] = s.report.e_max;
            j["s_measure"] = s.report.s_measure;
            j["empty_gt"] = s.report.empty_gt;
            // Full 256-threshold sweeps, kept in the record for audit.
            j["f_curve"] = s.report.f_curve.values;
            j["e_curve"] = s.report.e_curve.values;
            out += j.dump();
            out += '\n';
        }
        nlohmann::json j;
        j["summary"] = true;
        j["images"] = scores.size();
        j["mean_mae"] = mean_mae;
        j["mean_f_max"] = mean_f;
        j["mean_e_max"] = mean_e;
        j["mean_s_measure"] = mean_s;
        j["missing_gt"] = missing_gt;
        j["missing_pred"] = missing_pred;
        out += j.dump();
        out += '\n';
        return out;
    }

    std::string to_table() const {
        std::ostringstream os;
        os << "image                             MAE     Fm      Em      Sm\n";
        auto row = [&os](const std::string& name, double m, double f, double e, double s) {
            os << name;
            for (std::size_t pad = name.size(); pad < 32; ++pad) os << ' ';
            char buf[64];
            std::snprintf(buf, sizeof(buf), "  %.4f  %.4f  %.4f  %.4f\n", m, f, e, s);
            os << buf;
        };
        for (const ImageScore& s : scores) {
            row(s.name, s.report.mae, s.report.f_max, s.report.e_max, s.report.s_measure);
        }
        row("mean", mean_mae, mean_f, mean_e, mean_s);
        return os.str();
    }
};

namespace eval_detail {

inline bool supported_mask(const std::filesystem::path& p) {
    const std::string ext = p.extension().string();
    return ext == ".png" || ext == ".pgm" || ext == ".PNG" || ext == ".PGM";
}

inline std::map<std::string, std::filesystem::path> index_masks(
    const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw std::runtime_error("run_eval: not a directory: " + dir.string());
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && supported_mask(entry.path())) {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());  // stable pick when stems collide
    std::map<std::string, std::filesystem::path> index;
    for (const auto& path : files) {
        index.emplace(path.stem().string(), path);
    }
    return index;
}

}  // namespace eval_detail

inline EvalResult run_eval(const std::filesystem::path& pred_dir,
                           const std::filesystem::path& gt_dir,
                           const EvalOptions& options = EvalOptions{}) {
    const auto preds = eval_detail::index_masks(pred_dir);
    const auto gts = eval_detail::index_masks(gt_dir);

    EvalResult result;
    std::vector<std::pair<std::string, std::pair<std::filesystem::path, std::filesystem::path>>>
        matched;
    for (const auto& [stem, path] : preds) {
        auto it = gts.find(stem);
        if (it == gts.end()) {
            result.missing_gt.push_back(stem);
        } else {
            matched.emplace_back(stem, std::make_pair(path, it->second));
        }
    }
    for (const auto& [stem, path] : gts) {
        if (!preds.count(stem)) result.missing_pred.push_back(stem);
    }

    result.scores.resize(matched.size());
    const unsigned workers = options.workers
                                 ? options.workers
                                 : std::max(1u, std::thread::hardware_concurrency());
    std::atomic<std::size_t> cursor{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= matched.size()) break;
            const auto& [stem, paths] = matched[i];
            MaskPair pair;
            pair.prediction = to_unit_tensor(read_gray_image(paths.first));
            pair.ground_truth = to_binary_tensor(read_gray_image(paths.second));
            result.scores[i] = ImageScore{stem, evaluate_pair(pair)};
        }
    };
    if (workers <= 1 || matched.size() <= 1) {
        worker();
    } else {
        std::vector<std::future<void>> pool;
        for (unsigned t = 0; t < workers; ++t) {
            pool.push_back(std::async(std::launch::async, worker));
        }
        for (auto& f : pool) f.get();
    }

    std::vector<double> maes, fs, es, ss;
    for (const ImageScore& s : result.scores) {
        maes.push_back(s.report.mae);
        fs.push_back(s.report.f_max);
        es.push_back(s.report.e_max);
        ss.push_back(s.report.s_measure);
    }
    result.mean_mae = pairwise_mean(maes);
    result.mean_f = pairwise_mean(fs);
    result.mean_e = pairwise_mean(es);
    result.mean_s = pairwise_mean(ss);
    return result;
}

}  // namespace capsroute
