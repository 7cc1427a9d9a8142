// Routing-complexity benchmark: analytic multiply-accumulate counts plus
// measured wall times of type-level routing against the dense pixel-level
// baseline across grid sizes.
#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "capsroute/mcg.hpp"
#include "capsroute/routing.hpp"

namespace capsroute {

struct BenchConfig {
    std::vector<std::size_t> grid_cells{64, 256, 1024};  // V values
    std::size_t num_types = 32;                          // U
    int iterations = 3;
    int repetitions = 7;            // timed runs per case, median reported
    std::size_t max_timed_cells = 1024;  // larger V: analytic count only
    std::uint64_t seed = 7;
};

struct BenchRow {
    std::size_t cells = 0;  // V
    RoutingMode mode = RoutingMode::TypeLevel;
    std::uint64_t analytic_macs = 0;
    double median_seconds = 0.0;
    bool timed = false;
};

struct BenchReport {
    std::vector<BenchRow> rows;
    std::size_t num_types = 0;
    int iterations = 0;
    int repetitions = 0;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["num_types"] = num_types;
        j["iterations"] = iterations;
        j["repetitions"] = repetitions;
        for (const BenchRow& row : rows) {
            nlohmann::json r;
            r["v"] = row.cells;
            r["mode"] = row.mode == RoutingMode::TypeLevel ? "type-level" : "pixel-level";
            r["analytic_macs"] = row.analytic_macs;
            r["timed"] = row.timed;
            if (row.timed) r["median_seconds"] = row.median_seconds;
            j["rows"].push_back(std::move(r));
        }
        // Pixel-over-type ratios per V: the analytic one always, the measured
        // one where both sides were timed.
        for (const BenchRow& row : rows) {
            if (row.mode != RoutingMode::TypeLevel) continue;
            const std::uint64_t pixel_macs = macs(row.cells, RoutingMode::PixelLevel);
            nlohmann::json r;
            r["v"] = row.cells;
            r["macs_ratio"] =
                static_cast<double>(pixel_macs) / static_cast<double>(row.analytic_macs);
            const double t_type = median_time(row.cells, RoutingMode::TypeLevel);
            const double t_pixel = median_time(row.cells, RoutingMode::PixelLevel);
            if (t_type > 0.0 && t_pixel > 0.0) r["time_ratio"] = t_pixel / t_type;
            j["ratios"].push_back(std::move(r));
        }
        return j;
    }

    std::string to_csv() const {
        std::ostringstream os;
        os << "v,mode,analytic_macs,timed,median_seconds\n";
        for (const BenchRow& row : rows) {
            os << row.cells << ','
               << (row.mode == RoutingMode::TypeLevel ? "type-level" : "pixel-level") << ','
               << row.analytic_macs << ',' << (row.timed ? 1 : 0) << ',';
            if (row.timed) os << row.median_seconds;
            os << '\n';
        }
        return os.str();
    }

    /// Median measured time of one mode at one V; negative when not timed.
    double median_time(std::size_t cells, RoutingMode mode) const {
        for (const BenchRow& row : rows) {
            if (row.cells == cells && row.mode == mode) {
                return row.timed ? row.median_seconds : -1.0;
            }
        }
        return -1.0;
    }

    std::uint64_t macs(std::size_t cells, RoutingMode mode) const {
        for (const BenchRow& row : rows) {
            if (row.cells == cells && row.mode == mode) return row.analytic_macs;
        }
        return 0;
    }
};

namespace bench_detail {

/// Factor V into the squarest h x w rectangle.
inline std::pair<std::size_t, std::size_t> grid_dims(std::size_t cells) {
    std::size_t h = static_cast<std::size_t>(std::sqrt(static_cast<double>(cells)));
    while (h > 1 && cells % h != 0) --h;
    return {h, cells / h};
}

template <typename Fn>
double median_seconds(Fn&& fn, int repetitions) {
    fn();  // warm-up, discarded
    std::vector<double> times;
    times.reserve(static_cast<std::size_t>(repetitions));
    for (int r = 0; r < repetitions; ++r) {
        const auto start = std::chrono::steady_clock::now();
        fn();
        const auto stop = std::chrono::steady_clock::now();
        times.push_back(std::chrono::duration<double>(stop - start).count());
    }
    std::sort(times.begin(), times.end());
    const std::size_t mid = times.size() / 2;
    if (times.size() % 2 == 1) return times[mid];
    return 0.5 * (times[mid - 1] + times[mid]);
}

}  // namespace bench_detail

/// Type-level input: U mamba capsules from a fixed small grid. The capsule
/// count, and hence the routing cost, does not depend on the benchmarked V.
inline TypeCapsuleSet bench_type_input(std::uint64_t seed, std::size_t num_types) {
    const FeatureGrid features = synth_features(seed, 8, 8, 32);
    const ParamBundle params(seed);
    const PrimaryProjection proj = PrimaryProjection::seeded(params, 32, num_types);
    const CapsuleGrid grid = primary_capsules(features, proj);
    const McgParams mcg_params = McgParams::seeded(params, kCapsuleDim, kPoseDim);
    const McgResult mcg = mamba_capsules(grid, mcg_params);
    TypeCapsuleSet set;
    set.pose = Tensor({num_types, kPoseDim});
    set.activation = Tensor({num_types});
    for (std::size_t u = 0; u < num_types; ++u) {
        for (std::size_t o = 0; o < kPoseDim; ++o) set.pose(u, o) = mcg.capsules[0].pose(o, u);
        set.activation(u) = mcg.capsules[0].activation(0, u);
    }
    return set;
}

/// Pixel-level input: a V-cell capsule grid with U types per cell.
inline CapsuleGrid bench_pixel_input(std::uint64_t seed, std::size_t cells,
                                     std::size_t num_types) {
    const auto [h, w] = bench_detail::grid_dims(cells);
    const std::uint64_t key = rng::stream_key(seed, "bench.pixel");
    std::uint64_t counter = 0;
    CapsuleGrid grid;
    grid.height = h;
    grid.width = w;
    grid.num_types = num_types;
    grid.pose = Tensor({h, w, kPoseDim, num_types});
    for (double& v : grid.pose.data()) {
        v = rng::symmetric_double(rng::draw_u64(key, counter++), 1.0);
    }
    grid.activation = Tensor({h, w, kActDim, num_types});
    for (double& a : grid.activation.data()) {
        a = 0.05 + 0.9 * rng::unit_double(rng::draw_u64(key, counter++));
    }
    return grid;
}

inline BenchReport run_bench(const BenchConfig& cfg) {
    if (cfg.repetitions < 5) {
        throw std::invalid_argument("run_bench: at least 5 repetitions are required");
    }
    if (cfg.grid_cells.empty()) {
        throw std::invalid_argument("run_bench: no grid sizes given");
    }
    RoutingConfig routing_cfg;
    routing_cfg.iterations = cfg.iterations;

    BenchReport report;
    report.num_types = cfg.num_types;
    report.iterations = cfg.iterations;
    report.repetitions = cfg.repetitions;

    const ParamBundle params(cfg.seed);
    const TypeCapsuleSet type_input = bench_type_input(cfg.seed, cfg.num_types);
    const Tensor type_w =
        seeded_transforms(params, "bench.type.w", cfg.num_types, cfg.num_types);

    for (const std::size_t cells : cfg.grid_cells) {
        const bool timed = cells <= cfg.max_timed_cells;

        BenchRow type_row;
        type_row.cells = cells;
        type_row.mode = RoutingMode::TypeLevel;
        type_row.analytic_macs = routing_op_count(cells, cfg.num_types, cfg.num_types,
                                                  kPoseDim, cfg.iterations,
                                                  RoutingMode::TypeLevel);
        if (timed) {
            type_row.timed = true;
            type_row.median_seconds = bench_detail::median_seconds(
                [&] { em_routing(type_input, type_w, routing_cfg); }, cfg.repetitions);
        }
        report.rows.push_back(type_row);

        BenchRow pixel_row;
        pixel_row.cells = cells;
        pixel_row.mode = RoutingMode::PixelLevel;
        pixel_row.analytic_macs = routing_op_count(cells, cfg.num_types, cfg.num_types,
                                                   kPoseDim, cfg.iterations,
                                                   RoutingMode::PixelLevel);
        if (timed) {
            const CapsuleGrid grid = bench_pixel_input(cfg.seed, cells, cfg.num_types);
            const Tensor pixel_w = seeded_transforms(
                params, "bench.pixel.w", cells * cfg.num_types, cfg.num_types);
            pixel_row.timed = true;
            pixel_row.median_seconds = bench_detail::median_seconds(
                [&] { em_routing_pixel(grid, pixel_w, routing_cfg); }, cfg.repetitions);
        }
        report.rows.push_back(pixel_row);
    }

    // The type-level count must be identical at every V.
    std::uint64_t first_type_macs = 0;
    for (const BenchRow& row : report.rows) {
        if (row.mode != RoutingMode::TypeLevel) continue;
        if (first_type_macs == 0) {
            first_type_macs = row.analytic_macs;
        } else if (row.analytic_macs != first_type_macs) {
            throw std::logic_error("run_bench: type-level count varies with V");
        }
    }
    return report;
}

}  // namespace capsroute
