// capsroute command-line driver: demo, verify, bench and eval subcommands.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "capsroute/capsroute.hpp"

namespace fs = std::filesystem;

namespace {

struct GlobalArgs {
    std::optional<std::uint64_t> seed;
    std::string config_path;
    std::string out_path;
};

capsroute::PipelineConfig resolve_config(const GlobalArgs& args) {
    capsroute::PipelineConfig cfg;
    bool seed_in_file = false;
    if (!args.config_path.empty()) {
        std::ifstream in(args.config_path);
        if (!in) throw std::runtime_error("cannot open config " + args.config_path);
        nlohmann::json j;
        in >> j;
        cfg = capsroute::PipelineConfig::from_json(j);
        seed_in_file = j.contains("seed");
    }
    // Seed priority: --seed flag, explicit config value, CAPSROUTE_SEED as
    // the default override, then the built-in default.
    if (args.seed) {
        cfg.seed = *args.seed;
    } else if (!seed_in_file) {
        if (const char* env = std::getenv("CAPSROUTE_SEED")) {
            cfg.seed = std::strtoull(env, nullptr, 10);
        }
    }
    return cfg;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

int cmd_demo(const GlobalArgs& args) {
    capsroute::PipelineConfig cfg = resolve_config(args);
    if (!args.out_path.empty()) cfg.output_dir = args.out_path;
    const capsroute::DemoReport report = capsroute::run_demo(cfg, cfg.output_dir);
    const std::string jsonl = report.to_jsonl();
    fs::create_directories(cfg.output_dir);
    write_text((fs::path(cfg.output_dir) / "demo_report.jsonl").string(), jsonl);
    std::cout << jsonl;
    if (!report.all_invariants_passed) {
        std::cerr << "demo: an invariant check failed\n";
        return 1;
    }
    return 0;
}

int cmd_verify(const GlobalArgs& args, bool inject_scan_fault,
               const std::string& discretization) {
    capsroute::PipelineConfig cfg = resolve_config(args);
    capsroute::VerifyOptions opt;
    opt.seed = cfg.seed;
    opt.discretization = discretization.empty()
                             ? cfg.discretization
                             : capsroute::discretization_from_string(discretization);
    opt.inject_scan_fault = inject_scan_fault;

    const auto results = capsroute::run_verify(opt);
    bool all_passed = true;
    for (const capsroute::CheckResult& r : results) {
        const char* status = r.passed ? (r.expected_divergent ? "PASS*" : "PASS") : "FAIL";
        std::cout << "[" << status << "] " << r.name << ": " << r.detail << "\n";
        all_passed = all_passed && r.passed;
    }
    std::cout << (all_passed ? "verify: all checks passed\n" : "verify: FAILURES above\n");
    return all_passed ? 0 : 1;
}

int cmd_bench(const GlobalArgs& args, const std::vector<std::size_t>& cells,
              std::size_t num_types, int iterations, int repetitions,
              std::size_t max_timed, const std::string& csv_path) {
    capsroute::PipelineConfig cfg = resolve_config(args);
    capsroute::BenchConfig bench;
    if (!cells.empty()) bench.grid_cells = cells;
    bench.num_types = num_types;
    bench.iterations = iterations;
    bench.repetitions = repetitions;
    bench.max_timed_cells = max_timed;
    bench.seed = cfg.seed;

    const capsroute::BenchReport report = capsroute::run_bench(bench);
    std::cout << report.to_json().dump(2) << "\n";
    if (!csv_path.empty()) write_text(csv_path, report.to_csv());
    if (!args.out_path.empty()) write_text(args.out_path, report.to_json().dump(2) + "\n");

    // Convenience ratio at the largest timed V.
    for (auto it = bench.grid_cells.rbegin(); it != bench.grid_cells.rend(); ++it) {
        const double t_type = report.median_time(*it, capsroute::RoutingMode::TypeLevel);
        const double t_pixel = report.median_time(*it, capsroute::RoutingMode::PixelLevel);
        if (t_type > 0.0 && t_pixel > 0.0) {
            std::cout << "pixel/type wall-time ratio at V=" << *it << ": "
                      << t_pixel / t_type << "\n";
            break;
        }
    }
    return 0;
}

int cmd_eval(const GlobalArgs& args, const std::string& pred_dir, const std::string& gt_dir,
             bool allow_missing) {
    capsroute::EvalOptions opt;
    opt.allow_missing = allow_missing;
    const capsroute::EvalResult result = capsroute::run_eval(pred_dir, gt_dir, opt);
    std::cout << result.to_table();
    if (!args.out_path.empty()) write_text(args.out_path, result.to_jsonl());

    if (!result.complete()) {
        for (const std::string& name : result.missing_gt) {
            std::cerr << "eval: no ground truth for prediction '" << name << "' (skipped)\n";
        }
        for (const std::string& name : result.missing_pred) {
            std::cerr << "eval: no prediction for ground truth '" << name << "' (skipped)\n";
        }
        if (!allow_missing) return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Type-level capsule routing pipeline: demo, verification, "
                 "routing benchmark and mask evaluation"};
    app.require_subcommand(1);
    app.fallthrough();  // allow the global flags after the subcommand too

    GlobalArgs global;
    std::uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "Seed override (beats CAPSROUTE_SEED)");
    app.add_option("--config", global.config_path, "JSON config file");
    app.add_option("--out", global.out_path, "Output path (report file or directory)");

    auto* demo = app.add_subcommand("demo", "Run the full pipeline on synthetic features");

    auto* verify = app.add_subcommand("verify", "Run the invariant suite");
    bool inject_scan_fault = false;
    std::string verify_discretization;
    verify->add_flag("--inject-scan-fault", inject_scan_fault,
                     "Corrupt one scan order to exercise the bijection checker");
    verify->add_option("--discretization", verify_discretization,
                       "standard | paper-literal");

    auto* bench = app.add_subcommand("bench", "Benchmark type- vs pixel-level routing");
    std::vector<std::size_t> bench_cells;
    std::size_t bench_types = 32;
    int bench_iters = 3;
    int bench_reps = 7;
    std::size_t bench_max_timed = 1024;
    std::string bench_csv;
    bench->add_option("--vs", bench_cells, "Grid sizes V to benchmark")->delimiter(',');
    bench->add_option("--types", bench_types, "Capsule types U");
    bench->add_option("--iters", bench_iters, "EM iterations");
    bench->add_option("--reps", bench_reps, "Timed repetitions (>= 5)");
    bench->add_option("--max-timed-v", bench_max_timed,
                      "Largest V that is wall-timed (larger: analytic count only)");
    bench->add_option("--csv", bench_csv, "Write the bench table as CSV");

    auto* eval = app.add_subcommand("eval", "Score prediction masks against ground truth");
    std::string pred_dir, gt_dir;
    bool allow_missing = false;
    eval->add_option("pred_dir", pred_dir, "Directory of prediction masks")->required();
    eval->add_option("gt_dir", gt_dir, "Directory of ground-truth masks")->required();
    eval->add_flag("--allow-missing", allow_missing,
                   "Exit 0 even when filenames do not fully match");

    CLI11_PARSE(app, argc, argv);
    if (seed_opt->count() > 0) global.seed = seed_value;

    try {
        if (demo->parsed()) return cmd_demo(global);
        if (verify->parsed()) return cmd_verify(global, inject_scan_fault, verify_discretization);
        if (bench->parsed()) {
            return cmd_bench(global, bench_cells, bench_types, bench_iters, bench_reps,
                             bench_max_timed, bench_csv);
        }
        if (eval->parsed()) return cmd_eval(global, pred_dir, gt_dir, allow_missing);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
