#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "maskforge/runner.hpp"

namespace {

bool parse_shape(const std::string& s, int& w, int& h, int& c) {
    return std::sscanf(s.c_str(), "%dx%dx%d", &w, &h, &c) == 3 && w > 0 && h > 0 && c > 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"maskforge: joint training of selection masks and networks"};
    app.require_subcommand(1);

    std::string config_path, out_dir, masks_path, shape_str;
    std::int64_t seed = -1;
    int jobs = 0;
    double bytes_per_value = 1.0;

    auto* run = app.add_subcommand("run", "run the experiment described by a config file");
    run->add_option("config", config_path, "config file")->required()->check(CLI::ExistingFile);
    run->add_option("--seed", seed, "override the base seed");
    run->add_option("--out", out_dir, "override the output directory");
    run->add_option("--jobs", jobs, "parallel (grid point, run) worker slots");

    auto* report = app.add_subcommand("report", "rebuild report.json from metrics.csv");
    report->add_option("outdir", out_dir, "experiment output directory")
        ->required()
        ->check(CLI::ExistingDirectory);

    auto* cost = app.add_subcommand("cost", "transfer-cost report for serialized final masks");
    cost->add_option("masks", masks_path, "masks_final JSON file")
        ->required()
        ->check(CLI::ExistingFile);
    cost->add_option("shape", shape_str, "dataset shape WxHxC")->required();
    cost->add_option("--bytes-per-value", bytes_per_value, "bytes per raw value (default 1)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            auto rc = maskforge::parse_run_config(config_path);
            maskforge::RunOverrides ov;
            if (seed >= 0) ov.seed = static_cast<std::uint64_t>(seed);
            if (!out_dir.empty()) ov.out_dir = out_dir;
            if (jobs > 0) ov.jobs = jobs;
            const int failed = maskforge::run_experiment(rc, ov);
            if (failed > 0) {
                std::cerr << failed << " run(s) failed; see report.json\n";
                return 2;
            }
            return 0;
        }
        if (*report) {
            maskforge::rebuild_report(out_dir);
            return 0;
        }
        if (*cost) {
            int w = 0, h = 0, c = 0;
            if (!parse_shape(shape_str, w, h, c)) {
                std::cerr << "cost: shape must be WxHxC, got '" << shape_str << "'\n";
                return 1;
            }
            std::cout << maskforge::transfer_cost_report_json(masks_path, w, h, c,
                                                              bytes_per_value);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
