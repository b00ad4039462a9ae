#pragma once

#include <string>
#include <vector>

#include "maskforge/config.hpp"

namespace maskforge {

struct RunOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<int> jobs;
};

// Builds the (train, test) pair described by the config; idx paths resolve
// against MASKFORGE_DATA_DIR when relative.
std::pair<Dataset, Dataset> build_datasets(const DatasetSpec& spec, std::uint64_t seed);

// Executes grid x n_runs seeded trainings and writes metrics.csv, snapshots/,
// masks_final/ and report.json under the output directory. Returns the number
// of failed runs (partial outputs are preserved and failures recorded).
int run_experiment(const RunConfig& config, const RunOverrides& overrides = {});

// Recomputes the per-grid-point aggregates from <outdir>/metrics.csv and
// rewrites <outdir>/report.json.
void rebuild_report(const std::string& out_dir);

// Transfer-cost report for serialized final masks (masks_final JSON) against
// a dataset shape; emits JSON text.
std::string transfer_cost_report_json(const std::string& masks_json_path, int w, int h, int c,
                                      double bytes_per_value);

}  // namespace maskforge
