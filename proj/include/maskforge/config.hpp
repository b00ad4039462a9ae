#pragma once

#include <optional>
#include <string>
#include <vector>

#include "maskforge/mask.hpp"
#include "maskforge/model.hpp"
#include "maskforge/pipeline.hpp"
#include "maskforge/trainer.hpp"

namespace maskforge {

struct DatasetSpec {
    std::string kind;  // synth_redundant_channels | synth_center_target | synth_digits | idx
    std::int64_t n_train = 0, n_test = 0;
    int w = 0, h = 0, k = 0;
    int informative = 1;
    double noise_sigma = 0.1;
    int classes = 0;
    std::string train_images, train_labels, test_images, test_labels;  // idx
    std::optional<std::int64_t> limit_train, limit_test;
};

struct MaskSpecCfg {
    MaskKind kind;
    MaskInit init;
    std::string cost_scheme = "uniform_channel";  // uniform_channel|uniform_pixel|quality|custom
    std::vector<double> custom_costs;
    double sigma = 0.01;
    int group = 0;  // channel_xor group size (0 = whole axis)
};

struct RunConfig {
    DatasetSpec dataset;
    std::vector<LayerSpec> layers;
    std::vector<Stage> stages;
    LossCombine combine = LossCombine::Sum;
    std::vector<MaskSpecCfg> mask_specs;
    TrainConfig train;
    std::string out_dir = "out";
    std::vector<std::pair<double, double>> grid;  // (lambda_init, lambda_fac); empty = train values
    int n_runs = 10;
    int snapshot_interval = 50;
    int jobs = 1;
    double bytes_per_value = 1.0;
};

// Flat sectioned key=value format; '#' starts a comment. Errors carry the
// line number and field name.
RunConfig parse_run_config(const std::string& path);
RunConfig parse_run_config_text(const std::string& text, const std::string& origin);

}  // namespace maskforge
