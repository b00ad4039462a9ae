#include "maskforge/runner.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <thread>

#include <json.hpp>

#include "maskforge/formats.hpp"

namespace maskforge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string data_path(const std::string& p) {
    if (p.empty() || fs::path(p).is_absolute()) return p;
    if (const char* root = std::getenv("MASKFORGE_DATA_DIR")) {
        return (fs::path(root) / p).string();
    }
    return p;
}

}  // namespace

std::pair<Dataset, Dataset> build_datasets(const DatasetSpec& spec, std::uint64_t seed) {
    if (spec.kind == "synth_redundant_channels") {
        auto train = synth_redundant_channels(spec.n_train, spec.w, spec.h, spec.k,
                                              spec.informative, spec.noise_sigma, spec.classes,
                                              seed);
        auto test = synth_redundant_channels(spec.n_test, spec.w, spec.h, spec.k, spec.informative,
                                             spec.noise_sigma, spec.classes, seed + 1);
        return {std::move(train), std::move(test)};
    }
    if (spec.kind == "synth_center_target") {
        auto train = synth_center_target(spec.n_train, spec.w, spec.h, spec.k, spec.classes, seed);
        auto test =
            synth_center_target(spec.n_test, spec.w, spec.h, spec.k, spec.classes, seed + 1);
        return {std::move(train), std::move(test)};
    }
    if (spec.kind == "synth_digits") {
        auto train = synth_digits(spec.n_train, seed);
        auto test = synth_digits(spec.n_test, seed + 1);
        return {std::move(train), std::move(test)};
    }
    if (spec.kind == "idx") {
        auto train = load_idx(data_path(spec.train_images), data_path(spec.train_labels),
                              spec.limit_train);
        auto test =
            load_idx(data_path(spec.test_images), data_path(spec.test_labels), spec.limit_test);
        return {std::move(train), std::move(test)};
    }
    throw std::runtime_error("dataset: unknown kind '" + spec.kind + "'");
}

namespace {

// Precomputes extend stages into the dataset via the f32 cache format, so the
// training path always sees identical values regardless of cache hits.
Dataset bake_extends(const Dataset& ds, const std::vector<Stage>& stages,
                     const std::string& cache_stem) {
    Dataset cur = ds;
    int version_axis = 1;
    for (const auto& s : stages) {
        if (s.kind != Stage::Kind::Extend) continue;
        const int v = static_cast<int>(s.qualities.size());
        auto vals = extend_values(cur.images, static_cast<int>(cur.size()), cur.w, cur.h, cur.c,
                                  s.qualities);
        cur.images = std::move(vals);
        version_axis *= v;
        cur.c *= v;
        break;  // only the first extend is bakeable (masks change channels after it)
    }
    if (version_axis == 1) return cur;

    const std::string img_path = cache_stem + ".images.mskd";
    if (!fs::exists(img_path)) {
        // dims record the version axis separately: [n, w, h, c_src, v]
        save_mskd(img_path,
                  {static_cast<int>(cur.size()), cur.w, cur.h, cur.c / version_axis, version_axis},
                  cur.images);
    }
    auto [dims, vals] = load_mskd(img_path);
    if (dims.size() != 5 || dims[0] != cur.size() || dims[3] * dims[4] != cur.c)
        throw std::runtime_error("bake_extends: stale cache at " + img_path);
    cur.images = std::move(vals);
    return cur;
}

Pipeline make_pipeline(const RunConfig& rc, const Dataset& baked_train, bool baked) {
    Pipeline p;
    p.stages = rc.stages;
    p.combine = rc.combine;
    p.in_w = baked_train.w;
    p.in_h = baked_train.h;
    p.in_c = baked_train.c;
    if (baked) {
        bool first = true;
        for (auto& s : p.stages) {
            if (s.kind == Stage::Kind::Extend && first) {
                s.pre_applied = true;
                first = false;
            }
        }
    }
    return p;
}

std::vector<double> scheme_costs(const MaskSpecCfg& cfg, const SelectionMask& mask,
                                 const std::vector<Stage>& stages, int stage_index) {
    const auto elements = static_cast<std::size_t>(mask.element_count());
    if (cfg.cost_scheme == "uniform_channel") {
        if (mask.kind.variant != MaskVariant::ChannelAny &&
            mask.kind.variant != MaskVariant::ChannelXor)
            throw std::runtime_error("mask cost: uniform_channel needs a channel mask");
        return std::vector<double>(elements, 1.0 / static_cast<double>(mask.k));
    }
    if (cfg.cost_scheme == "uniform_pixel") {
        if (mask.kind.variant == MaskVariant::ChannelXor)
            throw std::runtime_error("mask cost: uniform_pixel needs a spatial mask");
        return std::vector<double>(elements, 1.0 / static_cast<double>(elements));
    }
    if (cfg.cost_scheme == "quality") {
        if (mask.kind.variant != MaskVariant::ChannelXor)
            throw std::runtime_error("mask cost: quality scheme needs channel_xor");
        // find the extend feeding this mask
        const std::vector<double>* qualities = nullptr;
        for (int i = stage_index - 1; i >= 0; --i) {
            if (stages[i].kind == Stage::Kind::Extend) {
                qualities = &stages[i].qualities;
                break;
            }
        }
        if (!qualities)
            throw std::runtime_error("mask cost: quality scheme needs a preceding extend stage");
        const int v = static_cast<int>(qualities->size());
        if (mask.k % v != 0 || mask.group_size != v)
            throw std::runtime_error("mask cost: quality scheme expects group size = versions");
        const int c_src = mask.k / v;
        std::vector<double> costs(elements);
        for (int ch = 0; ch < c_src; ++ch)
            for (int qi = 0; qi < v; ++qi)
                costs[static_cast<std::size_t>(ch) * v + qi] =
                    (*qualities)[qi] / (c_src * 100.0);
        return costs;
    }
    if (cfg.custom_costs.size() != elements)
        throw std::runtime_error("mask cost: custom list has " +
                                 std::to_string(cfg.custom_costs.size()) + " entries, mask needs " +
                                 std::to_string(elements));
    return cfg.custom_costs;
}

struct BuiltRun {
    Model model;
    Pipeline pipeline;
    std::vector<SelectionMask> masks;
    std::vector<int> mask_stage_index;  // pipeline stage index per mask id
};

BuiltRun build_run(const RunConfig& rc, const Dataset& train, bool baked, std::uint64_t seed) {
    BuiltRun br;
    br.pipeline = make_pipeline(rc, train, baked);

    // channel counts entering each mask stage
    int c = br.pipeline.in_c;
    std::vector<int> mask_channels(rc.mask_specs.size(), -1);
    br.mask_stage_index.assign(rc.mask_specs.size(), -1);
    for (std::size_t si = 0; si < br.pipeline.stages.size(); ++si) {
        const auto& s = br.pipeline.stages[si];
        if (s.kind == Stage::Kind::Extend) {
            if (!s.pre_applied) c *= static_cast<int>(s.qualities.size());
        } else if (s.kind == Stage::Kind::MergeSum) {
            c /= s.group;
        } else {
            mask_channels[s.mask_id] = c;
            br.mask_stage_index[s.mask_id] = static_cast<int>(si);
        }
    }

    for (std::size_t mi = 0; mi < rc.mask_specs.size(); ++mi) {
        const auto& cfg = rc.mask_specs[mi];
        if (mask_channels[mi] < 0)
            throw std::runtime_error("pipeline: mask " + std::to_string(mi) + " never applied");
        int group = cfg.group;
        if (cfg.kind.variant == MaskVariant::ChannelXor && group == 0) {
            // a preceding extend implies per-source-channel version groups
            for (int i = br.mask_stage_index[mi] - 1; i >= 0; --i) {
                if (br.pipeline.stages[i].kind == Stage::Kind::Extend) {
                    group = static_cast<int>(br.pipeline.stages[i].qualities.size());
                    break;
                }
            }
        }
        auto mask = init_mask(cfg.kind, mask_channels[mi], train.w, train.h, cfg.init, cfg.sigma,
                              seed + 7919 * (mi + 1), group);
        mask.costs = scheme_costs(cfg, mask, br.pipeline.stages, br.mask_stage_index[mi]);
        br.masks.push_back(std::move(mask));
    }

    ModelSpec mspec;
    mspec.layers = rc.layers;
    mspec.in_w = train.w;
    mspec.in_h = train.h;
    mspec.in_c = br.pipeline.validate(br.masks);
    // final dense layer defines the class count
    for (auto it = rc.layers.rbegin(); it != rc.layers.rend(); ++it) {
        if (it->kind == LayerSpec::Kind::Dense) {
            mspec.classes = it->units;
            break;
        }
    }
    br.model = build_model(mspec, seed);
    return br;
}

json mask_to_json(const SelectionMask& mask, const MaskSpecCfg& cfg, const TensorPtr& keep,
                  const std::vector<Stage>& stages, int stage_index) {
    json j;
    j["kind"] = mask.kind.name();
    j["k"] = mask.k;
    j["w"] = mask.w;
    j["h"] = mask.h;
    j["grid_w"] = mask.kind.grid_w;
    j["grid_h"] = mask.kind.grid_h;
    j["group"] = mask.group_size;
    j["scheme"] = cfg.cost_scheme;
    json qualities = json::array();
    if (cfg.cost_scheme == "quality") {
        for (int i = stage_index - 1; i >= 0; --i) {
            if (stages[i].kind == Stage::Kind::Extend) {
                for (double q : stages[i].qualities) qualities.push_back(q);
                break;
            }
        }
    }
    j["qualities"] = qualities;
    json bits = json::array();
    for (double v : keep->values) bits.push_back(v != 0.0 ? 1 : 0);
    j["keep"] = bits;
    return j;
}

struct RunOutput {
    int run_id = 0;
    int grid_index = 0;
    std::uint64_t seed = 0;
    std::vector<MetricsRow> rows;
    double final_acc = 0.0;
    double final_q = 0.0;
    bool failed = false;
    std::string error;
};

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

int run_experiment(const RunConfig& config, const RunOverrides& overrides) {
    RunConfig rc = config;
    if (overrides.seed) rc.train.seed = *overrides.seed;
    if (overrides.out_dir) rc.out_dir = *overrides.out_dir;
    if (overrides.jobs) rc.jobs = *overrides.jobs;

    const fs::path out(rc.out_dir);
    fs::create_directories(out);
    fs::create_directories(out / "snapshots");
    fs::create_directories(out / "masks_final");

    auto [train_raw, test_raw] = build_datasets(rc.dataset, rc.train.seed);
    bool has_extend = false;
    for (const auto& s : rc.stages) has_extend |= s.kind == Stage::Kind::Extend;
    Dataset train = train_raw, test = test_raw;
    if (has_extend) {
        fs::create_directories(out / "cache");
        train = bake_extends(train_raw, rc.stages, (out / "cache" / "train").string());
        test = bake_extends(test_raw, rc.stages, (out / "cache" / "test").string());
    }

    std::vector<std::pair<double, double>> grid = rc.grid;
    if (grid.empty()) grid.emplace_back(rc.train.lambda_init, rc.train.lambda_fac);

    struct Job {
        int run_id, grid_index, run_index;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (int g = 0; g < static_cast<int>(grid.size()); ++g) {
        for (int r = 0; r < rc.n_runs; ++r) {
            jobs.push_back({g * rc.n_runs + r, g, r,
                            rc.train.seed + 1000ULL * static_cast<std::uint64_t>(g) +
                                static_cast<std::uint64_t>(r)});
        }
    }

    std::vector<RunOutput> outputs(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t ji = next.fetch_add(1);
            if (ji >= jobs.size()) return;
            const Job& job = jobs[ji];
            RunOutput& ro = outputs[ji];
            ro.run_id = job.run_id;
            ro.grid_index = job.grid_index;
            ro.seed = job.seed;
            try {
                TrainConfig tc = rc.train;
                tc.seed = job.seed;
                tc.lambda_init = grid[job.grid_index].first;
                tc.lambda_fac = grid[job.grid_index].second;

                auto br = build_run(rc, train, has_extend, job.seed);

                TrainHooks hooks;
                const fs::path snapdir = out / "snapshots" / ("run" + std::to_string(job.run_id));
                if (rc.snapshot_interval > 0) {
                    fs::create_directories(snapdir);
                    // epoch 0: the initialization's noise-free masks
                    std::vector<TensorPtr> keeps;
                    for (const auto& s : br.pipeline.stages) {
                        if (s.kind != Stage::Kind::Mask) continue;
                        auto hard = final_discretize(br.masks[s.mask_id]);
                        keeps.push_back(keep_indicator(hard, br.masks[s.mask_id]));
                    }
                    for (std::size_t mi = 0; mi < keeps.size(); ++mi)
                        write_mask_pgm(keeps[mi], (snapdir / ("epoch0_mask" + std::to_string(mi)))
                                                      .string());
                    hooks.on_epoch_masks = [&, snapdir](int epoch,
                                                        const std::vector<TensorPtr>& keeps_now) {
                        if (epoch % rc.snapshot_interval != 0) return;
                        for (std::size_t mi = 0; mi < keeps_now.size(); ++mi)
                            write_mask_pgm(keeps_now[mi],
                                           (snapdir / ("epoch" + std::to_string(epoch) + "_mask" +
                                                       std::to_string(mi)))
                                               .string());
                    };
                }

                auto result = learn_selection_masks(br.model, br.pipeline, br.masks, train, test,
                                                    tc, &hooks);

                for (const auto& em : result.history) {
                    ro.rows.push_back({job.run_id, em.epoch, em.lambda, em.tau, em.train_acc,
                                       em.test_acc, em.task_loss, em.mask_q, em.lambda_stepped,
                                       em.seconds});
                }
                std::vector<TensorPtr> keeps;
                json masks_json;
                masks_json["run_id"] = job.run_id;
                masks_json["seed"] = job.seed;
                json arr = json::array();
                std::size_t mi = 0;
                for (const auto& s : br.pipeline.stages) {
                    if (s.kind != Stage::Kind::Mask) continue;
                    auto keep = keep_indicator(result.final_hard[mi], br.masks[s.mask_id]);
                    keeps.push_back(keep);
                    arr.push_back(mask_to_json(br.masks[s.mask_id], rc.mask_specs[s.mask_id], keep,
                                               br.pipeline.stages,
                                               br.mask_stage_index[s.mask_id]));
                    write_mask_pgm(keep, (out / "masks_final" /
                                          ("run" + std::to_string(job.run_id) + "_mask" +
                                           std::to_string(mi)))
                                             .string());
                    ++mi;
                }
                masks_json["masks"] = arr;
                std::ofstream mo(out / "masks_final" / ("run" + std::to_string(job.run_id) + ".json"));
                mo << masks_json.dump(2) << '\n';

                if (!result.history.empty()) {
                    ro.final_acc = result.history.back().test_acc;
                    ro.final_q = result.history.back().mask_q;
                } else {
                    // 0-epoch run: evaluate the initialization
                    ro.final_acc = evaluate(br.model, br.pipeline, br.masks, keeps, test);
                    ro.final_q = pipeline_hard_cost(br.pipeline, br.masks, result.final_hard);
                }
            } catch (const std::exception& e) {
                ro.failed = true;
                ro.error = e.what();
            }
        }
    };

    const int nthreads = std::min<int>(rc.jobs, static_cast<int>(jobs.size()));
    if (nthreads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    // metrics.csv in run order regardless of scheduling
    std::vector<MetricsRow> all_rows;
    for (const auto& ro : outputs)
        all_rows.insert(all_rows.end(), ro.rows.begin(), ro.rows.end());
    write_metrics_csv(all_rows, (out / "metrics.csv").string());

    // report.json: per-grid-point aggregates + run table + failures
    json report;
    report["config_seed"] = rc.train.seed;
    report["n_runs"] = rc.n_runs;
    json runs = json::array();
    json failures = json::array();
    int failed = 0;
    for (const auto& ro : outputs) {
        json r;
        r["run_id"] = ro.run_id;
        r["grid_index"] = ro.grid_index;
        r["seed"] = ro.seed;
        r["failed"] = ro.failed;
        if (ro.failed) {
            r["error"] = ro.error;
            json f;
            f["run_id"] = ro.run_id;
            f["error"] = ro.error;
            failures.push_back(f);
            ++failed;
        } else {
            r["final_test_acc"] = ro.final_acc;
            r["final_q"] = ro.final_q;
        }
        runs.push_back(r);
    }
    report["runs"] = runs;
    report["failures"] = failures;
    json grid_stats = json::array();
    for (int g = 0; g < static_cast<int>(grid.size()); ++g) {
        std::vector<double> accs, qs;
        for (const auto& ro : outputs) {
            if (ro.grid_index == g && !ro.failed) {
                accs.push_back(ro.final_acc);
                qs.push_back(ro.final_q);
            }
        }
        json gs;
        gs["lambda_init"] = grid[g].first;
        gs["lambda_fac"] = grid[g].second;
        gs["completed_runs"] = accs.size();
        gs["mean_final_acc"] = mean_of(accs);
        gs["std_final_acc"] = stddev_of(accs);
        gs["mean_final_q"] = mean_of(qs);
        gs["std_final_q"] = stddev_of(qs);
        grid_stats.push_back(gs);
    }
    report["grid"] = grid_stats;
    std::ofstream ro(out / "report.json");
    ro << report.dump(2) << '\n';
    return failed;
}

void rebuild_report(const std::string& out_dir) {
    const fs::path out(out_dir);
    auto rows = parse_metrics_csv((out / "metrics.csv").string());

    // group final epochs per run
    std::map<int, MetricsRow> finals;
    for (const auto& r : rows) {
        auto it = finals.find(r.run_id);
        if (it == finals.end() || r.epoch > it->second.epoch) finals[r.run_id] = r;
    }

    // preserve the grid mapping from the existing report when available
    std::map<int, int> run_grid;
    json old;
    {
        std::ifstream is(out / "report.json");
        if (is) {
            is >> old;
            if (old.contains("runs")) {
                for (const auto& r : old["runs"])
                    run_grid[r["run_id"].get<int>()] = r["grid_index"].get<int>();
            }
        }
    }

    std::map<int, std::vector<double>> accs, qs;
    for (const auto& [run_id, row] : finals) {
        const int g = run_grid.count(run_id) ? run_grid[run_id] : 0;
        accs[g].push_back(row.test_acc);
        qs[g].push_back(row.mask_q);
    }
    json report;
    report["source"] = "metrics.csv";
    json grid_stats = json::array();
    for (const auto& [g, acc] : accs) {
        json gs;
        gs["grid_index"] = g;
        gs["completed_runs"] = acc.size();
        gs["mean_final_acc"] = mean_of(acc);
        gs["std_final_acc"] = stddev_of(acc);
        gs["mean_final_q"] = mean_of(qs[g]);
        gs["std_final_q"] = stddev_of(qs[g]);
        grid_stats.push_back(gs);
    }
    report["grid"] = grid_stats;
    std::ofstream os(out / "report.json");
    os << report.dump(2) << '\n';
}

std::string transfer_cost_report_json(const std::string& masks_json_path, int w, int h, int c,
                                      double bytes_per_value) {
    std::ifstream is(masks_json_path);
    if (!is) throw std::runtime_error("cost: cannot open " + masks_json_path);
    json doc;
    is >> doc;
    if (!doc.contains("masks")) throw std::runtime_error("cost: no masks in " + masks_json_path);

    json report;
    json per_mask = json::array();
    for (const auto& m : doc["masks"]) {
        const std::string kind = m["kind"].get<std::string>();
        const int k = m["k"].get<int>();
        const auto& keep = m["keep"];
        std::int64_t selected = 0;
        for (const auto& b : keep) {
            const int v = b.get<int>();
            if (v != 0 && v != 1) throw std::runtime_error("cost: mask is not binary");
            selected += v;
        }
        const auto elements = static_cast<std::int64_t>(keep.size());

        json entry;
        entry["kind"] = kind;
        entry["selected"] = selected;
        entry["elements"] = elements;
        entry["selected_fraction"] = static_cast<double>(selected) / elements;

        const double plane = static_cast<double>(w) * h;
        double before = 0.0, payload = 0.0, overhead = 0.0;
        if (kind == "pixel_any" || kind == "pixel_xor") {
            before = static_cast<double>(elements) * bytes_per_value;
            payload = static_cast<double>(selected) * bytes_per_value;
            overhead = std::ceil(static_cast<double>(elements) / 8.0);
        } else if (kind == "channel_any") {
            before = k * plane * bytes_per_value;
            payload = static_cast<double>(selected) * plane * bytes_per_value;
        } else if (kind == "channel_xor") {
            before = k * plane * bytes_per_value;
            if (m["scheme"] == "quality" && !m["qualities"].empty()) {
                // selected version's per-channel estimate: w*h*q/100
                const auto qualities = m["qualities"].get<std::vector<double>>();
                const int group = m["group"].get<int>();
                for (std::int64_t e = 0; e < elements; ++e) {
                    if (keep[e].get<int>() == 0) continue;
                    const int qi = static_cast<int>(e % group);
                    payload += plane * qualities[qi] / 100.0 * bytes_per_value;
                }
            } else {
                payload = static_cast<double>(selected) * plane * bytes_per_value;
            }
        } else {  // block_any
            const int gw = m["grid_w"].get<int>(), gh = m["grid_h"].get<int>();
            before = k * plane * bytes_per_value;
            const int cw = w / gw, ch = h / gh;
            for (std::int64_t e = 0; e < elements; ++e) {
                if (keep[e].get<int>() == 0) continue;
                const auto cell = e / k;
                const int gx = static_cast<int>(cell / gh), gy = static_cast<int>(cell % gh);
                const int pw = gx == gw - 1 ? w - gx * cw : cw;
                const int ph = gy == gh - 1 ? h - gy * ch : ch;
                payload += static_cast<double>(pw) * ph * bytes_per_value;
            }
            overhead = std::ceil(static_cast<double>(elements) / 8.0);
        }
        entry["bytes_before"] = before;
        entry["payload_bytes"] = payload;
        entry["overhead_bytes"] = overhead;
        entry["payload_ratio"] = before > 0.0 ? payload / before : 0.0;
        per_mask.push_back(entry);
    }
    report["shape"] = {{"w", w}, {"h", h}, {"c", c}};
    report["bytes_per_value"] = bytes_per_value;
    report["masks"] = per_mask;
    return report.dump(2) + "\n";
}

}  // namespace maskforge
