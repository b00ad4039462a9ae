#include "maskforge/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace maskforge {

namespace {

struct Entry {
    std::string value;
    int line = 0;
    mutable bool used = false;
};

using Section = std::map<std::string, Entry>;

struct ParsedFile {
    std::map<std::string, Section> sections;
    std::string origin;

    [[noreturn]] void fail(int line, const std::string& msg) const {
        throw std::runtime_error(origin + ":" + std::to_string(line) + ": " + msg);
    }

    const Entry* find(const std::string& section, const std::string& key) const {
        auto s = sections.find(section);
        if (s == sections.end()) return nullptr;
        auto e = s->second.find(key);
        if (e == s->second.end()) return nullptr;
        e->second.used = true;
        return &e->second;
    }

    std::string require(const std::string& section, const std::string& key) const {
        const Entry* e = find(section, key);
        if (!e)
            throw std::runtime_error(origin + ": missing required field '" + key +
                                     "' in section [" + section + "]");
        return e->value;
    }

    std::string get(const std::string& section, const std::string& key,
                    const std::string& fallback) const {
        const Entry* e = find(section, key);
        return e ? e->value : fallback;
    }

    double get_double(const std::string& section, const std::string& key, double fallback) const {
        const Entry* e = find(section, key);
        if (!e) return fallback;
        double v = 0.0;
        auto [p, ec] = std::from_chars(e->value.data(), e->value.data() + e->value.size(), v);
        if (ec != std::errc{} || p != e->value.data() + e->value.size())
            fail(e->line, "field '" + key + "': expected a number, got '" + e->value + "'");
        return v;
    }

    std::int64_t get_int(const std::string& section, const std::string& key,
                         std::int64_t fallback) const {
        const Entry* e = find(section, key);
        if (!e) return fallback;
        std::int64_t v = 0;
        auto [p, ec] = std::from_chars(e->value.data(), e->value.data() + e->value.size(), v);
        if (ec != std::errc{} || p != e->value.data() + e->value.size())
            fail(e->line, "field '" + key + "': expected an integer, got '" + e->value + "'");
        return v;
    }

    bool get_bool(const std::string& section, const std::string& key, bool fallback) const {
        const Entry* e = find(section, key);
        if (!e) return fallback;
        if (e->value == "on" || e->value == "true" || e->value == "1") return true;
        if (e->value == "off" || e->value == "false" || e->value == "0") return false;
        fail(e->line, "field '" + key + "': expected on/off, got '" + e->value + "'");
    }
};

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

ParsedFile tokenize(const std::string& text, const std::string& origin) {
    ParsedFile pf;
    pf.origin = origin;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') pf.fail(lineno, "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) pf.fail(lineno, "empty section name");
            pf.sections[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) pf.fail(lineno, "expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) pf.fail(lineno, "empty key");
        if (section.empty()) pf.fail(lineno, "field '" + key + "' outside any section");
        pf.sections[section][key] = Entry{value, lineno, false};
    }
    return pf;
}

std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream is(s);
    std::vector<std::string> out;
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, sep)) out.push_back(tok);
    return out;
}

double to_double(const std::string& s, const ParsedFile& pf, const std::string& what) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw std::runtime_error(pf.origin + ": " + what + ": expected a number, got '" + s + "'");
    return v;
}

int to_int(const std::string& s, const ParsedFile& pf, const std::string& what) {
    return static_cast<int>(to_double(s, pf, what));
}

std::vector<LayerSpec> parse_layers(const std::string& text, const ParsedFile& pf) {
    std::vector<LayerSpec> layers;
    for (const auto& tok : split_ws(text)) {
        auto parts = split_on(tok, ':');
        const std::string& op = parts[0];
        if (op == "relu") {
            layers.push_back(LayerSpec::relu());
        } else if (op == "maxpool") {
            layers.push_back(LayerSpec::maxpool());
        } else if (op == "flatten") {
            layers.push_back(LayerSpec::flatten());
        } else if (op == "dense") {
            if (parts.size() != 2)
                throw std::runtime_error(pf.origin + ": dense layer needs dense:<units>");
            layers.push_back(LayerSpec::dense(to_int(parts[1], pf, "dense units")));
        } else if (op == "conv") {
            if (parts.size() < 3 || parts.size() > 5)
                throw std::runtime_error(pf.origin +
                                         ": conv layer needs conv:<out>:<kernel>[:stride[:pad]]");
            const int out = to_int(parts[1], pf, "conv out channels");
            const int kernel = to_int(parts[2], pf, "conv kernel");
            const int stride = parts.size() > 3 ? to_int(parts[3], pf, "conv stride") : 1;
            const int pad = parts.size() > 4 ? to_int(parts[4], pf, "conv pad") : 0;
            layers.push_back(LayerSpec::conv(out, kernel, stride, pad));
        } else {
            throw std::runtime_error(pf.origin + ": unknown layer '" + op + "'");
        }
    }
    if (layers.empty()) throw std::runtime_error(pf.origin + ": [model] layers is empty");
    return layers;
}

std::vector<Stage> parse_stages(const std::string& text, const ParsedFile& pf) {
    std::vector<Stage> stages;
    for (const auto& tok : split_ws(text)) {
        auto parts = split_on(tok, ':');
        const std::string& op = parts[0];
        if (op == "extend") {
            if (parts.size() != 2)
                throw std::runtime_error(pf.origin + ": extend stage needs extend:<q1,q2,...>");
            std::vector<double> qs;
            for (const auto& q : split_on(parts[1], ',')) qs.push_back(to_double(q, pf, "quality"));
            stages.push_back(Stage::extend(std::move(qs)));
        } else if (op == "mask") {
            if (parts.size() != 2)
                throw std::runtime_error(pf.origin + ": mask stage needs mask:<id>");
            stages.push_back(Stage::mask(to_int(parts[1], pf, "mask id")));
        } else if (op == "merge") {
            if (parts.size() != 2)
                throw std::runtime_error(pf.origin + ": merge stage needs merge:<group>");
            stages.push_back(Stage::merge(to_int(parts[1], pf, "merge group")));
        } else {
            throw std::runtime_error(pf.origin + ": unknown stage '" + op + "'");
        }
    }
    return stages;
}

MaskSpecCfg parse_mask_section(const ParsedFile& pf, const std::string& section) {
    MaskSpecCfg cfg;
    const std::string kind = pf.require(section, "kind");
    if (kind == "channel_any") {
        cfg.kind = MaskKind::channel_any();
    } else if (kind == "channel_xor") {
        cfg.kind = MaskKind::channel_xor();
    } else if (kind == "pixel_any") {
        cfg.kind = MaskKind::pixel_any();
    } else if (kind == "pixel_xor") {
        cfg.kind = MaskKind::pixel_xor();
    } else if (kind.rfind("block_any:", 0) == 0) {
        auto dims = split_on(kind.substr(10), 'x');
        if (dims.size() != 2)
            throw std::runtime_error(pf.origin + ": block_any needs block_any:<gw>x<gh>");
        cfg.kind = MaskKind::block_any(to_int(dims[0], pf, "grid"), to_int(dims[1], pf, "grid"));
    } else {
        throw std::runtime_error(pf.origin + ": [" + section + "] unknown mask kind '" + kind + "'");
    }

    const std::string init = pf.get(section, "init", "all");
    if (init == "all") {
        cfg.init = MaskInit::all();
    } else if (init.rfind("index:", 0) == 0) {
        cfg.init = MaskInit::at_index(to_int(init.substr(6), pf, "init index"));
    } else if (init.rfind("pattern:", 0) == 0) {
        std::vector<std::uint8_t> pat;
        for (char ch : init.substr(8)) {
            if (ch == '0' || ch == '1') pat.push_back(ch == '1');
        }
        cfg.init = MaskInit::from_pattern(std::move(pat));
    } else {
        throw std::runtime_error(pf.origin + ": [" + section + "] unknown init '" + init + "'");
    }

    std::string scheme = pf.get(section, "cost", "");
    if (scheme.empty())
        scheme = cfg.kind.is_any() && cfg.kind.variant != MaskVariant::ChannelAny
                     ? "uniform_pixel"
                     : "uniform_channel";
    if (scheme.rfind("custom:", 0) == 0) {
        for (const auto& c : split_on(scheme.substr(7), ','))
            cfg.custom_costs.push_back(to_double(c, pf, "custom cost"));
        scheme = "custom";
    }
    if (scheme != "uniform_channel" && scheme != "uniform_pixel" && scheme != "quality" &&
        scheme != "custom")
        throw std::runtime_error(pf.origin + ": [" + section + "] unknown cost scheme '" + scheme +
                                 "'");
    cfg.cost_scheme = scheme;
    cfg.sigma = pf.get_double(section, "sigma", 0.01);
    cfg.group = static_cast<int>(pf.get_int(section, "group", 0));
    return cfg;
}

}  // namespace

RunConfig parse_run_config_text(const std::string& text, const std::string& origin) {
    ParsedFile pf = tokenize(text, origin);
    RunConfig rc;

    // [dataset]
    rc.dataset.kind = pf.require("dataset", "kind");
    rc.dataset.n_train = pf.get_int("dataset", "n_train", 0);
    rc.dataset.n_test = pf.get_int("dataset", "n_test", 0);
    rc.dataset.w = static_cast<int>(pf.get_int("dataset", "w", 0));
    rc.dataset.h = static_cast<int>(pf.get_int("dataset", "h", 0));
    rc.dataset.k = static_cast<int>(pf.get_int("dataset", "channels", 0));
    rc.dataset.informative = static_cast<int>(pf.get_int("dataset", "informative", 1));
    rc.dataset.noise_sigma = pf.get_double("dataset", "noise_sigma", 0.1);
    rc.dataset.classes = static_cast<int>(pf.get_int("dataset", "classes", 0));
    rc.dataset.train_images = pf.get("dataset", "train_images", "");
    rc.dataset.train_labels = pf.get("dataset", "train_labels", "");
    rc.dataset.test_images = pf.get("dataset", "test_images", "");
    rc.dataset.test_labels = pf.get("dataset", "test_labels", "");
    if (const auto limit = pf.get_int("dataset", "limit_train", -1); limit >= 0)
        rc.dataset.limit_train = limit;
    if (const auto limit = pf.get_int("dataset", "limit_test", -1); limit >= 0)
        rc.dataset.limit_test = limit;

    // [model]
    rc.layers = parse_layers(pf.require("model", "layers"), pf);

    // [pipeline]
    rc.stages = parse_stages(pf.get("pipeline", "stages", "mask:0"), pf);
    const std::string combine = pf.get("pipeline", "combine", "sum");
    if (combine == "sum") {
        rc.combine = LossCombine::Sum;
    } else if (combine == "product") {
        rc.combine = LossCombine::Product;
    } else {
        throw std::runtime_error(origin + ": [pipeline] combine must be sum or product");
    }

    // [mask N]
    int mask_count = 0;
    for (const auto& s : rc.stages)
        if (s.kind == Stage::Kind::Mask) mask_count = std::max(mask_count, s.mask_id + 1);
    for (int i = 0; i < mask_count; ++i) {
        const std::string section = "mask " + std::to_string(i);
        if (pf.sections.find(section) == pf.sections.end())
            throw std::runtime_error(origin + ": missing section [" + section +
                                     "] referenced by the pipeline");
        rc.mask_specs.push_back(parse_mask_section(pf, section));
    }

    // [train]
    rc.train.n_epoch = static_cast<int>(pf.get_int("train", "epochs", 0));
    rc.train.batch_size = static_cast<int>(pf.get_int("train", "batch_size", 128));
    rc.train.lambda_init = pf.get_double("train", "lambda_init", 0.1);
    rc.train.lambda_fac = pf.get_double("train", "lambda_fac", 1.1);
    rc.train.patience = static_cast<int>(pf.get_int("train", "patience", 5));
    rc.train.plateau_rel_threshold = pf.get_double("train", "plateau_rel_threshold", 5e-3);
    rc.train.tau_init = pf.get_double("train", "tau_init", 10.0);
    rc.train.tau_decay = pf.get_double("train", "tau_decay", 0.5);
    rc.train.tau_min = pf.get_double("train", "tau_min", 0.01);
    rc.train.mask_lr = pf.get_double("train", "mask_lr", 0.01);
    rc.train.model_lr = pf.get_double("train", "model_lr", 0.0001);
    rc.train.pretrain_epochs = static_cast<int>(pf.get_int("train", "pretrain_epochs", 0));
    rc.train.adapt_schedules = pf.get_bool("train", "adapt", true);
    rc.train.seed = static_cast<std::uint64_t>(pf.get_int("train", "seed", 0));
    if (const Entry* e = pf.find("train", "q_stop")) {
        rc.train.q_stop = to_double(e->value, pf, "q_stop");
    }

    // [run]
    rc.out_dir = pf.get("run", "out", "out");
    rc.n_runs = static_cast<int>(pf.get_int("run", "n_runs", 10));
    rc.snapshot_interval = static_cast<int>(pf.get_int("run", "snapshot_interval", 50));
    rc.train.timing = pf.get_bool("run", "timing", true);
    rc.jobs = static_cast<int>(pf.get_int("run", "jobs", 1));
    rc.bytes_per_value = pf.get_double("run", "bytes_per_value", 1.0);
    if (const Entry* e = pf.find("run", "grid")) {
        for (const auto& tok : split_ws(e->value)) {
            auto pair = split_on(tok, ':');
            if (pair.size() != 2)
                throw std::runtime_error(origin +
                                         ": grid entries are <lambda_init>:<lambda_fac> pairs");
            rc.grid.emplace_back(to_double(pair[0], pf, "grid lambda_init"),
                                 to_double(pair[1], pf, "grid lambda_fac"));
        }
    }

    if (rc.n_runs < 1) throw std::runtime_error(origin + ": n_runs must be >= 1");
    if (rc.jobs < 1) throw std::runtime_error(origin + ": jobs must be >= 1");
    return rc;
}

RunConfig parse_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_run_config_text(ss.str(), path);
}

}  // namespace maskforge
