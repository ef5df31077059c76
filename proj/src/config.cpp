#include "cmpose/config.h"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "cmpose/error.h"

namespace cmpose {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("bad boolean for " + key + ": " + v);
}

struct Field {
    std::function<void(Config&, const std::string&)> set;
    std::function<std::string(const Config&)> get;
};

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

const std::map<std::string, Field>& field_table() {
    static const std::map<std::string, Field> table = [] {
        std::map<std::string, Field> t;
        auto add_int = [&t](const std::string& k, int Config::* p) {
            t[k] = {[p, k](Config& c, const std::string& v) {
                        try {
                            c.*p = std::stoi(v);
                        } catch (const std::exception&) {
                            throw ConfigError("bad integer for " + k + ": " + v);
                        }
                    },
                    [p](const Config& c) { return std::to_string(c.*p); }};
        };
        auto add_dbl = [&t](const std::string& k, double Config::* p) {
            t[k] = {[p, k](Config& c, const std::string& v) {
                        try {
                            c.*p = std::stod(v);
                        } catch (const std::exception&) {
                            throw ConfigError("bad number for " + k + ": " + v);
                        }
                    },
                    [p](const Config& c) { return fmt_double(c.*p); }};
        };
        auto add_u64 = [&t](const std::string& k, std::uint64_t Config::* p) {
            t[k] = {[p, k](Config& c, const std::string& v) {
                        try {
                            c.*p = std::stoull(v);
                        } catch (const std::exception&) {
                            throw ConfigError("bad integer for " + k + ": " + v);
                        }
                    },
                    [p](const Config& c) { return std::to_string(c.*p); }};
        };
        auto add_bool = [&t](const std::string& k, bool Config::* p) {
            t[k] = {[p, k](Config& c, const std::string& v) { c.*p = parse_bool(v, k); },
                    [p](const Config& c) { return (c.*p) ? "true" : "false"; }};
        };
        auto add_str = [&t](const std::string& k, std::string Config::* p) {
            t[k] = {[p](Config& c, const std::string& v) { c.*p = v; },
                    [p](const Config& c) { return c.*p; }};
        };

        add_int("image_height", &Config::image_height);
        add_int("image_width", &Config::image_width);
        add_int("patch_size", &Config::patch_size);
        add_int("embed_dim", &Config::embed_dim);
        add_int("num_keypoints", &Config::num_keypoints);
        add_int("depth", &Config::depth);
        add_int("heads", &Config::heads);
        add_int("mlp_ratio", &Config::mlp_ratio);
        add_dbl("mask_ratio", &Config::mask_ratio);
        add_dbl("noise_ratio", &Config::noise_ratio);
        add_dbl("noise_sigma", &Config::noise_sigma);
        add_u64("corruption_seed_base", &Config::corruption_seed_base);
        add_int("causal_per_keypoint", &Config::causal_per_keypoint);
        add_int("num_clusters", &Config::num_clusters);
        add_int("knn_k", &Config::knn_k);
        add_int("heatmap_height", &Config::heatmap_height);
        add_int("heatmap_width", &Config::heatmap_width);
        add_int("head_hidden", &Config::head_hidden);
        add_dbl("gt_sigma", &Config::gt_sigma);
        add_dbl("lambda", &Config::lambda);
        add_int("epochs", &Config::epochs);
        add_int("batch_size", &Config::batch_size);
        add_u64("seed", &Config::seed);
        t["lr_schedule"] = {[](Config& c, const std::string& v) { c.lr_schedule = v; },
                            [](const Config& c) { return c.lr_schedule; }};
        add_dbl("weight_decay", &Config::weight_decay);
        add_int("max_train_samples", &Config::max_train_samples);
        add_bool("use_mask_task", &Config::use_mask_task);
        add_bool("use_denoise_task", &Config::use_denoise_task);
        add_bool("use_fte", &Config::use_fte);
        add_bool("use_noncausal_tokens", &Config::use_noncausal_tokens);
        add_str("train_data", &Config::train_data);
        add_str("val_data", &Config::val_data);
        add_str("out_dir", &Config::out_dir);
        return t;
    }();
    return table;
}

void set_field(Config& cfg, const std::string& key, const std::string& value) {
    auto it = field_table().find(key);
    if (it == field_table().end()) throw ConfigError("unknown config key: " + key);
    it->second.set(cfg, value);
}

}  // namespace

void Config::validate() const {
    if (image_height <= 0 || image_width <= 0) throw ConfigError("image dims must be positive");
    if (patch_size <= 0) throw ConfigError("patch_size must be positive");
    if (image_height % patch_size != 0 || image_width % patch_size != 0)
        throw ConfigError("image dims " + std::to_string(image_height) + "x" +
                          std::to_string(image_width) + " not divisible by patch_size " +
                          std::to_string(patch_size));
    if (embed_dim <= 0 || num_keypoints <= 0) throw ConfigError("embed_dim/num_keypoints must be positive");
    if (heads <= 0 || embed_dim % heads != 0)
        throw ConfigError("embed_dim " + std::to_string(embed_dim) + " not divisible by heads " +
                          std::to_string(heads));
    if (depth <= 0 || mlp_ratio <= 0) throw ConfigError("depth/mlp_ratio must be positive");
    if (mask_ratio < 0.0 || mask_ratio > 1.0) throw ConfigError("mask_ratio outside [0,1]");
    if (noise_ratio < 0.0 || noise_ratio > 1.0) throw ConfigError("noise_ratio outside [0,1]");
    if (noise_sigma <= 0.0) throw ConfigError("noise_sigma must be positive");
    if (causal_per_keypoint < 1) throw ConfigError("causal_per_keypoint must be >= 1");
    if (causal_per_keypoint * num_keypoints > tokens_per_frame())
        throw ConfigError("n*K = " + std::to_string(causal_per_keypoint * num_keypoints) +
                          " exceeds tokens per frame N = " + std::to_string(tokens_per_frame()));
    if (num_clusters < 0 || knn_k < 1) throw ConfigError("bad num_clusters/knn_k");
    if (heatmap_height <= 0 || heatmap_width <= 0) throw ConfigError("heatmap dims must be positive");
    if (head_hidden <= 0) throw ConfigError("head_hidden must be positive");
    if (gt_sigma <= 0.0) throw ConfigError("gt_sigma must be positive");
    if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
    if (epochs < 0 || batch_size <= 0) throw ConfigError("bad epochs/batch_size");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    parse_lr_schedule();
}

LrSchedule Config::parse_lr_schedule() const {
    LrSchedule s;
    std::stringstream ss(lr_schedule);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        const size_t colon = item.find(':');
        if (colon == std::string::npos)
            throw ConfigError("lr_schedule entry missing ':': " + item);
        int epoch;
        double rate;
        try {
            epoch = std::stoi(item.substr(0, colon));
            rate = std::stod(item.substr(colon + 1));
        } catch (const std::exception&) {
            throw ConfigError("bad lr_schedule entry: " + item);
        }
        if (!s.points.empty() && epoch <= s.points.back().first)
            throw ConfigError("lr_schedule epochs must be ascending");
        s.points.emplace_back(epoch, rate);
    }
    if (s.points.empty()) throw ConfigError("empty lr_schedule");
    return s;
}

std::string Config::to_text() const {
    std::ostringstream os;
    for (const auto& [key, field] : field_table()) os << key << " = " << field.get(*this) << "\n";
    return os.str();
}

Config parse_config_text(const std::string& text) {
    Config cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        set_field(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

Config parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

void apply_override(Config& cfg, const std::string& key_value) {
    const size_t eq = key_value.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + key_value);
    set_field(cfg, trim(key_value.substr(0, eq)), trim(key_value.substr(eq + 1)));
}

}  // namespace cmpose
