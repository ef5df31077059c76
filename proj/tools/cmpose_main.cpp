#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cmpose/harness.h"

using namespace cmpose;

namespace {

Config load_config(const std::string& config_path, const std::vector<std::string>& overrides) {
    Config cfg = config_path.empty() ? Config{} : parse_config_file(config_path);
    for (const std::string& kv : overrides) apply_override(cfg, kv);
    cfg.validate();
    return cfg;
}

std::optional<CorruptionTag> parse_tag(const std::string& s) {
    if (s.empty()) return std::nullopt;
    if (s == "clean") return CorruptionTag::none;
    if (s == "occlude") return CorruptionTag::occlude;
    if (s == "blur") return CorruptionTag::blur;
    throw ConfigError("unknown tag " + s + " (want clean|occlude|blur)");
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) seeds.push_back(std::stoull(item));
    if (seeds.empty()) throw ConfigError("empty seed list");
    return seeds;
}

std::vector<double> parse_values(const std::string& s) {
    std::vector<double> values;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) values.push_back(std::stod(item));
    if (values.empty()) throw ConfigError("empty value list");
    return values;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cmpose: corruption-task multitask pose estimation on synthetic clips"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    std::uint64_t synth_seed = 0;
    int synth_count = 1000, synth_h = 64, synth_w = 48, synth_k = 15;
    std::string synth_mix = "clean:1.0";
    std::string synth_out;
    synth->add_option("--seed", synth_seed, "dataset seed");
    synth->add_option("--count", synth_count, "number of samples")->required();
    synth->add_option("--height", synth_h, "frame height");
    synth->add_option("--width", synth_w, "frame width");
    synth->add_option("--keypoints", synth_k, "keypoints per figure");
    synth->add_option("--corruption-mix", synth_mix, "e.g. clean:0.6,occlude:0.2,blur:0.2");
    synth->add_option("--out", synth_out, "output path")->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model");
    std::string train_config;
    std::vector<std::string> train_sets;
    train_cmd->add_option("--config", train_config, "config file (key = value lines)");
    train_cmd->add_option("--set", train_sets, "override, key=value (repeatable)");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint (PCK@0.2)");
    std::string eval_ckpt, eval_data, eval_tag;
    eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
    eval_cmd->add_option("--data", eval_data, "dataset path")->required();
    eval_cmd->add_option("--tag", eval_tag, "filter: clean|occlude|blur");

    // ablate
    auto* ablate_cmd = app.add_subcommand("ablate", "run the ablation grid");
    std::string ablate_config, ablate_out = "ablation.csv", ablate_seeds = "0,1,2";
    std::vector<std::string> ablate_sets;
    ablate_cmd->add_option("--config", ablate_config, "config file");
    ablate_cmd->add_option("--set", ablate_sets, "override, key=value (repeatable)");
    ablate_cmd->add_option("--seeds", ablate_seeds, "comma-separated seeds");
    ablate_cmd->add_option("--out", ablate_out, "output CSV");

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "ratio sweep");
    std::string sweep_config, sweep_param = "mask_ratio";
    std::string sweep_values = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9";
    std::string sweep_seeds = "0,1,2", sweep_out = "sweep.csv";
    std::vector<std::string> sweep_sets;
    sweep_cmd->add_option("--config", sweep_config, "config file");
    sweep_cmd->add_option("--set", sweep_sets, "override, key=value (repeatable)");
    sweep_cmd->add_option("--param", sweep_param, "mask_ratio or noise_ratio");
    sweep_cmd->add_option("--values", sweep_values, "comma-separated ratios");
    sweep_cmd->add_option("--seeds", sweep_seeds, "comma-separated seeds");
    sweep_cmd->add_option("--out", sweep_out, "output CSV");

    // gradcheck
    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference audit");
    std::uint64_t grad_seed = 0;
    double grad_tol = 1e-4;
    std::string grad_corrupt;
    grad_cmd->add_option("--seed", grad_seed, "seed");
    grad_cmd->add_option("--tol", grad_tol, "relative-error tolerance");
    grad_cmd->add_option("--corrupt-op", grad_corrupt,
                         "negative control: corrupt the named op's backward rule");

    // cluster-demo
    app.add_subcommand("cluster-demo", "print the worked 6-point DPC-KNN example");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            DatasetParams p;
            p.seed = synth_seed;
            p.count = synth_count;
            p.height = synth_h;
            p.width = synth_w;
            p.num_keypoints = synth_k;
            p.mix = parse_corruption_mix(synth_mix);
            Dataset ds = generate_dataset(p);
            save_dataset(ds, synth_out);
            std::printf("wrote %d samples (%dx%d, K=%d) to %s\n", synth_count, synth_h, synth_w,
                        synth_k, synth_out.c_str());
        } else if (train_cmd->parsed()) {
            Config cfg = load_config(train_config, train_sets);
            TrainResult r = train(cfg);
            std::printf("trained in %.1fs; loss %.6f -> %.6f; clean PCK %.4f -> %.4f\n",
                        r.wall_seconds, r.initial_total_loss, r.final_total_loss,
                        r.untrained_clean_pck, r.final_clean_pck);
            std::printf("checkpoint: %s\nmetrics: %s\n", r.checkpoint_path.c_str(),
                        r.metrics_path.c_str());
        } else if (eval_cmd->parsed()) {
            EvalResult ev = evaluate_checkpoint(eval_ckpt, eval_data, parse_tag(eval_tag));
            for (const auto& [tag, res] : ev.by_tag)
                std::printf("%-8s samples %5d  PCK@0.2 %.4f  heatmap_loss %.6f\n", tag.c_str(),
                            res.samples, res.pck(), res.loss_heatmap());
        } else if (ablate_cmd->parsed()) {
            Config cfg = load_config(ablate_config, ablate_sets);
            auto rows = ablate(cfg, parse_seeds(ablate_seeds), ablate_out);
            std::printf("%-14s %-5s %-10s %-12s %-8s\n", "variant", "seed", "pck_clean",
                        "pck_corrupted", "pck_all");
            for (const auto& r : rows)
                std::printf("%-14s %-5llu %-10.4f %-12.4f %-8.4f\n", r.variant.c_str(),
                            static_cast<unsigned long long>(r.seed), r.pck_clean, r.pck_corrupted,
                            r.pck_all);
            std::printf("wrote %s\n", ablate_out.c_str());
        } else if (sweep_cmd->parsed()) {
            Config cfg = load_config(sweep_config, sweep_sets);
            auto rows = sweep_ratios(cfg, sweep_param, parse_values(sweep_values),
                                     parse_seeds(sweep_seeds), sweep_out);
            for (const auto& r : rows)
                std::printf("%s=%.2f seed=%llu pck=%.4f\n", sweep_param.c_str(), r.value,
                            static_cast<unsigned long long>(r.seed), r.pck);
            std::printf("wrote %s\n", sweep_out.c_str());
        } else if (grad_cmd->parsed()) {
            if (!grad_corrupt.empty()) Tape::debug_set_backward_corruption(grad_corrupt, 1.02);
            GradCheckReport report = gradcheck(grad_seed, grad_tol);
            Tape::debug_clear_backward_corruption();
            std::fputs(report.to_string().c_str(), stdout);
            return report.pass ? 0 : 1;
        } else {
            std::fputs(cluster_demo_text().c_str(), stdout);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
