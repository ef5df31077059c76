#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cmpose/optim.h"

namespace cmpose {

// Every knob of the pipeline. Text round-trip: parse_config_file /
// apply_override / to_text. Unknown keys are rejected.
struct Config {
    // geometry / embedding
    int image_height = 64;
    int image_width = 48;
    int patch_size = 8;
    int embed_dim = 64;
    int num_keypoints = 15;

    // criss-cross attention network
    int depth = 1;
    int heads = 4;
    int mlp_ratio = 2;

    // corruption (auxiliary tasks)
    double mask_ratio = 0.45;
    double noise_ratio = 0.45;
    double noise_sigma = 0.5;
    std::uint64_t corruption_seed_base = 9000;

    // fine token enhancement
    int causal_per_keypoint = 1;
    int num_clusters = 8;
    int knn_k = 5;

    // detection head / losses
    int heatmap_height = 64;
    int heatmap_width = 48;
    int head_hidden = 128;
    double gt_sigma = 2.0;
    double lambda = 1.0;

    // training
    int epochs = 12;
    int batch_size = 16;
    std::uint64_t seed = 0;
    std::string lr_schedule = "0:2e-3,5:2e-4,9:2e-5";
    double weight_decay = 1e-4;
    int max_train_samples = 0;  // 0 = use the whole file

    // ablation flags
    bool use_mask_task = true;
    bool use_denoise_task = true;
    bool use_fte = true;
    bool use_noncausal_tokens = true;

    // paths
    std::string train_data;
    std::string val_data;
    std::string out_dir = "runs/default";

    int grid_rows() const { return image_height / patch_size; }
    int grid_cols() const { return image_width / patch_size; }
    int tokens_per_frame() const { return grid_rows() * grid_cols(); }

    // throws ConfigError on any violated precondition
    void validate() const;

    LrSchedule parse_lr_schedule() const;
    std::string to_text() const;
};

Config parse_config_text(const std::string& text);
Config parse_config_file(const std::string& path);
// "key=value" from --set
void apply_override(Config& cfg, const std::string& key_value);

}  // namespace cmpose
