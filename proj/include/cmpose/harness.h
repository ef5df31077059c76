#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cmpose/checkpoint.h"
#include "cmpose/config.h"
#include "cmpose/model.h"
#include "cmpose/synthgen.h"

namespace cmpose {

// one metrics CSV row per (epoch, split, tag)
struct MetricsRow {
    int epoch = 0;
    std::string split;  // train | val
    std::string tag;    // all | clean | occlude | blur
    double loss_heatmap = 0.0;
    double loss_mask = 0.0;
    double loss_denoise = 0.0;
    double loss_total = 0.0;
    double pck = 0.0;
};

extern const char* kMetricsHeader;
std::string metrics_row_csv(const MetricsRow& row);

struct EvalTagResult {
    int keypoints_total = 0;
    int keypoints_correct = 0;
    double loss_heatmap_sum = 0.0;
    int samples = 0;

    double pck() const {
        return keypoints_total ? static_cast<double>(keypoints_correct) / keypoints_total : 0.0;
    }
    double loss_heatmap() const { return samples ? loss_heatmap_sum / samples : 0.0; }
};

struct EvalResult {
    std::map<std::string, EvalTagResult> by_tag;  // includes "all"
    // flattened heatmaps per sample, kept only when requested (bit-exactness tests)
    std::vector<std::vector<double>> heatmaps;
};

// PCK@0.2 with bbox-diagonal normalization; runs the primary branch only
// (no corruption plans are ever constructed here)
EvalResult evaluate_model(const CmPoseModel& model, const Dataset& data,
                          std::optional<CorruptionTag> tag_filter = std::nullopt,
                          bool keep_heatmaps = false);

EvalResult evaluate_checkpoint(const std::string& ckpt_path, const std::string& data_path,
                               std::optional<CorruptionTag> tag_filter = std::nullopt);

struct TrainResult {
    std::string checkpoint_path;
    std::string metrics_path;
    std::string manifest_path;
    double initial_total_loss = 0.0;  // epoch-0 (no-update) training objective
    double final_total_loss = 0.0;    // last epoch's average
    double untrained_clean_pck = 0.0;
    double final_clean_pck = 0.0;
    double wall_seconds = 0.0;
};

// Full training run: per-epoch validation rows, rolling checkpoint, run
// manifest. Aborts with ContractError on a non-finite loss, naming the
// offending batch seed.
TrainResult train(const Config& cfg);

// Table-4/Table-5 style ablation grid over shared seeds; writes one CSV
// (variant, seed, pck_clean, pck_corrupted, pck_all) and returns its rows.
struct AblationRow {
    std::string variant;
    std::uint64_t seed;
    double pck_clean, pck_corrupted, pck_all;
};
std::vector<AblationRow> ablate(const Config& base, const std::vector<std::uint64_t>& seeds,
                                const std::string& out_csv);

// short training per (value, seed) of mask_ratio or noise_ratio
struct SweepRow {
    double value;
    std::uint64_t seed;
    double pck;
};
std::vector<SweepRow> sweep_ratios(const Config& base, const std::string& param,
                                   const std::vector<double>& values,
                                   const std::vector<std::uint64_t>& seeds,
                                   const std::string& out_csv);

// Finite-difference audit: per-op checks on random instances plus full-model
// per-parameter-group checks on a toy config with frozen discrete choices.
struct GradCheckReport {
    double tolerance = 1e-4;
    std::vector<std::pair<std::string, double>> op_errors;     // op name -> max rel err
    std::vector<std::pair<std::string, double>> group_errors;  // param group -> max rel err
    bool pass = false;
    std::string to_string() const;
};
GradCheckReport gradcheck(std::uint64_t seed, double tolerance = 1e-4);

// the worked 6-point clustering example, printable by the CLI
std::string cluster_demo_text();

Config gradcheck_toy_config();

}  // namespace cmpose
