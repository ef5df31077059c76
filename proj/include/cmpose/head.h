#pragma once

#include <utility>
#include <vector>

#include "cmpose/config.h"
#include "cmpose/optim.h"
#include "cmpose/tape.h"

namespace cmpose {

// K per-keypoint heatmaps at a fixed resolution, row-major per map.
struct HeatmapSet {
    int num_keypoints = 0;
    int height = 0;
    int width = 0;
    std::vector<double> maps;  // K * H * W
    bool is_ground_truth = false;

    double at(int k, int y, int x) const {
        return maps[(static_cast<size_t>(k) * height + y) * width + x];
    }
    double& at(int k, int y, int x) {
        return maps[(static_cast<size_t>(k) * height + y) * width + x];
    }
};

// Cross-attention from the K keypoint tokens into the fine tokens, then a
// shared two-layer MLP mapping each attended keypoint vector to H'*W' logits.
struct HeadParams {
    Tensor *q_w, *q_b, *k_w, *k_b, *v_w, *v_b;
    Tensor *mlp_w1, *mlp_b1, *mlp_w2, *mlp_b2;

    static HeadParams create(ParamStore& params, const Config& cfg);
};

// returns (K, H'*W') heatmap logits
Var decode_heatmaps(Tape& t, Var fine_tokens, Var keypoint_tokens, const HeadParams& p,
                    const Config& cfg);

// mean squared error over all K*H'*W' entries
Var heatmap_loss(Tape& t, Var predicted, Var ground_truth);

// L_H + lambda * (L_mask + L_denoise)
Var total_loss(Tape& t, Var heatmap, Var mask, Var denoise, double lambda);

// per-keypoint (row, col) of the maximum entry; ties resolve to the
// row-major first occurrence
std::vector<std::pair<int, int>> argmax_decode(const Tensor& heatmaps, int height, int width);

}  // namespace cmpose
