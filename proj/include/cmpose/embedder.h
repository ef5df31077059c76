#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "cmpose/config.h"
#include "cmpose/optim.h"
#include "cmpose/rng.h"
#include "cmpose/tape.h"

namespace cmpose {

// 3-frame grayscale clip, pixel values in [0,1], keyframe in the middle.
struct VideoClip {
    int height = 0;
    int width = 0;
    std::array<std::vector<double>, 3> frames;  // row-major H*W each
    int person_id = 0;

    const std::vector<double>& keyframe() const { return frames[1]; }
};

// Linear patch embedding with learned per-position and per-frame embeddings.
// Stands in for a backbone: splits each frame into non-overlapping PxP
// patches and maps each to a D-dim token, so a clip becomes 3N rows
// (frame-major: t-1 block, then t, then t+1).
struct PatchEmbedder {
    Tensor* patch_w = nullptr;   // (P*P, D)
    Tensor* patch_b = nullptr;   // (D)
    Tensor* pos_emb = nullptr;   // (N, D), shared across frames
    Tensor* time_emb = nullptr;  // (3, D), one row per frame
    int patch = 0, dim = 0, grid_h = 0, grid_w = 0;

    static PatchEmbedder create(ParamStore& params, const Config& cfg);

    int tokens_per_frame() const { return grid_h * grid_w; }

    // (3N, D) feature tokens for the clip
    Var forward(Tape& t, const VideoClip& clip) const;
};

// K learnable keypoint tokens, N(0, 0.02^2) entries.
Tensor init_keypoint_tokens(int k, int dim, Rng& rng);

}  // namespace cmpose
