#pragma once

#include <string>
#include <vector>

#include "cmpose/config.h"
#include "cmpose/optim.h"
#include "cmpose/tape.h"

namespace cmpose {

// Pre-norm transformer block: x + attn(LN(x)), then x + mlp(LN(x)).
// seg_len picks the attention scope: tokens attend only within their own
// segment of rows, so the same block serves as spatial (seg_len = tokens per
// frame) or temporal (seg_len = frames per position) attention.
struct AttentionBlock {
    Tensor *ln1_g, *ln1_b, *wqkv, *bqkv, *wo, *bo;
    Tensor *ln2_g, *ln2_b, *mlp_w1, *mlp_b1, *mlp_w2, *mlp_b2;
    int dim = 0, heads = 0;

    static AttentionBlock create(ParamStore& params, const std::string& prefix, int dim,
                                 int heads, int mlp_ratio);
    Var forward(Tape& t, Var x, int seg_len) const;
};

// The shared multitask network: two pathways over a (frame x position) grid,
// spatial-then-temporal and temporal-then-spatial, fused by channel
// concatenation and a 2D->D projection. The K keypoint tokens are replicated
// into each frame before the grid reshape and their three refined replicas
// averaged afterwards.
class CrissCrossNet {
public:
    static CrissCrossNet create(ParamStore& params, const Config& cfg);

    struct Out {
        Var features;   // (3N, D) frame-major
        Var keypoints;  // (K, D)
    };
    // x: (3N+K, D) -- feature tokens then keypoint tokens
    Out forward(Tape& t, Var x) const;

    Tensor* fusion_w() const { return fuse_w_; }

private:
    std::vector<AttentionBlock> spatial_, temporal_;
    Tensor* fuse_w_ = nullptr;  // (2D, D)
    Tensor* fuse_b_ = nullptr;
    int n_ = 0, k_ = 0, dim_ = 0;

    Var to_position_major(Tape& t, Var grid) const;
    Var to_frame_major(Tape& t, Var grid) const;
};

}  // namespace cmpose
