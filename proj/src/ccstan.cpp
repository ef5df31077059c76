#include "cmpose/ccstan.h"

#include <cmath>

namespace cmpose {

AttentionBlock AttentionBlock::create(ParamStore& params, const std::string& prefix, int dim,
                                      int heads, int mlp_ratio) {
    AttentionBlock b;
    b.dim = dim;
    b.heads = heads;
    const int hidden = dim * mlp_ratio;
    b.ln1_g = &params.add(prefix + ".ln1.g", {dim});
    b.ln1_b = &params.add(prefix + ".ln1.b", {dim});
    b.wqkv = &params.add(prefix + ".attn.wqkv", {dim, 3 * dim});
    b.bqkv = &params.add(prefix + ".attn.bqkv", {3 * dim});
    b.wo = &params.add(prefix + ".attn.wo", {dim, dim});
    b.bo = &params.add(prefix + ".attn.bo", {dim});
    b.ln2_g = &params.add(prefix + ".ln2.g", {dim});
    b.ln2_b = &params.add(prefix + ".ln2.b", {dim});
    b.mlp_w1 = &params.add(prefix + ".mlp.w1", {dim, hidden});
    b.mlp_b1 = &params.add(prefix + ".mlp.b1", {hidden});
    b.mlp_w2 = &params.add(prefix + ".mlp.w2", {hidden, dim});
    b.mlp_b2 = &params.add(prefix + ".mlp.b2", {dim});
    return b;
}

Var AttentionBlock::forward(Tape& t, Var x, int seg_len) const {
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim / heads));
    Var h = t.layer_norm_rows(x, t.param(*ln1_g), t.param(*ln1_b));
    Var qkv = t.linear(h, t.param(*wqkv), t.param(*bqkv));
    Var attn = t.mha_segments(qkv, seg_len, heads, scale);
    Var x1 = t.add(x, t.linear(attn, t.param(*wo), t.param(*bo)));
    Var h2 = t.layer_norm_rows(x1, t.param(*ln2_g), t.param(*ln2_b));
    Var mlp = t.linear(t.gelu(t.linear(h2, t.param(*mlp_w1), t.param(*mlp_b1))),
                       t.param(*mlp_w2), t.param(*mlp_b2));
    return t.add(x1, mlp);
}

CrissCrossNet CrissCrossNet::create(ParamStore& params, const Config& cfg) {
    CrissCrossNet net;
    net.n_ = cfg.tokens_per_frame();
    net.k_ = cfg.num_keypoints;
    net.dim_ = cfg.embed_dim;
    for (int d = 0; d < cfg.depth; ++d) {
        net.spatial_.push_back(AttentionBlock::create(params, "ccstan.ds" + std::to_string(d),
                                                      cfg.embed_dim, cfg.heads, cfg.mlp_ratio));
        net.temporal_.push_back(AttentionBlock::create(params, "ccstan.dt" + std::to_string(d),
                                                       cfg.embed_dim, cfg.heads, cfg.mlp_ratio));
    }
    net.fuse_w_ = &params.add("ccstan.fuse.w", {2 * cfg.embed_dim, cfg.embed_dim});
    net.fuse_b_ = &params.add("ccstan.fuse.b", {cfg.embed_dim});
    return net;
}

// grid layout: frame-major rows, each frame holding its N feature tokens
// followed by the K keypoint-token replicas
Var CrissCrossNet::to_position_major(Tape& t, Var grid) const {
    const int per_frame = n_ + k_;
    Var cube = t.reshape(grid, {3, per_frame, dim_});
    return t.reshape(t.permute3(cube, 1, 0, 2), {per_frame * 3, dim_});
}

Var CrissCrossNet::to_frame_major(Tape& t, Var grid) const {
    const int per_frame = n_ + k_;
    Var cube = t.reshape(grid, {per_frame, 3, dim_});
    return t.reshape(t.permute3(cube, 1, 0, 2), {3 * per_frame, dim_});
}

CrissCrossNet::Out CrissCrossNet::forward(Tape& t, Var x) const {
    const Tensor& xv = t.value(x);
    if (xv.rows() != 3 * n_ + k_ || xv.cols() != dim_)
        throw ShapeError("criss-cross input " + shape_str(xv.shape) + ", want (" +
                         std::to_string(3 * n_ + k_) + "," + std::to_string(dim_) + ")");
    const int per_frame = n_ + k_;

    // replicate keypoint tokens into each frame block
    std::vector<int> grid_idx;
    grid_idx.reserve(static_cast<size_t>(3) * per_frame);
    for (int f = 0; f < 3; ++f) {
        for (int j = 0; j < n_; ++j) grid_idx.push_back(f * n_ + j);
        for (int j = 0; j < k_; ++j) grid_idx.push_back(3 * n_ + j);
    }
    Var grid = t.gather_rows(x, grid_idx);

    // pathway A: spatial then temporal
    Var a = grid;
    for (const auto& blk : spatial_) a = blk.forward(t, a, per_frame);
    a = to_position_major(t, a);
    for (const auto& blk : temporal_) a = blk.forward(t, a, 3);
    a = to_frame_major(t, a);

    // pathway B: temporal then spatial
    Var b = to_position_major(t, grid);
    for (const auto& blk : temporal_) b = blk.forward(t, b, 3);
    b = to_frame_major(t, b);
    for (const auto& blk : spatial_) b = blk.forward(t, b, per_frame);

    Var fused = t.linear(t.concat_cols(a, b), t.param(*fuse_w_), t.param(*fuse_b_));

    std::vector<int> feat_idx;
    feat_idx.reserve(static_cast<size_t>(3) * n_);
    for (int f = 0; f < 3; ++f)
        for (int j = 0; j < n_; ++j) feat_idx.push_back(f * per_frame + j);
    Var features = t.gather_rows(fused, feat_idx);

    // average the three keypoint replicas
    std::vector<int> kp_idx(static_cast<size_t>(k_));
    Var kp_sum;
    for (int f = 0; f < 3; ++f) {
        for (int j = 0; j < k_; ++j) kp_idx[static_cast<size_t>(j)] = f * per_frame + n_ + j;
        Var rep = t.gather_rows(fused, kp_idx);
        kp_sum = (f == 0) ? rep : t.add(kp_sum, rep);
    }
    Var keypoints = t.scale(kp_sum, 1.0 / 3.0);
    return {features, keypoints};
}

}  // namespace cmpose
