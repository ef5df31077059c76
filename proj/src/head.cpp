#include "cmpose/head.h"

#include <cmath>

namespace cmpose {

HeadParams HeadParams::create(ParamStore& params, const Config& cfg) {
    HeadParams p;
    const int d = cfg.embed_dim;
    const int out = cfg.heatmap_height * cfg.heatmap_width;
    p.q_w = &params.add("head.q.w", {d, d});
    p.q_b = &params.add("head.q.b", {d});
    p.k_w = &params.add("head.k.w", {d, d});
    p.k_b = &params.add("head.k.b", {d});
    p.v_w = &params.add("head.v.w", {d, d});
    p.v_b = &params.add("head.v.b", {d});
    p.mlp_w1 = &params.add("head.mlp.w1", {d, cfg.head_hidden});
    p.mlp_b1 = &params.add("head.mlp.b1", {cfg.head_hidden});
    p.mlp_w2 = &params.add("head.mlp.w2", {cfg.head_hidden, out});
    p.mlp_b2 = &params.add("head.mlp.b2", {out});
    return p;
}

Var decode_heatmaps(Tape& t, Var fine_tokens, Var keypoint_tokens, const HeadParams& p,
                    const Config& cfg) {
    const int d = cfg.embed_dim;
    Var q = t.linear(keypoint_tokens, t.param(*p.q_w), t.param(*p.q_b));
    Var k = t.linear(fine_tokens, t.param(*p.k_w), t.param(*p.k_b));
    Var v = t.linear(fine_tokens, t.param(*p.v_w), t.param(*p.v_b));
    Var probs = t.softmax_rows(
        t.scale(t.matmul(q, t.transpose(k)), 1.0 / std::sqrt(static_cast<double>(d))));
    Var attended = t.add(t.matmul(probs, v), keypoint_tokens);  // residual stream
    Var hidden = t.gelu(t.linear(attended, t.param(*p.mlp_w1), t.param(*p.mlp_b1)));
    return t.linear(hidden, t.param(*p.mlp_w2), t.param(*p.mlp_b2));
}

Var heatmap_loss(Tape& t, Var predicted, Var ground_truth) {
    const Tensor& pv = t.value(predicted);
    const Tensor& gv = t.value(ground_truth);
    if (!same_shape(pv, gv))
        throw ShapeError("heatmap_loss: " + shape_str(pv.shape) + " vs " + shape_str(gv.shape));
    return t.mse(predicted, ground_truth);
}

Var total_loss(Tape& t, Var heatmap, Var mask, Var denoise, double lambda) {
    if (lambda < 0.0) throw ContractError("total_loss: lambda must be >= 0");
    return t.add(heatmap, t.scale(t.add(mask, denoise), lambda));
}

std::vector<std::pair<int, int>> argmax_decode(const Tensor& heatmaps, int height, int width) {
    const int k = heatmaps.rows();
    if (heatmaps.cols() != height * width)
        throw ShapeError("argmax_decode: " + shape_str(heatmaps.shape) + " vs " +
                         std::to_string(height) + "x" + std::to_string(width));
    std::vector<std::pair<int, int>> out(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) {
        const double* row = heatmaps.data.data() + static_cast<size_t>(i) * height * width;
        int best = 0;
        for (int j = 1; j < height * width; ++j)
            if (row[j] > row[best]) best = j;  // strict: first occurrence wins
        out[static_cast<size_t>(i)] = {best / width, best % width};
    }
    return out;
}

}  // namespace cmpose
