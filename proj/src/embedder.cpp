#include "cmpose/embedder.h"

namespace cmpose {

PatchEmbedder PatchEmbedder::create(ParamStore& params, const Config& cfg) {
    if (cfg.image_height % cfg.patch_size != 0 || cfg.image_width % cfg.patch_size != 0)
        throw ConfigError("image " + std::to_string(cfg.image_height) + "x" +
                          std::to_string(cfg.image_width) + " not divisible by patch size " +
                          std::to_string(cfg.patch_size));
    PatchEmbedder e;
    e.patch = cfg.patch_size;
    e.dim = cfg.embed_dim;
    e.grid_h = cfg.image_height / cfg.patch_size;
    e.grid_w = cfg.image_width / cfg.patch_size;
    const int n = e.grid_h * e.grid_w;
    e.patch_w = &params.add("embed.patch.w", {cfg.patch_size * cfg.patch_size, cfg.embed_dim});
    e.patch_b = &params.add("embed.patch.b", {cfg.embed_dim});
    e.pos_emb = &params.add("embed.pos", {n, cfg.embed_dim});
    e.time_emb = &params.add("embed.time", {3, cfg.embed_dim});
    return e;
}

Var PatchEmbedder::forward(Tape& t, const VideoClip& clip) const {
    if (clip.height != grid_h * patch || clip.width != grid_w * patch)
        throw ShapeError("clip " + std::to_string(clip.height) + "x" +
                         std::to_string(clip.width) + " does not match embedder grid");
    const int n = tokens_per_frame();
    const int pp = patch * patch;

    Var w = t.param(*patch_w);
    Var b = t.param(*patch_b);
    Var pos = t.param(*pos_emb);
    Var time = t.param(*time_emb);

    std::vector<Var> frame_tokens;
    for (int f = 0; f < 3; ++f) {
        // rows are patches in grid row-major order, columns the P*P pixels
        Tensor patches({n, pp});
        const std::vector<double>& img = clip.frames[f];
        for (int gy = 0; gy < grid_h; ++gy)
            for (int gx = 0; gx < grid_w; ++gx) {
                const int row = gy * grid_w + gx;
                for (int py = 0; py < patch; ++py)
                    for (int px = 0; px < patch; ++px)
                        patches.at(row, py * patch + px) =
                            img[static_cast<size_t>(gy * patch + py) * clip.width + gx * patch +
                                px];
            }
        Var tokens = t.linear(t.constant(std::move(patches)), w, b);
        tokens = t.add(tokens, pos);
        tokens = t.add_rowvec(tokens, t.slice_rows(time, f, f + 1));
        frame_tokens.push_back(tokens);
    }
    return t.concat_rows(frame_tokens);
}

Tensor init_keypoint_tokens(int k, int dim, Rng& rng) {
    if (k < 1 || dim < 1) throw ConfigError("init_keypoint_tokens: K and D must be >= 1");
    Tensor t({k, dim});
    for (double& v : t.data) v = rng.normal(0.0, 0.02);
    t.requires_grad = true;
    return t;
}

}  // namespace cmpose
