#include "cmpose/model.h"

#include <cmath>

#include "cmpose/rng.h"

namespace cmpose {

CmPoseModel::CmPoseModel(const Config& cfg) : cfg_(cfg) {
    cfg_.validate();
    embedder_ = PatchEmbedder::create(params_, cfg_);
    keypoint_tokens_ = &params_.add("kp_tokens", {cfg_.num_keypoints, cfg_.embed_dim});
    net_ = CrissCrossNet::create(params_, cfg_);
    fte_ = FteParams::create(params_, cfg_);
    head_ = HeadParams::create(params_, cfg_);
}

void CmPoseModel::init_weights(std::uint64_t seed) {
    Rng rng(seed, RngStream::init);
    const int d = cfg_.embed_dim;
    for (size_t i = 0; i < params_.size(); ++i) {
        const std::string& name = params_.name(i);
        Tensor& p = params_.tensor(i);
        const std::string leaf = name.substr(name.rfind('.') + 1);
        if (leaf == "g") {  // layer-norm gains
            std::fill(p.data.begin(), p.data.end(), 1.0);
        } else if (leaf.starts_with("b")) {  // biases
            std::fill(p.data.begin(), p.data.end(), 0.0);
        } else if (name == "kp_tokens") {
            p = init_keypoint_tokens(cfg_.num_keypoints, d, rng);
        } else if (name == "ccstan.fuse.w") {
            // [I; I]/2 plus small noise: the untrained criss-cross output
            // starts near the identity over its input tokens
            std::fill(p.data.begin(), p.data.end(), 0.0);
            for (int j = 0; j < d; ++j) {
                p.at(j, j) = 0.5;
                p.at(d + j, j) = 0.5;
            }
            for (double& v : p.data) v += rng.normal(0.0, 0.01);
        } else {
            for (double& v : p.data) v = rng.normal(0.0, 0.02);
        }
    }
}

CmPoseModel::PrimaryOut CmPoseModel::forward_primary(Tape& t, const VideoClip& clip,
                                                     const Trace* frozen) const {
    const int n = cfg_.tokens_per_frame();
    const int k = cfg_.num_keypoints;

    Var fv = embedder_.forward(t, clip);
    Var fk = t.param(*keypoint_tokens_);
    std::vector<Var> xin{fv, fk};
    auto [features, keypoints] = net_.forward(t, t.concat_rows(xin));

    PrimaryOut out;
    out.feature_tokens = fv;
    out.refined_keypoints = keypoints;

    Var fused = temporal_fuse(t, features, fte_);  // (N, D)
    if (!cfg_.use_fte) {
        // without FTE the temporal-fusion output feeds the head directly
        out.heatmaps = decode_heatmaps(t, fused, keypoints, head_, cfg_);
        return out;
    }

    Var scores = keypoint_similarity(t, keypoints, fused, fte_);  // (K, N)
    if (frozen && frozen->has_selection)
        out.trace.selection = frozen->selection;
    else
        out.trace.selection = select_causal(t.value(scores), cfg_.causal_per_keypoint);
    out.trace.has_selection = true;
    const SelectionResult& sel = out.trace.selection;

    Var causal = t.gather_rows(fused, sel.causal_indices);

    const int m = n - static_cast<int>(sel.causal_indices.size());
    Var fine = causal;
    if (cfg_.use_noncausal_tokens && m > 0) {
        Var noncausal = t.gather_rows(fused, sel.noncausal_indices);
        const int clusters_wanted = std::min(cfg_.num_clusters, m);
        if (frozen && frozen->has_clusters)
            out.trace.clusters = frozen->clusters;
        else
            out.trace.clusters = dpc_knn(t.value(noncausal), cfg_.knn_k, clusters_wanted);
        out.trace.has_clusters = true;
        Var merged =
            merge_clusters(t, noncausal, scores, sel.noncausal_indices, out.trace.clusters);
        fine = assemble_fine(t, causal, merged);
    }

    out.heatmaps = decode_heatmaps(t, fine, keypoints, head_, cfg_);
    return out;
}

Var CmPoseModel::forward_aux(Tape& t, Var feature_tokens, const CorruptionPlan& plan) const {
    Var corrupted = (plan.kind == CorruptionKind::mask) ? apply_mask(t, feature_tokens, plan)
                                                        : apply_noise(t, feature_tokens, plan);
    Var fk = t.param(*keypoint_tokens_);
    std::vector<Var> xin{corrupted, fk};
    auto [features, keypoints] = net_.forward(t, t.concat_rows(xin));
    (void)keypoints;
    return recon_loss(t, features, feature_tokens, plan);
}

}  // namespace cmpose
