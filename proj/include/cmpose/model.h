#pragma once

#include <optional>

#include "cmpose/ccstan.h"
#include "cmpose/config.h"
#include "cmpose/corruption.h"
#include "cmpose/embedder.h"
#include "cmpose/fte.h"
#include "cmpose/head.h"

namespace cmpose {

// The full pipeline wired together over one parameter store.
class CmPoseModel {
public:
    explicit CmPoseModel(const Config& cfg);

    // fills every parameter from the init stream of `seed`
    void init_weights(std::uint64_t seed);

    // Discrete choices made during a primary forward. Freezing them lets a
    // finite-difference oracle re-evaluate the loss with the same index
    // structure the analytic gradient assumed.
    struct Trace {
        SelectionResult selection;
        ClusterResult clusters;
        bool has_selection = false;
        bool has_clusters = false;
    };

    struct PrimaryOut {
        Var heatmaps;        // (K, H'*W') logits
        Var feature_tokens;  // embedder output (3N, D), reused by aux tasks
        Var refined_keypoints;
        Trace trace;
    };

    // primary task: embed -> criss-cross -> fte -> head
    PrimaryOut forward_primary(Tape& t, const VideoClip& clip,
                               const Trace* frozen = nullptr) const;

    // auxiliary task: corrupt the given feature tokens, run the shared
    // network, return the reconstruction loss against the originals
    Var forward_aux(Tape& t, Var feature_tokens, const CorruptionPlan& plan) const;

    const Config& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

private:
    Config cfg_;
    ParamStore params_;
    PatchEmbedder embedder_;
    CrissCrossNet net_;
    FteParams fte_;
    HeadParams head_;
    Tensor* keypoint_tokens_ = nullptr;
};

}  // namespace cmpose
