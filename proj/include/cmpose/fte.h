#pragma once

#include <vector>

#include "cmpose/config.h"
#include "cmpose/optim.h"
#include "cmpose/tape.h"

namespace cmpose {

// Fine Token Enhancement: temporal fusion, causal/non-causal split by
// keypoint attention, density-peaks clustering of the non-causal tokens,
// importance-weighted merging, and reassembly. The index choices (top-n,
// centers, assignments) are made on values and treated as stop-gradient;
// token contents, the score matrix, and merge weights stay differentiable.

struct FteParams {
    Tensor* fuse_w = nullptr;  // (3D, D) temporal fusion
    Tensor* fuse_b = nullptr;
    Tensor* q_w = nullptr;     // (D, D) keypoint query projection
    Tensor* q_b = nullptr;
    Tensor* k_w = nullptr;     // (D, D) token key projection
    Tensor* k_b = nullptr;

    static FteParams create(ParamStore& params, const Config& cfg);
};

// (3N, D) frame-major -> (N, D): per position, concatenate the three frame
// vectors and project 3D -> D
Var temporal_fuse(Tape& t, Var tokens3n, const FteParams& p);

// S = softmax_rows(Q_k K_v^T / sqrt(D)), shape (K, N)
Var keypoint_similarity(Tape& t, Var keypoint_tokens, Var fused_tokens, const FteParams& p);

struct SelectionResult {
    std::vector<int> causal_indices;     // length n*K, in selection order
    std::vector<int> noncausal_indices;  // ascending, length N - n*K
};

// keypoints pick their top-n tokens in keypoint order; already-taken tokens
// are skipped, score ties break toward the lower token index
SelectionResult select_causal(const Tensor& scores, int n_per_keypoint);

struct ClusterResult {
    std::vector<double> rho;     // local density per token, in (0,1]
    std::vector<double> delta;   // relative distance per token
    std::vector<int> centers;    // token indices of the L centers (score order)
    std::vector<int> assignment; // per token: index into centers
};

// DPC-KNN over m tokens of width d. k is clamped to m-1, L to m.
// rho_i = exp(-mean of squared distances to the k nearest other tokens);
// delta_i = distance to the nearest strictly denser token, else the maximum
// distance to any token; centers are the top-L of rho*delta (ties toward the
// lower index); every non-center joins its nearest center.
ClusterResult dpc_knn(const Tensor& tokens, int k, int num_clusters);

// merged token per cluster: importance = column mean of S at the member
// token, renormalized within the cluster to sum to 1
Var merge_clusters(Tape& t, Var noncausal_tokens, Var scores,
                   const std::vector<int>& noncausal_indices, const ClusterResult& clusters);

// row concatenation, causal tokens first
Var assemble_fine(Tape& t, Var causal_tokens, Var merged_tokens);

}  // namespace cmpose
