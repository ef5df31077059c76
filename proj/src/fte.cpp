#include "cmpose/fte.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cmpose {

FteParams FteParams::create(ParamStore& params, const Config& cfg) {
    FteParams p;
    const int d = cfg.embed_dim;
    p.fuse_w = &params.add("fte.fuse.w", {3 * d, d});
    p.fuse_b = &params.add("fte.fuse.b", {d});
    p.q_w = &params.add("fte.q.w", {d, d});
    p.q_b = &params.add("fte.q.b", {d});
    p.k_w = &params.add("fte.k.w", {d, d});
    p.k_b = &params.add("fte.k.b", {d});
    return p;
}

Var temporal_fuse(Tape& t, Var tokens3n, const FteParams& p) {
    const Tensor& tv = t.value(tokens3n);
    if (tv.rows() % 3 != 0)
        throw ShapeError("temporal_fuse: row count " + std::to_string(tv.rows()) +
                         " not divisible by 3");
    const int n = tv.rows() / 3;
    Var per_pos = t.concat_cols(t.concat_cols(t.slice_rows(tokens3n, 0, n),
                                              t.slice_rows(tokens3n, n, 2 * n)),
                                t.slice_rows(tokens3n, 2 * n, 3 * n));
    return t.linear(per_pos, t.param(*p.fuse_w), t.param(*p.fuse_b));
}

Var keypoint_similarity(Tape& t, Var keypoint_tokens, Var fused_tokens, const FteParams& p) {
    const int d = t.value(keypoint_tokens).cols();
    Var q = t.linear(keypoint_tokens, t.param(*p.q_w), t.param(*p.q_b));
    Var k = t.linear(fused_tokens, t.param(*p.k_w), t.param(*p.k_b));
    Var logits = t.scale(t.matmul(q, t.transpose(k)), 1.0 / std::sqrt(static_cast<double>(d)));
    return t.softmax_rows(logits);
}

SelectionResult select_causal(const Tensor& scores, int n_per_keypoint) {
    const int k = scores.rows(), n = scores.cols();
    if (n_per_keypoint * k > n)
        throw ConfigError("select_causal: n*K = " + std::to_string(n_per_keypoint * k) +
                          " exceeds N = " + std::to_string(n));
    std::vector<bool> taken(static_cast<size_t>(n), false);
    SelectionResult res;
    res.causal_indices.reserve(static_cast<size_t>(n_per_keypoint) * k);

    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < k; ++i) {
        std::iota(order.begin(), order.end(), 0);
        // score descending, token index ascending on ties
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return scores.at(i, a) > scores.at(i, b);
        });
        int picked = 0;
        for (int cand : order) {
            if (picked == n_per_keypoint) break;
            if (taken[static_cast<size_t>(cand)]) continue;
            taken[static_cast<size_t>(cand)] = true;
            res.causal_indices.push_back(cand);
            ++picked;
        }
    }
    for (int j = 0; j < n; ++j)
        if (!taken[static_cast<size_t>(j)]) res.noncausal_indices.push_back(j);
    return res;
}

ClusterResult dpc_knn(const Tensor& tokens, int k, int num_clusters) {
    const int m = tokens.rows(), d = tokens.cols();
    ClusterResult res;
    if (m == 0) return res;
    const int keff = std::min(k, m - 1);
    const int centers_wanted = std::min(num_clusters, m);

    // pairwise squared distances
    std::vector<double> dist2(static_cast<size_t>(m) * m, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) {
            double s = 0.0;
            for (int c = 0; c < d; ++c) {
                const double diff = tokens.at(i, c) - tokens.at(j, c);
                s += diff * diff;
            }
            dist2[static_cast<size_t>(i) * m + j] = s;
            dist2[static_cast<size_t>(j) * m + i] = s;
        }

    // local density from the k nearest other tokens
    res.rho.resize(static_cast<size_t>(m));
    std::vector<double> others;
    for (int i = 0; i < m; ++i) {
        others.clear();
        for (int j = 0; j < m; ++j)
            if (j != i) others.push_back(dist2[static_cast<size_t>(i) * m + j]);
        std::sort(others.begin(), others.end());
        double s = 0.0;
        for (int j = 0; j < keff; ++j) s += others[static_cast<size_t>(j)];
        res.rho[static_cast<size_t>(i)] = std::exp(keff > 0 ? -s / keff : 0.0);
    }

    // relative distance: nearest strictly denser token, else farthest token
    res.delta.resize(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) {
        double best2 = -1.0;
        for (int j = 0; j < m; ++j) {
            if (res.rho[static_cast<size_t>(j)] <= res.rho[static_cast<size_t>(i)]) continue;
            const double d2 = dist2[static_cast<size_t>(i) * m + j];
            if (best2 < 0.0 || d2 < best2) best2 = d2;
        }
        if (best2 < 0.0) {
            double worst2 = 0.0;
            for (int j = 0; j < m; ++j)
                worst2 = std::max(worst2, dist2[static_cast<size_t>(i) * m + j]);
            best2 = worst2;
        }
        res.delta[static_cast<size_t>(i)] = std::sqrt(best2);
    }

    // centers: top-L of rho*delta, ties toward the lower token index
    std::vector<int> order(static_cast<size_t>(m));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return res.rho[static_cast<size_t>(a)] * res.delta[static_cast<size_t>(a)] >
               res.rho[static_cast<size_t>(b)] * res.delta[static_cast<size_t>(b)];
    });
    res.centers.assign(order.begin(), order.begin() + centers_wanted);

    // assignment: centers to themselves, everything else to the nearest
    // center (squared distance; ties toward the lower center token index)
    std::vector<int> by_token(res.centers);
    std::sort(by_token.begin(), by_token.end());
    std::vector<int> slot_of_token(static_cast<size_t>(m), -1);
    for (size_t s = 0; s < res.centers.size(); ++s)
        slot_of_token[static_cast<size_t>(res.centers[s])] = static_cast<int>(s);

    res.assignment.assign(static_cast<size_t>(m), -1);
    for (int i = 0; i < m; ++i) {
        if (slot_of_token[static_cast<size_t>(i)] >= 0) {
            res.assignment[static_cast<size_t>(i)] = slot_of_token[static_cast<size_t>(i)];
            continue;
        }
        int best_center = -1;
        double best2 = 0.0;
        for (int c : by_token) {
            const double d2 = dist2[static_cast<size_t>(i) * m + c];
            if (best_center < 0 || d2 < best2) {
                best_center = c;
                best2 = d2;
            }
        }
        res.assignment[static_cast<size_t>(i)] = slot_of_token[static_cast<size_t>(best_center)];
    }
    return res;
}

Var merge_clusters(Tape& t, Var noncausal_tokens, Var scores,
                   const std::vector<int>& noncausal_indices, const ClusterResult& clusters) {
    const Tensor& sv = t.value(scores);
    const int k = sv.rows();
    const int m = static_cast<int>(noncausal_indices.size());
    if (t.value(noncausal_tokens).rows() != m)
        throw ContractError("merge_clusters: token/index count mismatch");

    // per-token importance: mean over the K score rows at that token's column
    Var col_mean = t.transpose(
        t.scale(t.matmul(t.constant(Tensor({1, k}, 1.0)), scores), 1.0 / k));  // (N,1)
    Var weights = t.gather_rows(col_mean, noncausal_indices);                  // (m,1)

    std::vector<std::vector<int>> members(clusters.centers.size());
    for (int i = 0; i < m; ++i)
        members[static_cast<size_t>(clusters.assignment[static_cast<size_t>(i)])].push_back(i);

    std::vector<Var> merged;
    for (const auto& group : members) {
        Var w = t.gather_rows(weights, group);                  // (|group|, 1)
        Var wn = t.div_by_scalar(w, t.sum_all(w));              // weights sum to 1
        Var toks = t.gather_rows(noncausal_tokens, group);      // (|group|, D)
        merged.push_back(t.matmul(t.transpose(wn), toks));      // (1, D)
    }
    return t.concat_rows(merged);
}

Var assemble_fine(Tape& t, Var causal_tokens, Var merged_tokens) {
    std::vector<Var> parts{causal_tokens, merged_tokens};
    return t.concat_rows(parts);
}

}  // namespace cmpose
