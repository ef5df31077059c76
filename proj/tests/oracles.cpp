#include "oracles.h"

#include <algorithm>
#include <cmath>

namespace cmpose::testing {

OracleDpc oracle_dpc_knn(const Tensor& tokens, int k, int num_clusters) {
    const int m = tokens.rows(), d = tokens.cols();
    OracleDpc res;
    if (m == 0) return res;
    const int keff = std::min(k, m - 1);
    const int wanted = std::min(num_clusters, m);

    auto dist2 = [&](int i, int j) {
        double s = 0.0;
        for (int c = 0; c < d; ++c) {
            const double diff = tokens.at(i, c) - tokens.at(j, c);
            s += diff * diff;
        }
        return s;
    };

    res.rho.resize(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) {
        // k nearest others by full sort of the distance list
        std::vector<double> ds;
        for (int j = 0; j < m; ++j)
            if (j != i) ds.push_back(dist2(i, j));
        std::sort(ds.begin(), ds.end());
        double acc = 0.0;
        for (int j = 0; j < keff; ++j) acc += ds[static_cast<size_t>(j)];
        res.rho[static_cast<size_t>(i)] = keff > 0 ? std::exp(-acc / keff) : std::exp(0.0);
    }

    res.delta.resize(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) {
        bool denser_exists = false;
        double nearest2 = 0.0;
        for (int j = 0; j < m; ++j) {
            if (res.rho[static_cast<size_t>(j)] > res.rho[static_cast<size_t>(i)]) {
                const double d2 = dist2(i, j);
                if (!denser_exists || d2 < nearest2) nearest2 = d2;
                denser_exists = true;
            }
        }
        if (!denser_exists) {
            for (int j = 0; j < m; ++j) nearest2 = std::max(nearest2, dist2(i, j));
        }
        res.delta[static_cast<size_t>(i)] = std::sqrt(nearest2);
    }

    // top-L by score via repeated argmax (strict >, so earlier index wins ties)
    std::vector<bool> chosen(static_cast<size_t>(m), false);
    for (int pick = 0; pick < wanted; ++pick) {
        int best = -1;
        for (int i = 0; i < m; ++i) {
            if (chosen[static_cast<size_t>(i)]) continue;
            if (best < 0 ||
                res.rho[static_cast<size_t>(i)] * res.delta[static_cast<size_t>(i)] >
                    res.rho[static_cast<size_t>(best)] * res.delta[static_cast<size_t>(best)])
                best = i;
        }
        chosen[static_cast<size_t>(best)] = true;
        res.centers.push_back(best);
    }

    res.assignment.assign(static_cast<size_t>(m), -1);
    for (int i = 0; i < m; ++i) {
        // centers belong to themselves
        bool is_center = false;
        for (size_t s = 0; s < res.centers.size(); ++s)
            if (res.centers[s] == i) {
                res.assignment[static_cast<size_t>(i)] = static_cast<int>(s);
                is_center = true;
            }
        if (is_center) continue;
        int best_token = -1;
        double best2 = 0.0;
        for (int c : res.centers) {
            const double d2 = dist2(i, c);
            if (best_token < 0 || d2 < best2 || (d2 == best2 && c < best_token)) {
                best_token = c;
                best2 = d2;
            }
        }
        for (size_t s = 0; s < res.centers.size(); ++s)
            if (res.centers[s] == best_token) res.assignment[static_cast<size_t>(i)] = static_cast<int>(s);
    }
    return res;
}

SelectionResult oracle_select_causal(const Tensor& scores, int n_per_keypoint) {
    const int k = scores.rows(), n = scores.cols();
    std::vector<bool> taken(static_cast<size_t>(n), false);
    SelectionResult res;
    for (int i = 0; i < k; ++i) {
        for (int pick = 0; pick < n_per_keypoint; ++pick) {
            int best = -1;
            for (int j = 0; j < n; ++j) {
                if (taken[static_cast<size_t>(j)]) continue;
                if (best < 0 || scores.at(i, j) > scores.at(i, best)) best = j;
            }
            taken[static_cast<size_t>(best)] = true;
            res.causal_indices.push_back(best);
        }
    }
    for (int j = 0; j < n; ++j)
        if (!taken[static_cast<size_t>(j)]) res.noncausal_indices.push_back(j);
    return res;
}

}  // namespace cmpose::testing
