#pragma once

// Independent brute-force reference implementations used to check the
// production FTE code. Deliberately written with a different structure
// (full distance matrices, repeated linear scans, no shared helpers) so a
// bug in the production path cannot hide in both.

#include <vector>

#include "cmpose/fte.h"
#include "cmpose/tensor.h"

namespace cmpose::testing {

struct OracleDpc {
    std::vector<double> rho;
    std::vector<double> delta;
    std::vector<int> centers;     // token indices, score order
    std::vector<int> assignment;  // per token: position in centers
};

OracleDpc oracle_dpc_knn(const Tensor& tokens, int k, int num_clusters);

// sequential top-n with exclusion, one linear scan per pick
SelectionResult oracle_select_causal(const Tensor& scores, int n_per_keypoint);

}  // namespace cmpose::testing
