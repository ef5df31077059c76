#pragma once

#include <cstdint>
#include <vector>

#include "cmpose/tape.h"
#include "cmpose/tensor.h"

namespace cmpose {

enum class CorruptionKind { mask, noise };

// Which token rows get corrupted and, for noise plans, the draws to add.
// Exactly round(n_tokens * ratio) rows are chosen without replacement.
struct CorruptionPlan {
    CorruptionKind kind = CorruptionKind::mask;
    std::vector<int> corrupted_indices;  // sorted, unique, in [0, n_tokens)
    std::vector<std::uint8_t> flag;      // M(i) = 0 iff i corrupted, else 1
    Tensor noise_draws;                  // (|indices|, D) for noise plans
    std::uint64_t seed = 0;

    int n_tokens() const { return static_cast<int>(flag.size()); }
    int n_corrupted() const { return static_cast<int>(corrupted_indices.size()); }
};

CorruptionPlan plan_corruption(int n_tokens, double ratio, CorruptionKind kind, double sigma,
                               int dim, std::uint64_t seed);

// rows listed in the plan zeroed, every other row bit-identical
Var apply_mask(Tape& t, Var tokens, const CorruptionPlan& plan);
// rows listed in the plan get their stored draw added
Var apply_noise(Tape& t, Var tokens, const CorruptionPlan& plan);

// (1/|M|) sum_{i in M} ||recon_i - original_i||^2, or 0 when M is empty
Var recon_loss(Tape& t, Var reconstructed, Var original, const CorruptionPlan& plan);

}  // namespace cmpose
