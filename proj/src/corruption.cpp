#include "cmpose/corruption.h"

#include <cmath>

#include "cmpose/rng.h"

namespace cmpose {

CorruptionPlan plan_corruption(int n_tokens, double ratio, CorruptionKind kind, double sigma,
                               int dim, std::uint64_t seed) {
    if (ratio < 0.0 || ratio > 1.0)
        throw ConfigError("corruption ratio " + std::to_string(ratio) + " outside [0,1]");
    if (kind == CorruptionKind::noise && sigma <= 0.0)
        throw ConfigError("noise sigma must be positive");

    CorruptionPlan plan;
    plan.kind = kind;
    plan.seed = seed;
    plan.flag.assign(static_cast<size_t>(n_tokens), 1);

    const int count = static_cast<int>(std::llround(n_tokens * ratio));
    Rng rng(seed);
    plan.corrupted_indices = rng.sample_without_replacement(n_tokens, count);
    for (int i : plan.corrupted_indices) plan.flag[static_cast<size_t>(i)] = 0;

    if (kind == CorruptionKind::noise && count > 0) {
        plan.noise_draws = Tensor({count, dim});
        for (double& v : plan.noise_draws.data) v = rng.normal(0.0, sigma);
    }
    return plan;
}

namespace {

void check_plan(const Tensor& tokens, const CorruptionPlan& plan) {
    if (tokens.rows() != plan.n_tokens())
        throw ContractError("corruption plan covers " + std::to_string(plan.n_tokens()) +
                            " tokens, input has " + std::to_string(tokens.rows()));
    for (int i : plan.corrupted_indices)
        if (i < 0 || i >= tokens.rows())
            throw ContractError("corrupted index " + std::to_string(i) + " out of range");
}

}  // namespace

Var apply_mask(Tape& t, Var tokens, const CorruptionPlan& plan) {
    if (plan.kind != CorruptionKind::mask) throw ContractError("apply_mask: plan kind is noise");
    const Tensor& tv = t.value(tokens);
    check_plan(tv, plan);
    if (plan.corrupted_indices.empty()) return tokens;
    // multiply by the flag rows: 1-rows pass through bit-identically
    Tensor mask(tv.shape, 1.0);
    const int d = tv.cols();
    for (int i : plan.corrupted_indices)
        for (int j = 0; j < d; ++j) mask.at(i, j) = 0.0;
    return t.mul(tokens, t.constant(std::move(mask)));
}

Var apply_noise(Tape& t, Var tokens, const CorruptionPlan& plan) {
    if (plan.kind != CorruptionKind::noise) throw ContractError("apply_noise: plan kind is mask");
    const Tensor& tv = t.value(tokens);
    check_plan(tv, plan);
    if (plan.corrupted_indices.empty()) return tokens;
    Tensor add(tv.shape, 0.0);
    const int d = tv.cols();
    for (size_t r = 0; r < plan.corrupted_indices.size(); ++r) {
        const int i = plan.corrupted_indices[r];
        for (int j = 0; j < d; ++j) add.at(i, j) = plan.noise_draws.at(static_cast<int>(r), j);
    }
    return t.add(tokens, t.constant(std::move(add)));
}

Var recon_loss(Tape& t, Var reconstructed, Var original, const CorruptionPlan& plan) {
    const Tensor& rv = t.value(reconstructed);
    const Tensor& ov = t.value(original);
    if (!same_shape(rv, ov))
        throw ShapeError("recon_loss: " + shape_str(rv.shape) + " vs " + shape_str(ov.shape));
    if (plan.corrupted_indices.empty()) return t.constant(Tensor({1}, 0.0));
    Var diff = t.gather_rows(t.sub(reconstructed, original), plan.corrupted_indices);
    return t.scale(t.sum_all(t.mul(diff, diff)), 1.0 / plan.n_corrupted());
}

}  // namespace cmpose
