#pragma once

#include <cstdint>
#include <random>

namespace cmpose {

// Stream ids keep independent sources of randomness from interfering:
// consuming more draws in one stream never shifts another. Seeds are
// combined with splitmix64 so nearby (seed, stream, index) tuples do not
// produce correlated generators.
enum class RngStream : std::uint64_t {
    init = 0x01,
    data_order = 0x02,
    mask_plan = 0x03,
    noise_plan = 0x04,
    sample_pose = 0x05,
    sample_render = 0x06,
    sample_corrupt = 0x07,
    sample_tag = 0x08,
    test = 0x7f,
};

std::uint64_t mix_seed(std::uint64_t seed, RngStream stream, std::uint64_t index = 0);

// Deterministic RNG with portable output. std::mt19937_64 is bit-exact across
// implementations; the distributions below are hand-rolled because the
// standard library's are not.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    Rng(std::uint64_t seed, RngStream stream, std::uint64_t index = 0)
        : engine_(mix_seed(seed, stream, index)) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0,1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n);

    // standard normal via Box-Muller (no cached second draw, so consumption
    // per call is constant: two uniforms per normal)
    double normal();

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Fisher-Yates permutation of [0, n)
    std::vector<int> permutation(int n);

    // k distinct indices from [0, n), returned sorted ascending
    std::vector<int> sample_without_replacement(int n, int k);

private:
    std::mt19937_64 engine_;
};

}  // namespace cmpose
