#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "cmpose/model.h"

namespace cmpose {

// Binary checkpoint, magic "CMPZ1": config snapshot, epoch, step, rng seed,
// then named parameter records (name, shape, f32 data, little-endian).
// save -> load -> save is byte-identical because parameters are stored f32
// and load widens them losslessly.

struct LoadedCheckpoint {
    std::unique_ptr<CmPoseModel> model;
    int epoch = 0;
    std::uint64_t global_step = 0;
    std::uint64_t rng_seed = 0;
};

void save_checkpoint(const std::string& path, const CmPoseModel& model, int epoch,
                     std::uint64_t global_step, std::uint64_t rng_seed);

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace cmpose
