#pragma once

// Binary checkpoint: configuration echo, trainer counters, parameters with
// their Adam moments, pair statistics and calibration state. All numbers are
// stored bit-exactly (little-endian), so a round trip is lossless.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lgvae/config.hpp"
#include "lgvae/trainer.hpp"

namespace lgvae {

struct Checkpoint {
    TrainConfig config;
    TrainerState state;
};

std::vector<std::uint8_t> serialize_checkpoint(const TrainConfig& config, const TrainerState& state);
/// Throws InvalidInputError on a malformed file and DimensionError when the
/// stored parameters do not match the stored configuration.
Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes);

/// Throws std::ios_base::failure on IO errors.
void save_checkpoint(const std::string& path, const TrainConfig& config, const TrainerState& state);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace lgvae
