#pragma once

#include <string>

#include "easr/config.hpp"
#include "easr/model.hpp"

namespace easr {

// Binary layout: magic "EASRCKPT", u32 version, u64-prefixed config text,
// u64 parameter count, then per parameter: u64-prefixed name, u64 rank, u64
// dims, raw little-endian doubles.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const ExperimentConfig& config, const Model& model);

struct LoadedCheckpoint {
  ExperimentConfig config;
  Model model;
};

// Throws FormatError on a bad magic, version, truncation, or a parameter set
// that does not match the stored config.
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace easr
