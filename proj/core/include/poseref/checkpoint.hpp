#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "poseref/model.hpp"

namespace poseref {

// Companion metadata stored in the checkpoint header next to the model config
// and topology. `extra` is free-form string pairs (training setup, corruption
// parameters and the like) echoed back verbatim on load.
struct CheckpointInfo {
  std::uint64_t seed = 0;
  int epoch = 0;
  std::map<std::string, std::string> extra;
};

// File layout: 8-byte magic "POSEREF1", little-endian u64 JSON header length,
// the JSON header, then one raw little-endian f32 blob per parameter and buffer
// in header order. Weights round-trip through f32.
void save_checkpoint(const RefinerModel& model, const std::filesystem::path& path,
                     const CheckpointInfo& info);

struct LoadedCheckpoint {
  RefinerModel model;
  CheckpointInfo info;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace poseref
