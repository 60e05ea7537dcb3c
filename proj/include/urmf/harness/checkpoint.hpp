#pragma once

#include <filesystem>

#include "urmf/harness/config.hpp"
#include "urmf/model.hpp"

namespace urmf::harness {

struct Checkpoint {
  TrainConfig config;
  UrmfModel model;
};

// Writes <dir>/config.txt and <dir>/model.bin, creating `dir` if needed.
void save_checkpoint(const std::filesystem::path& dir, const TrainConfig& config, UrmfModel& model);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace urmf::harness
