#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gnndsr/model.hpp"

namespace gnndsr {

struct CheckpointMeta {
  Mode mode = Mode::rating;
  int d = 0;
  int lstm_layers = 1;
  int n_users = 0;
  int n_items = 0;
  std::vector<int> rating_scale;
  AblationConfig ablation;
  std::uint64_t seed = 0;
};

struct Checkpoint {
  ModelParams params;
  CheckpointMeta meta;
};

// Single binary archive: meta as JSON plus one named flat float64 array per
// parameter tensor. Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const ModelParams& params,
                     const CheckpointMeta& meta);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace gnndsr
