#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "sigmetric/model.hpp"

namespace sigmetric {

// Checkpoint layout: 8-byte magic "SGMTCKP1", u64 little-endian header
// length, compact JSON header (configs, step count, target moments, tensor
// table, provenance), then all tensor values as little-endian float32 in
// table order.  Optimizer moments are not persisted; loading reproduces
// parameter values exactly.
void save_checkpoint(const Model<float>& model, const std::filesystem::path& file,
                     const nlohmann::json& provenance = nlohmann::json::object());

struct LoadedCheckpoint {
  Model<float> model;
  nlohmann::json provenance;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& file);

}  // namespace sigmetric
