// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "nvdp/model.hpp"

// Checkpoint file: a JSON document
//   {
//     "format": "nvdp-checkpoint", "version": 1,
//     "run_id": "...", "step": N,
//     "model": { ...ModelConfig... },
//     "parameters": [ {"name": "...", "shape": [rows, cols],
//                      "values": [row-major float64...]}, ... ]
//   }
// Doubles are written in shortest round-trip form, so a reload is bit-exact.

namespace nvdp {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json checkpoint_json(const Model& model, long step, const std::string& run_id);

// Written through a temporary file and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const Model& model, long step,
                     const std::string& run_id);

struct LoadedCheckpoint {
  std::unique_ptr<Model> model;
  long step = 0;
  std::string run_id;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);
LoadedCheckpoint checkpoint_from_json(const nlohmann::json& j);

}  // namespace nvdp
