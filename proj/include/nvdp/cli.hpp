// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "nvdp/eval.hpp"
#include "nvdp/model.hpp"
#include "nvdp/tasks.hpp"
#include "nvdp/train.hpp"

namespace nvdp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Invalid configuration. The message starts with the offending key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// "section.key" -> raw value.
using FlatConfig = std::map<std::string, std::string>;

// INI file: [section] headers and key = value lines; ';' and '#' comment.
FlatConfig read_config_file(const std::filesystem::path& path);
FlatConfig parse_config_text(const std::string& text);
// "section.key=value".
void apply_override(FlatConfig& cfg, std::string_view assignment);

struct TaskSpec {
  std::string source = "gp";  // gp | trig | idx:<path>
  SplitRanges ranges;
  std::size_t eval_points = 400;
  std::size_t image_limit = 0;  // 0 keeps every image
};

struct EvalSettings {
  std::size_t n_tasks = 1000;
  int n_samples = kDefaultPosteriorSamples;
  std::uint64_t seed = 1;
  std::string format = "csv";  // csv | json (json also writes metrics.json)
};

struct ActiveSettings {
  std::size_t n_tasks = 50;
  int n_acquire = 19;
  int realizations = kDefaultPosteriorSamples;
  int metric_samples = kDefaultPosteriorSamples;
  std::uint64_t seed = 2;
};

struct RunConfig {
  std::string run_id;  // empty: derived from the command, model and seed
  std::filesystem::path runs_dir = "runs";
  std::string preset = "gp-desk";
  ModelConfig model;
  TrainConfig train;
  std::size_t train_eval_tasks = 100;  // post-training evaluation
  TaskSpec tasks;
  EvalSettings eval;
  ActiveSettings active;

  // Applies defaults, then the model preset, then every key in cfg. Unknown
  // keys and malformed values raise ConfigError.
  static RunConfig from_flat(const FlatConfig& cfg);
  nlohmann::json to_json() const;
};

// Keys accepted by RunConfig::from_flat, sorted.
std::vector<std::string> known_keys();

std::unique_ptr<TaskSource> make_task_source(const TaskSpec& spec);

// Output root: NVDP_RUNS_DIR if set, else cfg.runs_dir.
std::filesystem::path runs_root(const RunConfig& cfg);

std::string version_string();

// Entry point used by the executable. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nvdp::cli
