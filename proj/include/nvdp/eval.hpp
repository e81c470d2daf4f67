// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "nvdp/model.hpp"
#include "nvdp/noise.hpp"
#include "nvdp/tasks.hpp"

namespace nvdp {

// Per-point log-likelihoods in nats: LL over context and target together,
// RLL over the context only, PLL over the target only.
struct TaskMetrics {
  double ll = 0.0;
  double rll = 0.0;
  double pll = 0.0;
  std::size_t n_context = 0;
  std::size_t n_target = 0;
};

struct MetricsRecord {
  long step = 0;
  std::string model_kind;
  std::uint64_t seed = 0;
  double ll = 0.0;
  double rll = 0.0;
  double pll = 0.0;
  int n_samples = 0;
  std::size_t task_count = 0;
  std::string timestamp;
};

inline constexpr int kDefaultPosteriorSamples = 16;

// log((1/n) sum_i exp(v_i)), computed stably.
double log_mean_exp(std::span<const double> v);

// For every row of ys: log of the sample-averaged predictive density,
// log (1/S) sum_s N(y | mu_s, sigma_s), summed over output dimensions inside
// each density.
std::vector<double> point_log_likelihoods(const std::vector<Predictive>& samples,
                                          const Matrix& ys);

TaskMetrics task_metrics(const Model& model, const Task& task, int n_samples,
                         NoiseSource& noise);

// Averages task_metrics over tasks. Each task draws its posterior samples
// from a stream seeded by `seed` and the task's contents, so the result does
// not depend on task order.
MetricsRecord compute_metrics(const Model& model, std::span<const Task> tasks, int n_samples,
                              std::uint64_t seed);

std::uint64_t task_fingerprint(const Task& task);

enum class Acquisition { max_variance, random };

struct ActiveLearningOptions {
  int n_acquire = 19;
  int realizations = kDefaultPosteriorSamples;    // for the acquisition variance
  int metric_samples = kDefaultPosteriorSamples;  // for LL/RLL/PLL
  Acquisition rule = Acquisition::max_variance;
};

struct ActiveStep {
  std::size_t acquired = 0;  // index of the point added at this step
  TaskMetrics metrics;       // after adding it; context = acquired points
};

// Starts from one uniformly random point of the task and acquires
// n_acquire more, one at a time. max_variance picks the candidate whose
// predictive mean varies most across posterior realizations (ties go to
// the lowest index); random picks uniformly. Returns n_acquire + 1 steps.
std::vector<ActiveStep> active_learning_run(const Model& model, const Task& task,
                                            const ActiveLearningOptions& opts, Rng& rng);

// ---- result files ----

// One CSV row: header step,model,seed,ll,rll,pll.
struct ResultRow {
  long step = 0;
  std::string model;
  std::uint64_t seed = 0;
  double ll = 0.0;
  double rll = 0.0;
  double pll = 0.0;
};

inline constexpr const char* kResultsCsvHeader = "step,model,seed,ll,rll,pll";

ResultRow to_row(const MetricsRecord& r);

enum class ResultFormat { csv, json };

// CSV: header plus one row per record, then one per curve row. JSON: an
// object with "config", "records" and "curves".
void export_results(std::span<const MetricsRecord> records, std::span<const ResultRow> curves,
                    const std::filesystem::path& path, ResultFormat format,
                    const nlohmann::json& config = nlohmann::json::object());

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);
nlohmann::json to_json(const MetricsRecord& r);

}  // namespace nvdp
