// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nvdp/model.hpp"
#include "nvdp/noise.hpp"
#include "nvdp/tasks.hpp"

namespace nvdp {

// How a task's KL term is weighted against its mean target NLL.
//   per_point: kl / (number of target points)
//   per_task:  kl
enum class KlScale { per_point, per_task };

const char* to_string(KlScale s);
KlScale parse_kl_scale(const std::string& s);

struct TrainConfig {
  std::size_t batch_size = 16;
  double learning_rate = 5e-4;
  long iterations = 50000;
  std::uint64_t seed = 0;
  int noise_samples = 1;
  // Global gradient-norm clip; <= 0 disables.
  double clip_norm = 10.0;
  // 0 writes only the final checkpoint.
  long checkpoint_every = 0;
  long log_every = 100;
  KlScale kl_scale = KlScale::per_point;

  void validate() const;
};

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StepResult {
  double loss = 0.0;
  double nll = 0.0;
  double kl = 0.0;  // unweighted, batch mean
};

// Minibatch estimate of the negative ELBO,
//   loss = (1/T) sum_t [ nll_t + w_t kl_t ],
// where nll_t is the mean NLL over task t's targets and w_t follows kl_scale.
// Gradients are accumulated into the model's parameters (which are zeroed
// first). Each task is differentiated on its own graph.
StepResult elbo_step(Model& model, std::span<const Task> batch, NoiseSource& noise,
                     int noise_samples = 1, KlScale kl_scale = KlScale::per_point);

// Scales gradients so their global L2 norm is at most max_norm; returns the
// norm before scaling.
double clip_gradients(ParamRegistry& params, double max_norm);

void adam_update(ParamRegistry& params, AdamState& state, double lr);

struct StepRecord {
  long step = 0;
  double loss = 0.0;
  double nll = 0.0;
  double kl = 0.0;
  double wall_time = 0.0;  // seconds since the run started
};

class TrainSink {
 public:
  virtual ~TrainSink() = default;
  virtual void on_step(const StepRecord&) {}
  virtual void on_checkpoint(long /*step*/, const Model&) {}
};

struct TrainResult {
  long steps_completed = 0;
  bool aborted = false;
  std::string error;
  std::vector<StepRecord> history;  // one entry per log_every steps
};

// Samples batch_size tasks per step, takes one ELBO/Adam step, reports to the
// sink every log_every steps and checkpoints every checkpoint_every steps and
// at the end. A non-finite loss stops the run without writing a checkpoint
// for the failing step.
TrainResult train_run(const TrainConfig& cfg, Model& model, const TaskSource& source,
                      TrainSink& sink);

}  // namespace nvdp
