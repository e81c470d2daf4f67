// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nvdp/nets.hpp"

namespace nvdp {

// One regression task: the point set plus a context/target split over it.
struct Task {
  Matrix xs;  // n x x_dim
  Matrix ys;  // n x y_dim
  std::vector<std::size_t> context;
  std::vector<std::size_t> target;
  std::map<std::string, std::string> meta;

  std::size_t size() const { return static_cast<std::size_t>(xs.rows()); }
  // Context followed by the target points not already in it; the set the
  // variational prior conditions on.
  std::vector<std::size_t> full_set() const;
};

Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows);

enum class Phase { train, eval };

// Train: S ~ U{min_context..max_context}, N ~ U{S+1..target_upper-1}, drawn
// disjointly. Eval: S as above, target = every remaining point.
struct SplitRanges {
  std::size_t min_context = 3;
  std::size_t max_context = 97;
  std::size_t target_upper = 100;
};

struct Split {
  std::vector<std::size_t> context;
  std::vector<std::size_t> target;
};

class InsufficientPoints : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::pair<std::size_t, std::size_t> sample_train_sizes(const SplitRanges& ranges, Rng& rng);
Split split_with_sizes(std::size_t n_points, std::size_t n_context, std::size_t n_target,
                       Rng& rng);
Split split_task(std::size_t n_points, Phase phase, const SplitRanges& ranges, Rng& rng);

struct GpConfig {
  double x_min = -2.0;
  double x_max = 2.0;
  double length_min = 0.1;
  double length_max = 0.6;
  double signal_min = 0.1;
  double signal_max = 1.0;
  double jitter = 1e-6;

  void validate() const;
};

// sf^2 exp(-(x - x')^2 / (2 l^2))
double se_kernel(double x, double x_prime, double length, double signal);

// y = chol(K + jitter I) n at the given inputs. Retries once with 10x jitter.
Matrix sample_gp_values(const Matrix& xs, double length, double signal, double jitter,
                        Rng& rng);

// Task with n_points inputs uniform on [x_min, x_max]; no split assigned.
Task sample_gp_task(const GpConfig& cfg, std::size_t n_points, Rng& rng);

enum class TrigFamily { sine, cosine, tanh };
const char* to_string(TrigFamily f);

// y = a f(2x - b pi), x ~ U[-pi, pi], f uniform over the three families,
// a ~ U(1.5, 2), b ~ U(-0.1, 0.1). No split assigned.
Task sample_trig_task(std::size_t n_points, Rng& rng);
Task make_trig_task(TrigFamily f, double a, double b, const Matrix& xs);

// Produces split tasks for training and evaluation.
class TaskSource {
 public:
  virtual ~TaskSource() = default;
  virtual Task train_task(Rng& rng) const = 0;
  virtual Task eval_task(Rng& rng) const = 0;
  virtual std::string name() const = 0;
  virtual int x_dim() const = 0;
  virtual int y_dim() const = 0;
};

class GpTaskSource : public TaskSource {
 public:
  explicit GpTaskSource(GpConfig cfg = {}, SplitRanges ranges = {},
                        std::size_t eval_points = 400);
  Task train_task(Rng& rng) const override;
  Task eval_task(Rng& rng) const override;
  std::string name() const override { return "gp"; }
  int x_dim() const override { return 1; }
  int y_dim() const override { return 1; }
  const GpConfig& config() const { return cfg_; }

 private:
  GpConfig cfg_;
  SplitRanges ranges_;
  std::size_t eval_points_;
};

class TrigTaskSource : public TaskSource {
 public:
  explicit TrigTaskSource(SplitRanges ranges = {}, std::size_t eval_points = 400);
  Task train_task(Rng& rng) const override;
  Task eval_task(Rng& rng) const override;
  std::string name() const override { return "trig"; }
  int x_dim() const override { return 1; }
  int y_dim() const override { return 1; }

 private:
  SplitRanges ranges_;
  std::size_t eval_points_;
};

// Images as functions from normalized pixel coordinates to intensity.
class ImageTaskSource : public TaskSource {
 public:
  ImageTaskSource(std::vector<Task> images, SplitRanges ranges = {3, 197, 200});
  Task train_task(Rng& rng) const override;
  Task eval_task(Rng& rng) const override;
  std::string name() const override { return "idx"; }
  int x_dim() const override { return 2; }
  int y_dim() const override;
  std::size_t image_count() const { return images_.size(); }
  // Deterministic pass over the images in order (epoch-style training).
  Task train_task_for(std::size_t image, Rng& rng) const;

 private:
  std::vector<Task> images_;
  SplitRanges ranges_;
};

}  // namespace nvdp
