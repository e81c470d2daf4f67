// SPDX-License-Identifier: Apache-2.0
#include "nvdp/tasks.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace nvdp {

std::vector<std::size_t> Task::full_set() const {
  std::vector<std::size_t> all(context);
  std::unordered_set<std::size_t> seen(context.begin(), context.end());
  for (std::size_t i : target) {
    if (seen.insert(i).second) all.push_back(i);
  }
  return all;
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Index>(i)) = m.row(static_cast<Index>(rows[i]));
  }
  return out;
}

std::pair<std::size_t, std::size_t> sample_train_sizes(const SplitRanges& ranges,
                                                       Rng& rng) {
  if (ranges.min_context < 1 || ranges.max_context < ranges.min_context ||
      ranges.target_upper < ranges.max_context + 2) {
    throw std::invalid_argument("split ranges are inconsistent");
  }
  std::uniform_int_distribution<std::size_t> s_dist(ranges.min_context, ranges.max_context);
  const std::size_t s = s_dist(rng);
  std::uniform_int_distribution<std::size_t> n_dist(s + 1, ranges.target_upper - 1);
  return {s, n_dist(rng)};
}

Split split_with_sizes(std::size_t n_points, std::size_t n_context, std::size_t n_target,
                       Rng& rng) {
  if (n_context + n_target > n_points) {
    throw InsufficientPoints("split needs " + std::to_string(n_context + n_target) +
                             " points (" + std::to_string(n_context) + " context + " +
                             std::to_string(n_target) + " target), task has " +
                             std::to_string(n_points));
  }
  std::vector<std::size_t> perm(n_points);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  // Partial Fisher-Yates: only the first S + N slots are needed.
  for (std::size_t i = 0; i < n_context + n_target; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n_points - 1);
    std::swap(perm[i], perm[pick(rng)]);
  }
  Split out;
  out.context.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_context));
  out.target.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_context),
                    perm.begin() + static_cast<std::ptrdiff_t>(n_context + n_target));
  std::sort(out.context.begin(), out.context.end());
  std::sort(out.target.begin(), out.target.end());
  return out;
}

Split split_task(std::size_t n_points, Phase phase, const SplitRanges& ranges, Rng& rng) {
  if (phase == Phase::train) {
    auto [s, n] = sample_train_sizes(ranges, rng);
    return split_with_sizes(n_points, s, n, rng);
  }
  if (n_points < ranges.max_context + 1) {
    throw InsufficientPoints("eval split needs at least " +
                             std::to_string(ranges.max_context + 1) +
                             " points, task has " + std::to_string(n_points));
  }
  std::uniform_int_distribution<std::size_t> s_dist(ranges.min_context, ranges.max_context);
  const std::size_t s = s_dist(rng);
  return split_with_sizes(n_points, s, n_points - s, rng);
}

void GpConfig::validate() const {
  if (!(x_min < x_max)) throw std::invalid_argument("gp: x range is empty");
  if (!(0.0 < length_min && length_min <= length_max)) {
    throw std::invalid_argument("gp: invalid length-scale range");
  }
  if (!(0.0 < signal_min && signal_min <= signal_max)) {
    throw std::invalid_argument("gp: invalid signal range");
  }
  if (!(jitter > 0.0)) throw std::invalid_argument("gp: jitter must be > 0");
}

double se_kernel(double x, double x_prime, double length, double signal) {
  const double d = x - x_prime;
  return signal * signal * std::exp(-(d * d) / (2.0 * length * length));
}

Matrix sample_gp_values(const Matrix& xs, double length, double signal, double jitter,
                        Rng& rng) {
  const Index n = xs.rows();
  Matrix k(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = j; i < n; ++i) {
      k(i, j) = se_kernel(xs(i, 0), xs(j, 0), length, signal);
      k(j, i) = k(i, j);
    }
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix z(n, 1);
  for (Index i = 0; i < n; ++i) z(i, 0) = normal(rng);

  double jit = jitter;
  for (int attempt = 0; attempt < 2; ++attempt, jit *= 10.0) {
    Matrix kj = k;
    kj.diagonal().array() += jit;
    Eigen::LLT<Matrix> llt(kj);
    if (llt.info() == Eigen::Success) {
      return llt.matrixL() * z;
    }
  }
  throw std::runtime_error("gp: Cholesky failed after increasing jitter to " +
                           std::to_string(jit / 10.0));
}

Task sample_gp_task(const GpConfig& cfg, std::size_t n_points, Rng& rng) {
  if (n_points < 4) throw std::invalid_argument("gp: need at least 4 points per task");
  std::uniform_real_distribution<double> len(cfg.length_min, cfg.length_max);
  std::uniform_real_distribution<double> sig(cfg.signal_min, cfg.signal_max);
  std::uniform_real_distribution<double> xdist(cfg.x_min, cfg.x_max);
  const double l = len(rng);
  const double sf = sig(rng);
  Task t;
  t.xs.resize(static_cast<Index>(n_points), 1);
  for (Index i = 0; i < t.xs.rows(); ++i) t.xs(i, 0) = xdist(rng);
  t.ys = sample_gp_values(t.xs, l, sf, cfg.jitter, rng);
  t.meta["family"] = "gp";
  t.meta["length_scale"] = std::to_string(l);
  t.meta["signal"] = std::to_string(sf);
  return t;
}

const char* to_string(TrigFamily f) {
  switch (f) {
    case TrigFamily::sine: return "sine";
    case TrigFamily::cosine: return "cosine";
    case TrigFamily::tanh: return "tanh";
  }
  return "?";
}

Task make_trig_task(TrigFamily f, double a, double b, const Matrix& xs) {
  Task t;
  t.xs = xs;
  t.ys.resize(xs.rows(), 1);
  for (Index i = 0; i < xs.rows(); ++i) {
    const double u = 2.0 * xs(i, 0) - b * std::numbers::pi;
    double v = 0.0;
    switch (f) {
      case TrigFamily::sine: v = std::sin(u); break;
      case TrigFamily::cosine: v = std::cos(u); break;
      case TrigFamily::tanh: v = std::tanh(u); break;
    }
    t.ys(i, 0) = a * v;
  }
  t.meta["family"] = to_string(f);
  t.meta["a"] = std::to_string(a);
  t.meta["b"] = std::to_string(b);
  return t;
}

Task sample_trig_task(std::size_t n_points, Rng& rng) {
  std::uniform_int_distribution<int> fam(0, 2);
  std::uniform_real_distribution<double> adist(1.5, 2.0);
  std::uniform_real_distribution<double> bdist(-0.1, 0.1);
  std::uniform_real_distribution<double> xdist(-std::numbers::pi, std::numbers::pi);
  const auto f = static_cast<TrigFamily>(fam(rng));
  const double a = adist(rng);
  const double b = bdist(rng);
  Matrix xs(static_cast<Index>(n_points), 1);
  for (Index i = 0; i < xs.rows(); ++i) xs(i, 0) = xdist(rng);
  return make_trig_task(f, a, b, xs);
}

GpTaskSource::GpTaskSource(GpConfig cfg, SplitRanges ranges, std::size_t eval_points)
    : cfg_(cfg), ranges_(ranges), eval_points_(eval_points) {
  cfg_.validate();
}

Task GpTaskSource::train_task(Rng& rng) const {
  auto [s, n] = sample_train_sizes(ranges_, rng);
  Task t = sample_gp_task(cfg_, s + n, rng);
  Split sp = split_with_sizes(t.size(), s, n, rng);
  t.context = std::move(sp.context);
  t.target = std::move(sp.target);
  return t;
}

Task GpTaskSource::eval_task(Rng& rng) const {
  Task t = sample_gp_task(cfg_, eval_points_, rng);
  Split sp = split_task(t.size(), Phase::eval, ranges_, rng);
  t.context = std::move(sp.context);
  t.target = std::move(sp.target);
  return t;
}

TrigTaskSource::TrigTaskSource(SplitRanges ranges, std::size_t eval_points)
    : ranges_(ranges), eval_points_(eval_points) {}

Task TrigTaskSource::train_task(Rng& rng) const {
  auto [s, n] = sample_train_sizes(ranges_, rng);
  Task t = sample_trig_task(s + n, rng);
  Split sp = split_with_sizes(t.size(), s, n, rng);
  t.context = std::move(sp.context);
  t.target = std::move(sp.target);
  return t;
}

Task TrigTaskSource::eval_task(Rng& rng) const {
  Task t = sample_trig_task(eval_points_, rng);
  Split sp = split_task(t.size(), Phase::eval, ranges_, rng);
  t.context = std::move(sp.context);
  t.target = std::move(sp.target);
  return t;
}

ImageTaskSource::ImageTaskSource(std::vector<Task> images, SplitRanges ranges)
    : images_(std::move(images)), ranges_(ranges) {
  if (images_.empty()) throw std::invalid_argument("image source: no images");
}

int ImageTaskSource::y_dim() const { return static_cast<int>(images_.front().ys.cols()); }

Task ImageTaskSource::train_task_for(std::size_t image, Rng& rng) const {
  Task t = images_.at(image);
  Split sp = split_task(t.size(), Phase::train, ranges_, rng);
  t.context = std::move(sp.context);
  t.target = std::move(sp.target);
  return t;
}

Task ImageTaskSource::train_task(Rng& rng) const {
  std::uniform_int_distribution<std::size_t> pick(0, images_.size() - 1);
  return train_task_for(pick(rng), rng);
}

Task ImageTaskSource::eval_task(Rng& rng) const {
  std::uniform_int_distribution<std::size_t> pick(0, images_.size() - 1);
  Task t = images_[pick(rng)];
  Split sp = split_task(t.size(), Phase::eval, ranges_, rng);
  t.context = std::move(sp.context);
  t.target = std::move(sp.target);
  return t;
}

}  // namespace nvdp
