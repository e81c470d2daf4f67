// SPDX-License-Identifier: Apache-2.0
#include "nvdp/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <ctime>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace nvdp {

double log_mean_exp(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("log_mean_exp: empty input");
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(std::max(s / static_cast<double>(v.size()), diff::kEps));
}

std::vector<double> point_log_likelihoods(const std::vector<Predictive>& samples,
                                          const Matrix& ys) {
  if (samples.empty()) throw std::invalid_argument("point_log_likelihoods: no samples");
  const Index n = ys.rows();
  std::vector<double> out(static_cast<std::size_t>(n));
  std::vector<double> per_sample(samples.size());
  for (Index i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < samples.size(); ++s) {
      const Predictive& p = samples[s];
      double lp = 0.0;
      for (Index j = 0; j < ys.cols(); ++j) {
        const double sigma = std::max(p.sigma(i, j), diff::kEps);
        const double z = (ys(i, j) - p.mu(i, j)) / sigma;
        lp += -kHalfLog2Pi - std::log(sigma) - 0.5 * z * z;
      }
      per_sample[s] = lp;
    }
    out[static_cast<std::size_t>(i)] = log_mean_exp(per_sample);
  }
  return out;
}

TaskMetrics task_metrics(const Model& model, const Task& task, int n_samples,
                         NoiseSource& noise) {
  if (n_samples < 1) throw std::invalid_argument("task_metrics: n_samples must be >= 1");
  if (task.context.empty()) throw std::invalid_argument("task_metrics: empty context");
  const std::vector<std::size_t> all = task.full_set();
  const Matrix cx = select_rows(task.xs, task.context);
  const Matrix cy = select_rows(task.ys, task.context);
  const auto samples =
      model.sample_predictive(cx, cy, select_rows(task.xs, all), n_samples, noise);
  const auto lls = point_log_likelihoods(samples, select_rows(task.ys, all));

  TaskMetrics m;
  m.n_context = task.context.size();
  m.n_target = task.target.size();
  double sc = 0.0;
  double st = 0.0;
  for (std::size_t i = 0; i < lls.size(); ++i) (i < m.n_context ? sc : st) += lls[i];
  m.rll = sc / static_cast<double>(m.n_context);
  m.pll = m.n_target > 0 ? st / static_cast<double>(m.n_target) : 0.0;
  m.ll = (sc + st) / static_cast<double>(lls.size());
  return m;
}

std::uint64_t task_fingerprint(const Task& task) {
  // FNV-1a over the raw bytes of the task.
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  mix(task.xs.data(), sizeof(double) * static_cast<std::size_t>(task.xs.size()));
  mix(task.ys.data(), sizeof(double) * static_cast<std::size_t>(task.ys.size()));
  mix(task.context.data(), sizeof(std::size_t) * task.context.size());
  mix(task.target.data(), sizeof(std::size_t) * task.target.size());
  return h;
}

namespace {
std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}
}  // namespace

MetricsRecord compute_metrics(const Model& model, std::span<const Task> tasks, int n_samples,
                              std::uint64_t seed) {
  MetricsRecord rec;
  rec.model_kind = to_string(model.kind());
  rec.seed = seed;
  rec.n_samples = n_samples;
  rec.task_count = tasks.size();
  rec.timestamp = utc_timestamp();
  if (tasks.empty()) return rec;
  for (const Task& t : tasks) {
    NoiseSource noise(seed ^ task_fingerprint(t));
    const TaskMetrics m = task_metrics(model, t, n_samples, noise);
    rec.ll += m.ll;
    rec.rll += m.rll;
    rec.pll += m.pll;
  }
  const double n = static_cast<double>(tasks.size());
  rec.ll /= n;
  rec.rll /= n;
  rec.pll /= n;
  return rec;
}

std::vector<ActiveStep> active_learning_run(const Model& model, const Task& task,
                                            const ActiveLearningOptions& opts, Rng& rng) {
  const std::size_t pool = task.size();
  if (opts.n_acquire < 0) throw std::invalid_argument("active learning: n_acquire < 0");
  if (static_cast<std::size_t>(opts.n_acquire) + 1 > pool) {
    throw std::invalid_argument("active learning: pool of " + std::to_string(pool) +
                                " points exhausted by " + std::to_string(opts.n_acquire + 1) +
                                " acquisitions");
  }
  NoiseSource noise(rng());
  std::vector<bool> taken(pool, false);
  std::vector<std::size_t> context;
  std::uniform_int_distribution<std::size_t> first(0, pool - 1);
  context.push_back(first(rng));
  taken[context.back()] = true;

  auto evaluate = [&](std::size_t acquired) {
    Task t;
    t.xs = task.xs;
    t.ys = task.ys;
    t.context = context;
    for (std::size_t i = 0; i < pool; ++i) {
      if (!taken[i]) t.target.push_back(i);
    }
    return ActiveStep{acquired, task_metrics(model, t, opts.metric_samples, noise)};
  };

  std::vector<ActiveStep> steps;
  steps.push_back(evaluate(context.back()));
  for (int a = 0; a < opts.n_acquire; ++a) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < pool; ++i) {
      if (!taken[i]) candidates.push_back(i);
    }
    std::size_t pick = candidates.front();
    if (opts.rule == Acquisition::random) {
      std::uniform_int_distribution<std::size_t> u(0, candidates.size() - 1);
      pick = candidates[u(rng)];
    } else {
      const auto samples = model.sample_predictive(
          select_rows(task.xs, context), select_rows(task.ys, context),
          select_rows(task.xs, candidates), opts.realizations, noise);
      // Variance of the predictive means, shifted by the first realization so
      // identical realizations give exactly zero.
      double best = -1.0;
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        double var = 0.0;
        for (Index j = 0; j < task.ys.cols(); ++j) {
          const double ref = samples.front().mu(static_cast<Index>(c), j);
          double s1 = 0.0;
          double s2 = 0.0;
          for (const Predictive& p : samples) {
            const double d = p.mu(static_cast<Index>(c), j) - ref;
            s1 += d;
            s2 += d * d;
          }
          const double n = static_cast<double>(samples.size());
          var += s2 / n - (s1 / n) * (s1 / n);
        }
        if (var > best) {
          best = var;
          pick = candidates[c];
        }
      }
    }
    context.push_back(pick);
    taken[pick] = true;
    steps.push_back(evaluate(pick));
  }
  return steps;
}

}  // namespace nvdp
