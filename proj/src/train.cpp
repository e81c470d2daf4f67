// SPDX-License-Identifier: Apache-2.0
#include "nvdp/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace nvdp {

const char* to_string(KlScale s) {
  return s == KlScale::per_point ? "per_point" : "per_task";
}

KlScale parse_kl_scale(const std::string& s) {
  if (s == "per_point") return KlScale::per_point;
  if (s == "per_task") return KlScale::per_task;
  throw std::invalid_argument("unknown kl scale '" + s + "'; valid: per_point, per_task");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("train.batch_size: must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train.learning_rate: must be > 0");
  if (iterations < 0) throw std::invalid_argument("train.iterations: must be >= 0");
  if (noise_samples < 1) throw std::invalid_argument("train.noise_samples: must be >= 1");
  if (checkpoint_every < 0) throw std::invalid_argument("train.checkpoint_every: must be >= 0");
  if (log_every < 1) throw std::invalid_argument("train.log_every: must be >= 1");
}

StepResult elbo_step(Model& model, std::span<const Task> batch, NoiseSource& noise,
                     int noise_samples, KlScale kl_scale) {
  if (batch.empty()) throw std::invalid_argument("elbo_step: empty batch");
  model.params().zero_grad();
  const double inv_t = 1.0 / static_cast<double>(batch.size());
  StepResult res;
  for (std::size_t t = 0; t < batch.size(); ++t) {
    Graph g;
    LossTerms terms = model.loss_terms(g, batch[t], noise, noise_samples);
    const double nll = terms.nll.scalar();
    const double kl = terms.kl.scalar();
    if (!std::isfinite(nll)) {
      throw NonFiniteLoss("non-finite nll in task " + std::to_string(t));
    }
    if (!std::isfinite(kl)) {
      throw NonFiniteLoss("non-finite kl in task " + std::to_string(t));
    }
    const double w = kl_scale == KlScale::per_point
                         ? 1.0 / static_cast<double>(std::max<std::size_t>(batch[t].target.size(), 1))
                         : 1.0;
    g.backward(diff::scale(terms.nll + diff::scale(terms.kl, w), inv_t));
    res.nll += nll * inv_t;
    res.kl += kl * inv_t;
    res.loss += (nll + w * kl) * inv_t;
  }
  return res;
}

double clip_gradients(ParamRegistry& params, double max_norm) {
  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) sq += params.at(i).grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (std::size_t i = 0; i < params.size(); ++i) params.at(i).grad *= s;
  }
  return norm;
}

void adam_update(ParamRegistry& params, AdamState& st, double lr) {
  if (st.m.size() != params.size()) {
    st.m.clear();
    st.v.clear();
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Matrix& val = params.at(i).value;
      st.m.push_back(Matrix::Zero(val.rows(), val.cols()));
      st.v.push_back(Matrix::Zero(val.rows(), val.cols()));
    }
    st.step = 0;
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params.at(i);
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
      throw diff::ShapeError("adam: gradient of " + p.name + " has shape " +
                             diff::shape_str(p.grad));
    }
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * p.grad;
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= lr * (st.m[i].array() / c1) /
                       ((st.v[i].array() / c2).sqrt() + st.eps);
  }
}

TrainResult train_run(const TrainConfig& cfg, Model& model, const TaskSource& source,
                      TrainSink& sink) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  Rng master(cfg.seed);
  AdamState adam;
  TrainResult result;
  std::vector<Task> batch(cfg.batch_size);
  StepRecord window;
  long in_window = 0;

  for (long step = 1; step <= cfg.iterations; ++step) {
    for (Task& t : batch) {
      Rng task_rng(master());
      t = source.train_task(task_rng);
    }
    NoiseSource noise(master());
    StepResult sr;
    try {
      sr = elbo_step(model, batch, noise, cfg.noise_samples, cfg.kl_scale);
      const double norm = clip_gradients(model.params(), cfg.clip_norm);
      if (!std::isfinite(norm)) throw NonFiniteLoss("non-finite gradient norm");
    } catch (const NonFiniteLoss& e) {
      result.aborted = true;
      result.error = "step " + std::to_string(step) + ": " + e.what();
      return result;
    }
    adam_update(model.params(), adam, cfg.learning_rate);
    result.steps_completed = step;

    window.loss += sr.loss;
    window.nll += sr.nll;
    window.kl += sr.kl;
    ++in_window;
    if (step % cfg.log_every == 0 || step == cfg.iterations) {
      StepRecord rec;
      rec.step = step;
      rec.loss = window.loss / static_cast<double>(in_window);
      rec.nll = window.nll / static_cast<double>(in_window);
      rec.kl = window.kl / static_cast<double>(in_window);
      rec.wall_time =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      result.history.push_back(rec);
      sink.on_step(rec);
      window = StepRecord{};
      in_window = 0;
    }
    const bool periodic = cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0;
    if (periodic || step == cfg.iterations) sink.on_checkpoint(step, model);
  }
  return result;
}

}  // namespace nvdp
