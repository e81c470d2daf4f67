// SPDX-License-Identifier: Apache-2.0
#include "nvdp/nets.hpp"

#include <cmath>
#include <stdexcept>

namespace nvdp {

Parameter& ParamRegistry::add(std::string name, Index rows, Index cols) {
  if (find(name) != nullptr) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->value = Matrix::Zero(rows, cols);
  p->grad = Matrix::Zero(rows, cols);
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParamRegistry::find(std::string_view name) {
  for (auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

const Parameter* ParamRegistry::find(std::string_view name) const {
  for (const auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

std::vector<Parameter*> ParamRegistry::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

void ParamRegistry::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

std::size_t ParamRegistry::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void MlpSpec::validate() const {
  if (widths.size() < 2) {
    throw std::invalid_argument("MlpSpec: need at least input and output widths");
  }
  for (int w : widths) {
    if (w < 1) throw std::invalid_argument("MlpSpec: widths must be >= 1");
  }
  if (output == OutputHead::split_mean_logstd && widths.back() % 2 != 0) {
    throw std::invalid_argument("MlpSpec: split-mean-logstd needs an even output width");
  }
}

void glorot_init(Parameter& w, Rng& rng) {
  const double fan = static_cast<double>(w.value.rows() + w.value.cols());
  const double bound = std::sqrt(6.0 / fan);
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Index j = 0; j < w.value.cols(); ++j) {
    for (Index i = 0; i < w.value.rows(); ++i) w.value(i, j) = u(rng);
  }
}

Value Linear::forward(Graph& g, Value x) const {
  if (x.cols() != in()) {
    throw diff::ShapeError("linear " + weight->name + ": input " +
                           diff::shape_str(x.data()) + " vs weight " +
                           diff::shape_str(weight->value));
  }
  return diff::matmul(x, g.param(*weight)) + g.param(*bias);
}

Linear make_linear(ParamRegistry& reg, const std::string& prefix, int in, int out,
                   Rng& rng) {
  Linear l;
  l.weight = &reg.add(prefix + ".weight", in, out);
  l.bias = &reg.add(prefix + ".bias", 1, out);
  glorot_init(*l.weight, rng);
  return l;
}

Value mish(Value x) { return x * diff::tanh(diff::softplus(x)); }

Value activate(Value x, Activation act) {
  switch (act) {
    case Activation::none: return x;
    case Activation::relu: return diff::relu(x);
    case Activation::leaky_relu: return diff::leaky_relu(x);
    case Activation::mish: return mish(x);
  }
  return x;
}

Gaussian split_mean_logstd(Value out) {
  const Index c = out.cols();
  if (c % 2 != 0) {
    throw diff::ShapeError("split_mean_logstd: odd width " + diff::shape_str(out.data()));
  }
  Gaussian g;
  g.mu = diff::slice_cols(out, 0, c / 2);
  Value logstd = diff::slice_cols(out, c / 2, c);
  g.sigma = kSigmaFloor + (1.0 - kSigmaFloor) * diff::softplus(logstd);
  return g;
}

Mlp::Mlp(ParamRegistry& reg, const std::string& prefix, MlpSpec spec, Rng& rng)
    : spec_(std::move(spec)) {
  spec_.validate();
  for (std::size_t i = 0; i + 1 < spec_.widths.size(); ++i) {
    layers_.push_back(make_linear(reg, prefix + ".layer" + std::to_string(i),
                                  spec_.widths[i], spec_.widths[i + 1], rng));
  }
}

Value Mlp::forward(Graph& g, Value x) const {
  Value h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].forward(g, h);
    const bool last = i + 1 == layers_.size();
    if (!last || spec_.activate_output) h = activate(h, spec_.hidden);
  }
  return h;
}

Gaussian Mlp::forward_gaussian(Graph& g, Value x) const {
  if (spec_.output != OutputHead::split_mean_logstd) {
    throw std::logic_error("forward_gaussian on an MLP without a split head");
  }
  return split_mean_logstd(forward(g, x));
}

Temperature::Temperature(ParamRegistry& reg, const std::string& name, double init_tau) {
  if (!(init_tau > 0.0)) throw std::invalid_argument("temperature must be positive");
  log_tau_ = &reg.add(name, 1, 1);
  log_tau_->value(0, 0) = std::log(init_tau);
}

Value Temperature::tau(Graph& g) const { return diff::exp(g.param(*log_tau_)); }

double Temperature::value() const { return std::exp(log_tau_->value(0, 0)); }

Value tempered_sigmoid(Value x, Value tau) { return diff::sigmoid(x / tau); }

}  // namespace nvdp
