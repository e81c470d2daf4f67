// SPDX-License-Identifier: Apache-2.0
#include "nvdp/dropout_posterior.hpp"

#include <stdexcept>

namespace nvdp {

std::vector<Matrix> DropoutRates::values() const {
  std::vector<Matrix> out;
  out.reserve(layers.size());
  for (const Value& v : layers) out.push_back(v.data());
  return out;
}

PosteriorLayer make_posterior_layer(ParamRegistry& reg, const std::string& prefix,
                                    int in, int out, Rng& rng) {
  PosteriorLayer l;
  l.theta = &reg.add(prefix + ".theta", in, out);
  l.bias = &reg.add(prefix + ".bias", 1, out);
  glorot_init(*l.theta, rng);
  return l;
}

Value low_rank_rates(Value logits, Index k, Index d, Value tau, bool clip) {
  if (logits.rows() != 1 || logits.cols() != k + d + 1) {
    throw diff::ShapeError("low_rank_rates: expected [1x" + std::to_string(k + d + 1) +
                           "] logits, got " + diff::shape_str(logits.data()));
  }
  Value row = tempered_sigmoid(diff::slice_cols(logits, 0, k), tau);
  Value col = tempered_sigmoid(diff::slice_cols(logits, k, k + d), tau);
  Value layer = tempered_sigmoid(diff::slice_cols(logits, k + d, k + d + 1), tau);
  Value p = diff::matmul(diff::transpose(row), col) * layer;
  return clip ? diff::clip(p, kRateMin, kRateMax) : p;
}

MetaModel::MetaModel(ParamRegistry& reg, const std::string& prefix, int d_r,
                     std::vector<std::pair<int, int>> layer_shapes,
                     std::vector<int> hidden, Activation act, Rng& rng,
                     bool activate_output)
    : shapes_(std::move(layer_shapes)), d_r_(d_r) {
  for (std::size_t l = 0; l < shapes_.size(); ++l) {
    MlpSpec spec;
    spec.widths.push_back(d_r);
    spec.widths.insert(spec.widths.end(), hidden.begin(), hidden.end());
    spec.widths.push_back(shapes_[l].first + shapes_[l].second + 1);
    spec.hidden = act;
    spec.activate_output = activate_output;
    nets_.emplace_back(reg, prefix + ".layer" + std::to_string(l), std::move(spec), rng);
  }
  temperature_ = Temperature(reg, prefix + ".log_tau", 1.0);
}

Value MetaModel::logits(Graph& g, Value r, std::size_t layer) const {
  return nets_.at(layer).forward(g, r);
}

DropoutRates MetaModel::predict_rates(Graph& g, const SetRepresentation& r,
                                      RateSource src) const {
  if (r.r.cols() != d_r_) {
    throw diff::ShapeError("predict_rates: representation " + diff::shape_str(r.r.data()) +
                           " does not match meta input width " + std::to_string(d_r_));
  }
  DropoutRates out;
  out.source = src;
  Value t = tau(g);
  for (std::size_t l = 0; l < shapes_.size(); ++l) {
    out.layers.push_back(
        low_rank_rates(logits(g, r.r, l), shapes_[l].first, shapes_[l].second, t));
  }
  return out;
}

Value kl_conditional_layer(Value p, Value p_hat) {
  if (p.rows() != p_hat.rows() || p.cols() != p_hat.cols()) {
    throw diff::ShapeError("kl_conditional: shape mismatch " + diff::shape_str(p.data()) +
                           " vs " + diff::shape_str(p_hat.data()));
  }
  Value var = p * (1.0 - p);
  Value var_hat = p_hat * (1.0 - p_hat);
  Value ratio = (var + diff::square(p_hat - p)) / (2.0 * var_hat);
  Value logs = 0.5 * (diff::log(var_hat) - diff::log(var));
  return diff::sum_all(ratio + logs - 0.5);
}

Value kl_conditional(const DropoutRates& p, const DropoutRates& p_hat) {
  if (p.layers.size() != p_hat.layers.size() || p.layers.empty()) {
    throw diff::ShapeError("kl_conditional: rate sets have " +
                           std::to_string(p.layers.size()) + " and " +
                           std::to_string(p_hat.layers.size()) + " layers");
  }
  Value total = kl_conditional_layer(p.layers[0], p_hat.layers[0]);
  for (std::size_t l = 1; l < p.layers.size(); ++l) {
    total = total + kl_conditional_layer(p.layers[l], p_hat.layers[l]);
  }
  return total;
}

Value sample_weights(Value theta, Value p, Value noise) {
  return (1.0 - p) * theta + diff::sqrt(p * (1.0 - p)) * theta * noise;
}

Value local_reparam_forward(Value a, Value theta, Value bias, Value p, Value zeta) {
  Value mean_w = (1.0 - p) * theta;
  Value var_w = p * (1.0 - p) * diff::square(theta);
  Value mean = diff::matmul(a, mean_w) + bias;
  Value var = diff::matmul(diff::square(a), var_w);
  return mean + diff::sqrt(var) * zeta;
}

}  // namespace nvdp
