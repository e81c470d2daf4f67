// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "nvdp/nets.hpp"
#include "nvdp/setenc.hpp"

// Conditional dropout posterior over the weights of a fully connected network.
//
// Each weight phi_kd ~ N((1 - P_kd) theta_kd, P_kd (1 - P_kd) theta_kd^2), with
// task-specific rates P predicted by a meta-model from a set representation:
//   P_kd = s_tau(a_k) * s_tau(b_d) * s_tau(c),   (a, b, c) = g(r)
// clipped to [0.01, 0.99]. The prior for a task is the same family conditioned
// on the whole task, so the KL between the two only involves the rates.

namespace nvdp {

inline constexpr double kRateMin = 0.01;
inline constexpr double kRateMax = 0.99;

enum class RateSource { context, full_set };

struct DropoutRates {
  std::vector<Value> layers;  // K_l x D_l each
  RateSource source = RateSource::context;

  std::vector<Matrix> values() const;
};

// theta is shared across tasks; the bias is deterministic.
struct PosteriorLayer {
  Parameter* theta = nullptr;  // K x D
  Parameter* bias = nullptr;   // 1 x D

  Index in() const { return theta->value.rows(); }
  Index out() const { return theta->value.cols(); }
};

PosteriorLayer make_posterior_layer(ParamRegistry& reg, const std::string& prefix,
                                    int in, int out, Rng& rng);

// Rank-one rates from a 1 x (K + D + 1) logit row. With clip = false the raw
// product is returned (used to check the factorization).
Value low_rank_rates(Value logits, Index k, Index d, Value tau, bool clip = true);

class MetaModel {
 public:
  MetaModel() = default;
  // One MLP per posterior layer, d_r -> hidden... -> K_l + D_l + 1, all
  // sharing a single temperature. With activate_output the logits also pass
  // through act.
  MetaModel(ParamRegistry& reg, const std::string& prefix, int d_r,
            std::vector<std::pair<int, int>> layer_shapes, std::vector<int> hidden,
            Activation act, Rng& rng, bool activate_output = false);

  DropoutRates predict_rates(Graph& g, const SetRepresentation& r, RateSource src) const;

  Value logits(Graph& g, Value r, std::size_t layer) const;
  Value tau(Graph& g) const { return temperature_.tau(g); }
  double temperature() const { return temperature_.value(); }
  std::size_t layer_count() const { return shapes_.size(); }
  int input_dim() const { return d_r_; }

 private:
  std::vector<Mlp> nets_;
  std::vector<std::pair<int, int>> shapes_;
  Temperature temperature_;
  int d_r_ = 0;
};

// KL(q(phi | context) || q(phi | full set)) for one layer, summed over
// entries; theta cancels out. Includes the -1/2 constant so KL(P, P) = 0.
Value kl_conditional_layer(Value p, Value p_hat);
Value kl_conditional(const DropoutRates& p, const DropoutRates& p_hat);

// phi = (1 - P) theta + sqrt(P (1 - P)) theta eps
Value sample_weights(Value theta, Value p, Value noise);

// Samples pre-activations B = A phi + bias directly from their Gaussian:
// mean A((1-P) theta) + bias, variance (A^2)(P(1-P) theta^2); zeta is M x D.
Value local_reparam_forward(Value a, Value theta, Value bias, Value p, Value zeta);

}  // namespace nvdp
