// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "nvdp/diff.hpp"

namespace nvdp {

using diff::Graph;
using diff::Index;
using diff::Matrix;
using diff::Parameter;
using diff::Value;
using Rng = std::mt19937_64;

// Owns every trainable array of a model. Names are unique; addresses are
// stable for the registry's lifetime.
class ParamRegistry {
 public:
  ParamRegistry() = default;
  ParamRegistry(const ParamRegistry&) = delete;
  ParamRegistry& operator=(const ParamRegistry&) = delete;

  Parameter& add(std::string name, Index rows, Index cols);
  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  Parameter& at(std::size_t i) { return *params_[i]; }
  const Parameter& at(std::size_t i) const { return *params_[i]; }
  std::vector<Parameter*> all();

  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

enum class Activation { none, relu, leaky_relu, mish };
enum class OutputHead { none, split_mean_logstd };

struct MlpSpec {
  // Includes the input width: {in, hidden..., out}.
  std::vector<int> widths;
  Activation hidden = Activation::relu;
  OutputHead output = OutputHead::none;
  // Apply the hidden activation after the last layer too (set encoders).
  bool activate_output = false;

  void validate() const;
};

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
void glorot_init(Parameter& w, Rng& rng);

struct Linear {
  Parameter* weight = nullptr;  // in x out
  Parameter* bias = nullptr;    // 1 x out

  Value forward(Graph& g, Value x) const;
  Index in() const { return weight->value.rows(); }
  Index out() const { return weight->value.cols(); }
};

Linear make_linear(ParamRegistry& reg, const std::string& prefix, int in, int out,
                   Rng& rng);

Value activate(Value x, Activation act);

// x * tanh(softplus(x))
Value mish(Value x);

struct Gaussian {
  Value mu;
  Value sigma;
};

inline constexpr double kSigmaFloor = 0.1;

// Splits the columns into (mu, logstd) halves; sigma = 0.1 + 0.9 softplus(logstd).
Gaussian split_mean_logstd(Value out);

class Mlp {
 public:
  Mlp() = default;
  Mlp(ParamRegistry& reg, const std::string& prefix, MlpSpec spec, Rng& rng);

  // Raw output of the last affine layer (after its activation when
  // activate_output is set).
  Value forward(Graph& g, Value x) const;
  // forward() followed by split_mean_logstd. Requires OutputHead::split_mean_logstd.
  Gaussian forward_gaussian(Graph& g, Value x) const;

  const MlpSpec& spec() const { return spec_; }
  const std::vector<Linear>& layers() const { return layers_; }

 private:
  MlpSpec spec_;
  std::vector<Linear> layers_;
};

// Learnable sigmoid temperature stored as log(tau), so tau > 0 always.
class Temperature {
 public:
  Temperature() = default;
  Temperature(ParamRegistry& reg, const std::string& name, double init_tau = 1.0);

  Value tau(Graph& g) const;
  double value() const;

 private:
  Parameter* log_tau_ = nullptr;
};

// 1 / (1 + exp(-x / tau)); tau is a 1x1 value.
Value tempered_sigmoid(Value x, Value tau);

}  // namespace nvdp
