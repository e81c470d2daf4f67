// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nvdp/nets.hpp"
#include "nvdp/noise.hpp"
#include "nvdp/tasks.hpp"

namespace nvdp {

enum class ModelKind { nvdp, np, np_vp, cnp, np_cnp, np_cnp_vp };
enum class VarianceMode { fixed, learned };

std::string to_string(ModelKind k);
std::optional<ModelKind> parse_model_kind(std::string_view s);
std::string valid_model_kinds();  // "nvdp, np, ..." for error messages
std::string to_string(VarianceMode v);
std::optional<VarianceMode> parse_variance_mode(std::string_view s);
std::string to_string(Activation a);
std::optional<Activation> parse_activation(std::string_view s);

struct ModelConfig {
  ModelKind kind = ModelKind::nvdp;
  VarianceMode variance = VarianceMode::fixed;
  double fixed_sigma = 1.0;
  int x_dim = 1;
  int y_dim = 1;
  int d_r = 64;
  int d_z = 64;
  int encoder_depth = 3;
  std::vector<int> decoder_hidden{64, 64};
  std::vector<int> meta_hidden{64, 64};
  Activation decoder_activation = Activation::relu;
  Activation meta_activation = Activation::leaky_relu;
  // Feed the context representation to the decoder next to x.
  bool decoder_uses_r = false;
  // Apply meta_activation to the rate logits as well.
  bool meta_activate_output = false;

  void validate() const;

  // Named architectures: gp-desk, gp-paper, trig-toy, image-desk.
  static ModelConfig preset(std::string_view name);
};

// Per-task pieces of the negative ELBO. nll is averaged over target points
// (and noise samples); kl is the mode's regularizer (zero for CNP).
struct LossTerms {
  Value nll;
  Value kl;
};

// One posterior realization evaluated at a set of inputs.
struct Predictive {
  Matrix mu;
  Matrix sigma;
};

class Model {
 public:
  explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) {}
  virtual ~Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ModelKind kind() const { return cfg_.kind; }
  ParamRegistry& params() { return params_; }
  const ParamRegistry& params() const { return params_; }

  virtual LossTerms loss_terms(Graph& g, const Task& task, NoiseSource& noise,
                               int noise_samples = 1) const = 0;

  // n realizations of the predictive conditioned on (cx, cy), at xs.
  virtual std::vector<Predictive> sample_predictive(const Matrix& cx, const Matrix& cy,
                                                    const Matrix& xs, int n,
                                                    NoiseSource& noise) const = 0;

 protected:
  ModelConfig cfg_;
  ParamRegistry params_;
};

std::unique_ptr<Model> make_model(const ModelConfig& cfg, std::uint64_t init_seed);

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

// -(1/M) sum_i sum_j log N(y_ij | mu_ij, sigma_ij)
Value gaussian_nll(const Matrix& y, const Gaussian& pred);

// Output head shared by every decoder: learned variance splits the last
// layer; fixed variance returns a constant sigma.
Gaussian decoder_head(Graph& g, Value out, const ModelConfig& cfg);
int decoder_output_width(const ModelConfig& cfg);

}  // namespace nvdp
