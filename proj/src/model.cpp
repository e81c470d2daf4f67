// SPDX-License-Identifier: Apache-2.0
#include "nvdp/model.hpp"

#include <stdexcept>

#include "nvdp/baselines.hpp"
#include "nvdp/nvdp_model.hpp"

namespace nvdp {

namespace {
constexpr std::pair<ModelKind, const char*> kKinds[] = {
    {ModelKind::nvdp, "nvdp"},     {ModelKind::np, "np"},
    {ModelKind::np_vp, "np-vp"},   {ModelKind::cnp, "cnp"},
    {ModelKind::np_cnp, "np-cnp"}, {ModelKind::np_cnp_vp, "np-cnp-vp"},
};
}  // namespace

std::string to_string(ModelKind k) {
  for (const auto& [kind, name] : kKinds) {
    if (kind == k) return name;
  }
  return "?";
}

std::optional<ModelKind> parse_model_kind(std::string_view s) {
  for (const auto& [kind, name] : kKinds) {
    if (s == name) return kind;
  }
  return std::nullopt;
}

std::string valid_model_kinds() {
  std::string out;
  for (const auto& [kind, name] : kKinds) {
    if (!out.empty()) out += ", ";
    out += name;
  }
  return out;
}

std::string to_string(VarianceMode v) { return v == VarianceMode::fixed ? "fixed" : "learned"; }

std::optional<VarianceMode> parse_variance_mode(std::string_view s) {
  if (s == "fixed") return VarianceMode::fixed;
  if (s == "learned") return VarianceMode::learned;
  return std::nullopt;
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::none: return "none";
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky-relu";
    case Activation::mish: return "mish";
  }
  return "?";
}

std::optional<Activation> parse_activation(std::string_view s) {
  if (s == "none") return Activation::none;
  if (s == "relu") return Activation::relu;
  if (s == "leaky-relu") return Activation::leaky_relu;
  if (s == "mish") return Activation::mish;
  return std::nullopt;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("model." + m); };
  if (x_dim < 1) fail("x_dim: must be >= 1");
  if (y_dim < 1) fail("y_dim: must be >= 1");
  if (d_r < 1) fail("d_r: must be >= 1");
  if (d_z < 1) fail("d_z: must be >= 1");
  if (encoder_depth < 1) fail("encoder_depth: must be >= 1");
  for (int w : decoder_hidden) {
    if (w < 1) fail("decoder_hidden: widths must be >= 1");
  }
  for (int w : meta_hidden) {
    if (w < 1) fail("meta_hidden: widths must be >= 1");
  }
  if (variance == VarianceMode::fixed && !(fixed_sigma > 0.0)) {
    fail("fixed_sigma: must be > 0");
  }
}

ModelConfig ModelConfig::preset(std::string_view name) {
  ModelConfig c;
  if (name == "gp-desk") return c;
  if (name == "gp-paper") {
    c.d_r = c.d_z = 128;
    c.encoder_depth = 6;
    c.decoder_hidden = {128, 128, 128, 128};
    c.meta_hidden = {128, 128, 128, 128};
    return c;
  }
  if (name == "trig-toy") {
    c.variance = VarianceMode::learned;
    c.d_r = c.d_z = 12;
    c.encoder_depth = 6;
    c.decoder_hidden = {12, 12};
    c.meta_hidden = {12, 12, 12, 12};
    c.meta_activation = Activation::mish;
    c.decoder_uses_r = true;
    c.meta_activate_output = true;
    return c;
  }
  if (name == "image-desk") {
    c.variance = VarianceMode::learned;
    c.x_dim = 2;
    return c;
  }
  throw std::invalid_argument("unknown model preset '" + std::string(name) +
                              "' (valid: gp-desk, gp-paper, trig-toy, image-desk)");
}

std::unique_ptr<Model> make_model(const ModelConfig& cfg, std::uint64_t init_seed) {
  cfg.validate();
  if (cfg.kind == ModelKind::nvdp) return std::make_unique<NvdpModel>(cfg, init_seed);
  return std::make_unique<NpModel>(cfg, init_seed);
}

Value gaussian_nll(const Matrix& y, const Gaussian& pred) {
  Graph& g = *pred.mu.graph();
  if (y.rows() != pred.mu.rows() || y.cols() != pred.mu.cols()) {
    throw diff::ShapeError("gaussian_nll: targets " + diff::shape_str(y) + " vs mean " +
                           diff::shape_str(pred.mu.data()));
  }
  Value resid = g.constant(y) - pred.mu;
  Value log_density = (-kHalfLog2Pi) - diff::log(pred.sigma) -
                      diff::square(resid) / (2.0 * diff::square(pred.sigma));
  return diff::scale(diff::sum_all(log_density), -1.0 / static_cast<double>(y.rows()));
}

int decoder_output_width(const ModelConfig& cfg) {
  return cfg.variance == VarianceMode::learned ? 2 * cfg.y_dim : cfg.y_dim;
}

Gaussian decoder_head(Graph& g, Value out, const ModelConfig& cfg) {
  if (cfg.variance == VarianceMode::learned) return split_mean_logstd(out);
  Gaussian res;
  res.mu = out;
  res.sigma = g.constant(Matrix::Constant(out.rows(), out.cols(), cfg.fixed_sigma));
  return res;
}

}  // namespace nvdp
