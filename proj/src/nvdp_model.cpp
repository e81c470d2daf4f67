// SPDX-License-Identifier: Apache-2.0
#include "nvdp/nvdp_model.hpp"

#include <numeric>
#include <stdexcept>

namespace nvdp {

NvdpModel::NvdpModel(ModelConfig cfg, std::uint64_t init_seed) : Model(std::move(cfg)) {
  Rng rng(init_seed);
  encoder_ = SetEncoder(params_, "encoder", cfg_.x_dim, cfg_.y_dim, cfg_.d_r,
                        cfg_.encoder_depth, rng);
  std::vector<int> widths;
  widths.push_back(cfg_.x_dim + (cfg_.decoder_uses_r ? cfg_.d_r : 0));
  widths.insert(widths.end(), cfg_.decoder_hidden.begin(), cfg_.decoder_hidden.end());
  widths.push_back(decoder_output_width(cfg_));
  std::vector<std::pair<int, int>> shapes;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    layers_.push_back(make_posterior_layer(params_, "decoder.layer" + std::to_string(l),
                                           widths[l], widths[l + 1], rng));
    shapes.emplace_back(widths[l], widths[l + 1]);
  }
  meta_ = MetaModel(params_, "meta", cfg_.d_r, std::move(shapes), cfg_.meta_hidden,
                    cfg_.meta_activation, rng, cfg_.meta_activate_output);
}

Gaussian NvdpModel::decode(Graph& g, const Matrix& xs, const SetRepresentation& r,
                           const DropoutRates& rates, NoiseSource& noise) const {
  if (rates.layers.size() != layers_.size()) {
    throw diff::ShapeError("decode: got rates for " + std::to_string(rates.layers.size()) +
                           " layers, decoder has " + std::to_string(layers_.size()));
  }
  Value h = g.constant(xs);
  if (cfg_.decoder_uses_r) h = diff::concat_cols({h, diff::tile_rows(r.r, xs.rows())});
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const PosteriorLayer& layer = layers_[l];
    Value zeta = g.constant(noise.normal(xs.rows(), layer.out()));
    h = local_reparam_forward(h, g.param(*layer.theta), g.param(*layer.bias),
                              rates.layers[l], zeta);
    if (l + 1 < layers_.size()) h = activate(h, cfg_.decoder_activation);
  }
  return decoder_head(g, h, cfg_);
}

LossTerms NvdpModel::loss_terms(Graph& g, const Task& task, NoiseSource& noise,
                                int noise_samples) const {
  if (task.context.empty()) throw std::invalid_argument("nvdp: empty context set");
  if (task.target.empty()) throw std::invalid_argument("nvdp: empty target set");
  if (noise_samples < 1) throw std::invalid_argument("nvdp: noise_samples must be >= 1");

  // Context rows come first in the full set, so both representations share
  // one feature pass.
  const std::vector<std::size_t> full = task.full_set();
  Value feats = encoder_.features(g, select_rows(task.xs, full), select_rows(task.ys, full));
  std::vector<std::size_t> ctx_rows(task.context.size());
  std::iota(ctx_rows.begin(), ctx_rows.end(), std::size_t{0});
  SetRepresentation r_ctx = SetEncoder::pool(feats, ctx_rows);
  SetRepresentation r_full = SetEncoder::pool(feats);

  DropoutRates p = meta_.predict_rates(g, r_ctx, RateSource::context);
  DropoutRates p_hat = meta_.predict_rates(g, r_full, RateSource::full_set);

  const Matrix xt = select_rows(task.xs, task.target);
  const Matrix yt = select_rows(task.ys, task.target);
  Value nll = gaussian_nll(yt, decode(g, xt, r_ctx, p, noise));
  for (int s = 1; s < noise_samples; ++s) {
    nll = nll + gaussian_nll(yt, decode(g, xt, r_ctx, p, noise));
  }
  if (noise_samples > 1) nll = diff::scale(nll, 1.0 / noise_samples);
  return {nll, kl_conditional(p, p_hat)};
}

DropoutRates NvdpModel::rates(Graph& g, const Matrix& cx, const Matrix& cy) const {
  return meta_.predict_rates(g, encoder_.encode(g, cx, cy), RateSource::context);
}

std::vector<Matrix> NvdpModel::rate_values(const Matrix& cx, const Matrix& cy) const {
  Graph g;
  return rates(g, cx, cy).values();
}

std::vector<Predictive> NvdpModel::sample_predictive(const Matrix& cx, const Matrix& cy,
                                                     const Matrix& xs, int n,
                                                     NoiseSource& noise) const {
  Graph g;
  SetRepresentation r = encoder_.encode(g, cx, cy);
  DropoutRates p = meta_.predict_rates(g, r, RateSource::context);
  std::vector<Predictive> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) {
    Gaussian pred = decode(g, xs, r, p, noise);
    out.push_back({pred.mu.data(), pred.sigma.data()});
  }
  return out;
}

}  // namespace nvdp
