// SPDX-License-Identifier: Apache-2.0
#include "nvdp/baselines.hpp"

#include <numeric>
#include <stdexcept>

namespace nvdp {

Value gaussian_kl(const LatentPosterior& q, const LatentPosterior& p) {
  if (q.mu.cols() != p.mu.cols() || q.mu.rows() != p.mu.rows()) {
    throw diff::ShapeError("gaussian_kl: dimension mismatch " + diff::shape_str(q.mu.data()) +
                           " vs " + diff::shape_str(p.mu.data()));
  }
  Value var_q = diff::square(q.sigma);
  Value var_p = diff::square(p.sigma);
  Value terms = diff::log(p.sigma) - diff::log(q.sigma) +
                (var_q + diff::square(q.mu - p.mu)) / (2.0 * var_p) - 0.5;
  return diff::sum_all(terms);
}

bool has_latent_path(ModelKind k) { return k != ModelKind::cnp && k != ModelKind::nvdp; }

bool has_deterministic_path(ModelKind k) {
  return k == ModelKind::cnp || k == ModelKind::np_cnp || k == ModelKind::np_cnp_vp;
}

bool uses_variational_prior(ModelKind k) {
  return k == ModelKind::np_vp || k == ModelKind::np_cnp_vp;
}

NpModel::NpModel(ModelConfig cfg, std::uint64_t init_seed) : Model(std::move(cfg)) {
  if (cfg_.kind == ModelKind::nvdp) throw std::invalid_argument("NpModel cannot be nvdp");
  Rng rng(init_seed);
  int dec_in = cfg_.x_dim;
  if (has_latent_path(cfg_.kind)) {
    latent_encoder_ = SetEncoder(params_, "latent_encoder", cfg_.x_dim, cfg_.y_dim,
                                 cfg_.d_r, cfg_.encoder_depth, rng);
    mu_head_ = make_linear(params_, "latent.mu", cfg_.d_r, cfg_.d_z, rng);
    logstd_head_ = make_linear(params_, "latent.logstd", cfg_.d_r, cfg_.d_z, rng);
    dec_in += cfg_.d_z;
  }
  if (has_deterministic_path(cfg_.kind)) {
    det_encoder_ = SetEncoder(params_, "det_encoder", cfg_.x_dim, cfg_.y_dim, cfg_.d_r,
                              cfg_.encoder_depth, rng);
    dec_in += cfg_.d_r;
  }
  MlpSpec spec;
  spec.widths.push_back(dec_in);
  spec.widths.insert(spec.widths.end(), cfg_.decoder_hidden.begin(),
                     cfg_.decoder_hidden.end());
  spec.widths.push_back(decoder_output_width(cfg_));
  spec.hidden = cfg_.decoder_activation;
  spec.output = cfg_.variance == VarianceMode::learned ? OutputHead::split_mean_logstd
                                                       : OutputHead::none;
  decoder_ = Mlp(params_, "decoder", std::move(spec), rng);
}

LatentPosterior NpModel::latent_from(Graph& g, const SetRepresentation& r) const {
  LatentPosterior q;
  q.mu = mu_head_.forward(g, r.r);
  q.sigma = kSigmaFloor + (1.0 - kSigmaFloor) * diff::softplus(logstd_head_.forward(g, r.r));
  return q;
}

LatentPosterior NpModel::np_posterior(Graph& g, const Matrix& xs, const Matrix& ys) const {
  if (!has_latent_path(cfg_.kind)) {
    throw std::logic_error(to_string(cfg_.kind) + " has no latent path");
  }
  return latent_from(g, latent_encoder_.encode(g, xs, ys));
}

NpModel::Conditioned NpModel::condition(Graph& g, const PointSet& context,
                                        const std::optional<PointSet>& full) const {
  Conditioned c;
  if (has_latent_path(cfg_.kind)) {
    c.q_context = latent_from(g, latent_encoder_.encode(g, context.xs, context.ys));
    if (full) c.q_full = latent_from(g, latent_encoder_.encode(g, full->xs, full->ys));
  }
  if (has_deterministic_path(cfg_.kind)) {
    c.r_det = det_encoder_.encode(g, context.xs, context.ys).r;
  }
  return c;
}

Gaussian NpModel::decode(Graph& g, const Matrix& xs, const std::optional<Value>& z,
                         const std::optional<Value>& r_det) const {
  std::vector<Value> parts{g.constant(xs)};
  if (z) parts.push_back(diff::tile_rows(*z, xs.rows()));
  if (r_det) parts.push_back(diff::tile_rows(*r_det, xs.rows()));
  return decoder_head(g, decoder_.forward(g, diff::concat_cols(parts)), cfg_);
}

NpModel::Output NpModel::finish(Graph& g, const Matrix& xs, const Conditioned& c,
                                NoiseSource& noise) const {
  Output out;
  std::optional<Value> z;
  if (c.q_context) {
    const bool vp = uses_variational_prior(cfg_.kind);
    if (c.q_full) {
      const LatentPosterior& sample_from = vp ? *c.q_context : *c.q_full;
      z = sample_from.mu + sample_from.sigma * g.constant(noise.normal(1, cfg_.d_z));
      out.kl = vp ? gaussian_kl(*c.q_context, *c.q_full) : gaussian_kl(*c.q_full, *c.q_context);
    } else {
      z = c.q_context->mu + c.q_context->sigma * g.constant(noise.normal(1, cfg_.d_z));
    }
  }
  if (!out.kl.valid()) out.kl = g.constant(0.0);
  out.pred = decode(g, xs, z, c.r_det);
  return out;
}

NpModel::Output NpModel::np_forward(Graph& g, const Matrix& xs, const PointSet& context,
                                    const std::optional<PointSet>& full,
                                    NoiseSource& noise) const {
  if (context.xs.rows() == 0) throw std::invalid_argument("np: empty context set");
  if (uses_variational_prior(cfg_.kind) && !full) {
    throw std::invalid_argument(to_string(cfg_.kind) +
                                " needs the full task set to form its variational prior");
  }
  return finish(g, xs, condition(g, context, full), noise);
}

LossTerms NpModel::loss_terms(Graph& g, const Task& task, NoiseSource& noise,
                              int noise_samples) const {
  if (task.context.empty()) throw std::invalid_argument("np: empty context set");
  if (task.target.empty()) throw std::invalid_argument("np: empty target set");
  if (noise_samples < 1) throw std::invalid_argument("np: noise_samples must be >= 1");

  // One feature pass over context + target; the context rows lead.
  const std::vector<std::size_t> full = task.full_set();
  const Matrix fx = select_rows(task.xs, full);
  const Matrix fy = select_rows(task.ys, full);
  std::vector<std::size_t> ctx_rows(task.context.size());
  std::iota(ctx_rows.begin(), ctx_rows.end(), std::size_t{0});

  Conditioned c;
  if (has_latent_path(cfg_.kind)) {
    Value feats = latent_encoder_.features(g, fx, fy);
    c.q_context = latent_from(g, SetEncoder::pool(feats, ctx_rows));
    c.q_full = latent_from(g, SetEncoder::pool(feats));
  }
  if (has_deterministic_path(cfg_.kind)) {
    Value feats = det_encoder_.features(g, fx, fy);
    c.r_det = SetEncoder::pool(feats, ctx_rows).r;
  }

  const Matrix xt = select_rows(task.xs, task.target);
  const Matrix yt = select_rows(task.ys, task.target);
  Output first = finish(g, xt, c, noise);
  Value nll = gaussian_nll(yt, first.pred);
  for (int s = 1; s < noise_samples; ++s) {
    nll = nll + gaussian_nll(yt, finish(g, xt, c, noise).pred);
  }
  if (noise_samples > 1) nll = diff::scale(nll, 1.0 / noise_samples);
  return {nll, first.kl};
}

std::vector<Predictive> NpModel::sample_predictive(const Matrix& cx, const Matrix& cy,
                                                   const Matrix& xs, int n,
                                                   NoiseSource& noise) const {
  Graph g;
  Conditioned c = condition(g, PointSet{cx, cy}, std::nullopt);
  std::vector<Predictive> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) {
    Output o = finish(g, xs, c, noise);
    out.push_back({o.pred.mu.data(), o.pred.sigma.data()});
  }
  return out;
}

}  // namespace nvdp
