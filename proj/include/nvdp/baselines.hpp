// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "nvdp/model.hpp"
#include "nvdp/setenc.hpp"

namespace nvdp {

// Diagonal Gaussian over the latent z; sigma >= 0.1 by construction.
struct LatentPosterior {
  Value mu;
  Value sigma;
};

// KL(q || p) between diagonal Gaussians, summed over dimensions.
Value gaussian_kl(const LatentPosterior& q, const LatentPosterior& p);

bool has_latent_path(ModelKind k);
bool has_deterministic_path(ModelKind k);
bool uses_variational_prior(ModelKind k);

struct PointSet {
  Matrix xs;
  Matrix ys;
};

// Latent-variable neural process and its variants:
//   np         z ~ q(z|full) in training, KL(q(z|full) || q(z|context))
//   np-vp      z ~ q(z|context), KL(q(z|context) || q(z|full))
//   cnp        deterministic path only, no KL
//   np-cnp     np plus the deterministic path
//   np-cnp-vp  np-vp plus the deterministic path
class NpModel : public Model {
 public:
  NpModel(ModelConfig cfg, std::uint64_t init_seed);

  struct Output {
    Gaussian pred;
    Value kl;
  };

  LatentPosterior np_posterior(Graph& g, const Matrix& xs, const Matrix& ys) const;

  // Predictive at xs. With `full` given, the training-time sampling and KL
  // of the mode are used; without it z ~ q(z|context) and kl = 0. VP modes
  // require the full set.
  Output np_forward(Graph& g, const Matrix& xs, const PointSet& context,
                    const std::optional<PointSet>& full, NoiseSource& noise) const;

  LossTerms loss_terms(Graph& g, const Task& task, NoiseSource& noise,
                       int noise_samples = 1) const override;

  std::vector<Predictive> sample_predictive(const Matrix& cx, const Matrix& cy,
                                            const Matrix& xs, int n,
                                            NoiseSource& noise) const override;

 private:
  struct Conditioned {
    std::optional<LatentPosterior> q_context;
    std::optional<LatentPosterior> q_full;
    std::optional<Value> r_det;
  };

  LatentPosterior latent_from(Graph& g, const SetRepresentation& r) const;
  Conditioned condition(Graph& g, const PointSet& context,
                        const std::optional<PointSet>& full) const;
  Output finish(Graph& g, const Matrix& xs, const Conditioned& c, NoiseSource& noise) const;
  Gaussian decode(Graph& g, const Matrix& xs, const std::optional<Value>& z,
                  const std::optional<Value>& r_det) const;

  SetEncoder latent_encoder_;
  Linear mu_head_;
  Linear logstd_head_;
  SetEncoder det_encoder_;
  Mlp decoder_;
};

}  // namespace nvdp
