// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "nvdp/dropout_posterior.hpp"
#include "nvdp/model.hpp"
#include "nvdp/setenc.hpp"

namespace nvdp {

// Decoder whose weights follow the conditional dropout posterior. The context
// reaches the decoder through the predicted rates (and, optionally, as an
// extra input next to x).
class NvdpModel : public Model {
 public:
  NvdpModel(ModelConfig cfg, std::uint64_t init_seed);

  LossTerms loss_terms(Graph& g, const Task& task, NoiseSource& noise,
                       int noise_samples = 1) const override;

  std::vector<Predictive> sample_predictive(const Matrix& cx, const Matrix& cy,
                                            const Matrix& xs, int n,
                                            NoiseSource& noise) const override;

  // One stochastic realization of the decoder at xs, using local
  // reparameterization in every layer.
  Gaussian decode(Graph& g, const Matrix& xs, const SetRepresentation& r,
                  const DropoutRates& rates, NoiseSource& noise) const;

  DropoutRates rates(Graph& g, const Matrix& cx, const Matrix& cy) const;
  std::vector<Matrix> rate_values(const Matrix& cx, const Matrix& cy) const;

  const SetEncoder& encoder() const { return encoder_; }
  const MetaModel& meta() const { return meta_; }
  const std::vector<PosteriorLayer>& layers() const { return layers_; }

 private:
  SetEncoder encoder_;
  std::vector<PosteriorLayer> layers_;
  MetaModel meta_;
};

}  // namespace nvdp
