// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>

#include "nvdp/nets.hpp"

namespace nvdp {

// Mean of per-point features; 1 x d_r.
struct SetRepresentation {
  Value r;
};

// Permutation-invariant encoder: r = mean_i h(concat(x_i, y_i)), where h is an
// MLP with ReLU after every layer.
class SetEncoder {
 public:
  SetEncoder() = default;
  SetEncoder(ParamRegistry& reg, const std::string& prefix, int x_dim, int y_dim,
             int d_r, int depth, Rng& rng);

  // Per-point features h(x_i, y_i), one row per pair.
  Value features(Graph& g, const Matrix& xs, const Matrix& ys) const;

  SetRepresentation encode(Graph& g, const Matrix& xs, const Matrix& ys) const;

  // Mean over a subset of feature rows; lets a context and its superset share
  // one feature pass.
  static SetRepresentation pool(Value features, std::span<const std::size_t> rows);
  static SetRepresentation pool(Value features);

  int dim() const { return d_r_; }

 private:
  Mlp mlp_;
  int x_dim_ = 0;
  int y_dim_ = 0;
  int d_r_ = 0;
};

}  // namespace nvdp
