// SPDX-License-Identifier: Apache-2.0
#include "nvdp/setenc.hpp"

#include <stdexcept>

namespace nvdp {

SetEncoder::SetEncoder(ParamRegistry& reg, const std::string& prefix, int x_dim,
                       int y_dim, int d_r, int depth, Rng& rng)
    : x_dim_(x_dim), y_dim_(y_dim), d_r_(d_r) {
  if (depth < 1) throw std::invalid_argument("set encoder depth must be >= 1");
  MlpSpec spec;
  spec.widths.push_back(x_dim + y_dim);
  for (int i = 0; i < depth; ++i) spec.widths.push_back(d_r);
  spec.hidden = Activation::relu;
  spec.activate_output = true;
  mlp_ = Mlp(reg, prefix, std::move(spec), rng);
}

Value SetEncoder::features(Graph& g, const Matrix& xs, const Matrix& ys) const {
  if (xs.rows() == 0) throw std::invalid_argument("set encoder: empty set");
  if (xs.rows() != ys.rows()) {
    throw diff::ShapeError("set encoder: xs " + diff::shape_str(xs) + " vs ys " +
                           diff::shape_str(ys));
  }
  if (xs.cols() != x_dim_ || ys.cols() != y_dim_) {
    throw diff::ShapeError("set encoder: expected pairs of width " +
                           std::to_string(x_dim_) + "+" + std::to_string(y_dim_) +
                           ", got " + diff::shape_str(xs) + " and " +
                           diff::shape_str(ys));
  }
  Matrix pairs(xs.rows(), xs.cols() + ys.cols());
  pairs << xs, ys;
  return mlp_.forward(g, g.constant(std::move(pairs)));
}

SetRepresentation SetEncoder::encode(Graph& g, const Matrix& xs, const Matrix& ys) const {
  return pool(features(g, xs, ys));
}

SetRepresentation SetEncoder::pool(Value features, std::span<const std::size_t> rows) {
  if (rows.empty()) throw std::invalid_argument("set encoder: empty subset");
  return {diff::mean_cols(diff::gather_rows(features, rows))};
}

SetRepresentation SetEncoder::pool(Value features) {
  return {diff::mean_cols(features)};
}

}  // namespace nvdp
