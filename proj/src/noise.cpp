// SPDX-License-Identifier: Apache-2.0
#include "nvdp/noise.hpp"

#include <stdexcept>

namespace nvdp {

diff::Matrix NoiseSource::normal(diff::Index rows, diff::Index cols) {
  if (frozen_ && cursor_ < tape_.size()) {
    const diff::Matrix& m = tape_[cursor_++];
    if (m.rows() != rows || m.cols() != cols) {
      throw std::logic_error("frozen noise replayed with a different shape");
    }
    return m;
  }
  diff::Matrix m(rows, cols);
  for (diff::Index j = 0; j < cols; ++j) {
    for (diff::Index i = 0; i < rows; ++i) m(i, j) = dist_(rng_);
  }
  if (frozen_) {
    tape_.push_back(m);
    ++cursor_;
  }
  return m;
}

void NoiseSource::freeze() {
  frozen_ = true;
  tape_.clear();
  cursor_ = 0;
}

}  // namespace nvdp
