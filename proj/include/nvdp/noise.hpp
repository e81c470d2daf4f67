// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <boost/random/normal_distribution.hpp>

#include "nvdp/diff.hpp"

namespace nvdp {

// Source of standard-normal draws for reparameterized sampling. In frozen
// mode every draw is recorded, and rewind() replays the recorded sequence so
// a loss can be rebuilt with identical noise (gradient checking).
class NoiseSource {
 public:
  explicit NoiseSource(std::uint64_t seed = 0) : rng_(seed) {}

  diff::Matrix normal(diff::Index rows, diff::Index cols);

  void freeze();
  void rewind() { cursor_ = 0; }
  bool frozen() const { return frozen_; }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
  boost::random::normal_distribution<double> dist_{0.0, 1.0};
  bool frozen_ = false;
  std::vector<diff::Matrix> tape_;
  std::size_t cursor_ = 0;
};

}  // namespace nvdp
