// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "nvdp/diff.hpp"

namespace nvdp::diff {

struct GradCheckOptions {
  double step = 1e-5;
  // Entries sampled per parameter; every entry is checked when the
  // parameter is smaller than this.
  std::size_t max_entries_per_param = 16;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  Index worst_row = 0;
  Index worst_col = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
};

// Compares reverse-mode gradients against central finite differences.
// `build` must construct the scalar loss deterministically (any noise it
// draws has to be replayed identically on every call). The relative error of
// an entry is |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|).
GradCheckReport grad_check(const std::function<Value(Graph&)>& build,
                           std::span<Parameter* const> params,
                           const GradCheckOptions& opts = {});

}  // namespace nvdp::diff
