// SPDX-License-Identifier: Apache-2.0
#include "nvdp/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

namespace nvdp::diff {

namespace {

double eval_loss(const std::function<Value(Graph&)>& build, const std::string& who) {
  Graph g;
  const double v = build(g).scalar();
  if (!std::isfinite(v)) {
    throw std::runtime_error("grad_check: non-finite loss while perturbing " + who);
  }
  return v;
}

}  // namespace

GradCheckReport grad_check(const std::function<Value(Graph&)>& build,
                           std::span<Parameter* const> params,
                           const GradCheckOptions& opts) {
  if (params.empty()) throw std::invalid_argument("grad_check: no parameters");
  if (!(opts.step > 0.0)) throw std::invalid_argument("grad_check: step must be > 0");

  for (Parameter* p : params) p->zero_grad();
  {
    Graph g;
    Value loss = build(g);
    if (!std::isfinite(loss.scalar())) {
      throw std::runtime_error("grad_check: non-finite loss at the base point");
    }
    g.backward(loss);
  }

  std::mt19937_64 rng(opts.seed);
  GradCheckReport report;
  for (Parameter* p : params) {
    const Index n = p->value.size();
    std::vector<Index> entries(static_cast<std::size_t>(n));
    std::iota(entries.begin(), entries.end(), Index{0});
    if (entries.size() > opts.max_entries_per_param) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(opts.max_entries_per_param);
    }
    const Matrix analytic = p->grad;
    for (Index flat : entries) {
      const Index r = flat % p->value.rows();
      const Index c = flat / p->value.rows();
      const double orig = p->value(r, c);
      p->value(r, c) = orig + opts.step;
      const double up = eval_loss(build, p->name);
      p->value(r, c) = orig - opts.step;
      const double down = eval_loss(build, p->name);
      p->value(r, c) = orig;

      const double fd = (up - down) / (2.0 * opts.step);
      const double ad = analytic(r, c);
      const double rel = std::abs(ad - fd) / std::max(1e-8, std::abs(ad) + std::abs(fd));
      ++report.entries_checked;
      if (rel > report.max_rel_error || report.worst_param.empty()) {
        report.max_rel_error = std::max(rel, report.max_rel_error);
        if (rel >= report.max_rel_error) {
          report.worst_param = p->name;
          report.worst_row = r;
          report.worst_col = c;
          report.worst_analytic = ad;
          report.worst_numeric = fd;
        }
      }
    }
  }
  return report;
}

}  // namespace nvdp::diff
