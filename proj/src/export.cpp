// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "nvdp/eval.hpp"

namespace nvdp {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_row(std::ostream& out, const ResultRow& r) {
  out << r.step << ',' << r.model << ',' << r.seed << ',' << fmt_double(r.ll) << ','
      << fmt_double(r.rll) << ',' << fmt_double(r.pll) << '\n';
}

nlohmann::json row_json(const ResultRow& r) {
  return {{"step", r.step}, {"model", r.model}, {"seed", r.seed},
          {"ll", r.ll},     {"rll", r.rll},     {"pll", r.pll}};
}

}  // namespace

ResultRow to_row(const MetricsRecord& r) {
  return ResultRow{r.step, r.model_kind, r.seed, r.ll, r.rll, r.pll};
}

nlohmann::json to_json(const MetricsRecord& r) {
  return {{"step", r.step},
          {"model", r.model_kind},
          {"seed", r.seed},
          {"ll", r.ll},
          {"rll", r.rll},
          {"pll", r.pll},
          {"n_samples", r.n_samples},
          {"task_count", r.task_count},
          {"timestamp", r.timestamp}};
}

void export_results(std::span<const MetricsRecord> records, std::span<const ResultRow> curves,
                    const std::filesystem::path& path, ResultFormat format,
                    const nlohmann::json& config) {
  if (records.empty() && curves.empty()) {
    throw std::invalid_argument("export_results: nothing to write");
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write results to " + path.string());
  if (format == ResultFormat::csv) {
    out << kResultsCsvHeader << '\n';
    for (const MetricsRecord& r : records) write_row(out, to_row(r));
    for (const ResultRow& r : curves) write_row(out, r);
  } else {
    nlohmann::json j;
    j["config"] = config;
    j["records"] = nlohmann::json::array();
    for (const MetricsRecord& r : records) j["records"].push_back(to_json(r));
    j["curves"] = nlohmann::json::array();
    for (const ResultRow& r : curves) j["curves"].push_back(row_json(r));
    out << j.dump(2) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing results to " + path.string());
}

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != kResultsCsvHeader) {
    throw std::runtime_error("unexpected CSV header in " + path.string() + ": " + line);
  }
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string f[6];
    for (int i = 0; i < 6; ++i) {
      if (!std::getline(ls, f[i], ',')) {
        throw std::runtime_error("short CSV row in " + path.string() + ": " + line);
      }
    }
    rows.push_back(ResultRow{std::stol(f[0]), f[1], std::stoull(f[2]), std::stod(f[3]),
                             std::stod(f[4]), std::stod(f[5])});
  }
  return rows;
}

}  // namespace nvdp
