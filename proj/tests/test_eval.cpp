// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <gtest/gtest.h>

#include "nvdp/eval.hpp"

using namespace nvdp;

namespace {

// Returns the task's own y values as the mean with unit sigma, looked up by x.
class OracleModel : public Model {
 public:
  explicit OracleModel(const Task& task) : Model(ModelConfig{}), task_(task) {}

  LossTerms loss_terms(Graph&, const Task&, NoiseSource&, int) const override {
    throw std::logic_error("oracle model is not trainable");
  }

  std::vector<Predictive> sample_predictive(const Matrix&, const Matrix&, const Matrix& xs,
                                            int n, NoiseSource&) const override {
    Predictive p{Matrix(xs.rows(), 1), Matrix::Ones(xs.rows(), 1)};
    for (Index i = 0; i < xs.rows(); ++i) {
      for (Index k = 0; k < task_.xs.rows(); ++k) {
        if (task_.xs(k, 0) == xs(i, 0)) p.mu(i, 0) = task_.ys(k, 0);
      }
    }
    return std::vector<Predictive>(static_cast<std::size_t>(n), p);
  }

 private:
  Task task_;
};

ModelConfig small(ModelKind kind) {
  ModelConfig c;
  c.kind = kind;
  c.d_r = c.d_z = 8;
  c.encoder_depth = 2;
  c.decoder_hidden = {8, 8};
  c.meta_hidden = {8};
  return c;
}

std::vector<Task> gp_tasks(std::uint64_t seed, int n, std::size_t points = 120) {
  GpTaskSource src(GpConfig{}, SplitRanges{}, points);
  Rng rng(seed);
  std::vector<Task> out;
  for (int i = 0; i < n; ++i) out.push_back(src.eval_task(rng));
  return out;
}

double normal_logpdf(double y, double mu, double sigma) {
  const double z = (y - mu) / sigma;
  return -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
}

}  // namespace

TEST(LogMeanExp, MatchesDirectComputation) {
  const std::vector<double> v{-1.0, -2.5, 0.3};
  const double direct = std::log((std::exp(-1.0) + std::exp(-2.5) + std::exp(0.3)) / 3.0);
  EXPECT_NEAR(log_mean_exp(v), direct, 1e-15);
  const std::vector<double> big{-1000.0, -1000.0};
  EXPECT_NEAR(log_mean_exp(big), -1000.0, 1e-12);
}

TEST(PointLogLikelihoods, AveragesDensitiesAcrossSamples) {
  Matrix ys(2, 1);
  ys << 0.2, -1.0;
  Predictive a{Matrix(2, 1), Matrix(2, 1)};
  Predictive b{Matrix(2, 1), Matrix(2, 1)};
  a.mu << 0.0, -0.5;
  a.sigma << 1.0, 0.3;
  b.mu << 0.5, 1.0;
  b.sigma << 0.5, 2.0;
  const auto ll = point_log_likelihoods({a, b}, ys);
  for (Index i = 0; i < 2; ++i) {
    const double pa = std::exp(normal_logpdf(ys(i, 0), a.mu(i, 0), a.sigma(i, 0)));
    const double pb = std::exp(normal_logpdf(ys(i, 0), b.mu(i, 0), b.sigma(i, 0)));
    EXPECT_NEAR(ll[static_cast<std::size_t>(i)], std::log(0.5 * (pa + pb)), 1e-13);
  }
}

TEST(TaskMetrics, OraclePredictorGivesStandardNormalConstant) {
  const Task task = gp_tasks(1, 1).front();
  OracleModel oracle(task);
  NoiseSource noise(0);
  const TaskMetrics m = task_metrics(oracle, task, 16, noise);
  const double expected = -0.5 * std::log(2.0 * std::numbers::pi);
  EXPECT_NEAR(m.ll, expected, 1e-9);
  EXPECT_NEAR(m.rll, expected, 1e-9);
  EXPECT_NEAR(m.pll, expected, 1e-9);
}

TEST(TaskMetrics, LlIsTheConvexCombination) {
  for (ModelKind kind : {ModelKind::nvdp, ModelKind::np, ModelKind::cnp}) {
    auto model = make_model(small(kind), 3);
    for (const Task& t : gp_tasks(4, 5)) {
      NoiseSource noise(5);
      const TaskMetrics m = task_metrics(*model, t, 8, noise);
      const double s = static_cast<double>(m.n_context);
      const double n = static_cast<double>(m.n_target);
      EXPECT_EQ(m.n_context + m.n_target, t.size());
      EXPECT_NEAR(m.ll, (s * m.rll + n * m.pll) / (s + n), 1e-12);
    }
  }
}

TEST(TaskMetrics, DeterministicModelIgnoresSampleCount) {
  auto model = make_model(small(ModelKind::cnp), 6);
  const Task t = gp_tasks(7, 1).front();
  NoiseSource a(1);
  NoiseSource b(2);
  const TaskMetrics one = task_metrics(*model, t, 1, a);
  const TaskMetrics many = task_metrics(*model, t, 16, b);
  EXPECT_NEAR(one.ll, many.ll, 1e-12);
  EXPECT_NEAR(one.pll, many.pll, 1e-12);
}

TEST(ComputeMetrics, IndependentOfTaskOrder) {
  auto model = make_model(small(ModelKind::nvdp), 8);
  std::vector<Task> tasks = gp_tasks(9, 6);
  const MetricsRecord a = compute_metrics(*model, tasks, 4, 10);
  std::reverse(tasks.begin(), tasks.end());
  const MetricsRecord b = compute_metrics(*model, tasks, 4, 10);
  EXPECT_NEAR(a.ll, b.ll, 1e-12);
  EXPECT_NEAR(a.rll, b.rll, 1e-12);
  EXPECT_NEAR(a.pll, b.pll, 1e-12);
  EXPECT_EQ(a.task_count, 6u);
  EXPECT_EQ(a.n_samples, 4);
  EXPECT_EQ(a.model_kind, "nvdp");
  const MetricsRecord c = compute_metrics(*model, tasks, 4, 11);
  EXPECT_NE(a.ll, c.ll);
}

TEST(ComputeMetrics, EmptyTaskListGivesEmptyRecord) {
  auto model = make_model(small(ModelKind::cnp), 1);
  const MetricsRecord r = compute_metrics(*model, std::span<const Task>{}, 4, 1);
  EXPECT_EQ(r.task_count, 0u);
  EXPECT_EQ(r.ll, 0.0);
}

TEST(TaskFingerprint, DependsOnContentsAndSplit) {
  Task t = gp_tasks(12, 1).front();
  const auto f = task_fingerprint(t);
  EXPECT_EQ(f, task_fingerprint(t));
  std::swap(t.context.front(), t.target.front());
  EXPECT_NE(f, task_fingerprint(t));
}

TEST(ActiveLearning, ProducesOneStepPerAcquisitionPlusStart) {
  auto model = make_model(small(ModelKind::nvdp), 13);
  const Task t = gp_tasks(14, 1).front();
  ActiveLearningOptions opts;
  opts.realizations = 4;
  opts.metric_samples = 4;
  Rng rng(15);
  const auto steps = active_learning_run(*model, t, opts, rng);
  ASSERT_EQ(steps.size(), 20u);
  std::vector<std::size_t> acquired;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    EXPECT_EQ(steps[i].metrics.n_context, i + 1);
    EXPECT_EQ(steps[i].metrics.n_context + steps[i].metrics.n_target, t.size());
    acquired.push_back(steps[i].acquired);
  }
  std::sort(acquired.begin(), acquired.end());
  EXPECT_EQ(std::adjacent_find(acquired.begin(), acquired.end()), acquired.end());
}

TEST(ActiveLearning, ZeroVarianceTiesGoToLowestIndex) {
  auto model = make_model(small(ModelKind::cnp), 16);
  const Task t = gp_tasks(17, 1).front();
  ActiveLearningOptions opts;
  opts.n_acquire = 5;
  opts.realizations = 3;
  opts.metric_samples = 1;
  Rng rng(18);
  const auto steps = active_learning_run(*model, t, opts, rng);
  std::size_t expect = 0;
  for (std::size_t i = 1; i < steps.size(); ++i) {
    if (expect == steps[0].acquired) ++expect;
    EXPECT_EQ(steps[i].acquired, expect);
    ++expect;
  }
}

TEST(ActiveLearning, SameSeedSameCurve) {
  auto model = make_model(small(ModelKind::nvdp), 19);
  const Task t = gp_tasks(20, 1).front();
  ActiveLearningOptions opts;
  opts.n_acquire = 4;
  opts.realizations = 3;
  opts.metric_samples = 3;
  Rng a(21);
  Rng b(21);
  const auto x = active_learning_run(*model, t, opts, a);
  const auto y = active_learning_run(*model, t, opts, b);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_EQ(x[i].acquired, y[i].acquired);
    EXPECT_EQ(x[i].metrics.ll, y[i].metrics.ll);
  }
}

TEST(ActiveLearning, ExhaustedPoolIsAnError) {
  auto model = make_model(small(ModelKind::nvdp), 22);
  Task t;
  t.xs = Eigen::VectorXd::LinSpaced(10, -1.0, 1.0);
  t.ys = t.xs;
  ActiveLearningOptions opts;
  Rng rng(23);
  try {
    active_learning_run(*model, t, opts, rng);
    FAIL() << "expected invalid_argument";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("exhausted"), std::string::npos);
  }
}

TEST(Export, CsvRoundTripsWithHeader) {
  const auto path = std::filesystem::temp_directory_path() / "nvdp_export_test.csv";
  MetricsRecord r;
  r.step = 500;
  r.model_kind = "nvdp";
  r.seed = 3;
  r.ll = -0.123456789012345678;
  r.rll = 0.1;
  r.pll = -1.0 / 3.0;
  const std::vector<MetricsRecord> recs{r};
  const std::vector<ResultRow> curves{{1, "np+random", 3, -1.5, -1.0, -2.0}};
  export_results(recs, curves, path, ResultFormat::csv);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, kResultsCsvHeader);
  const auto rows = read_results_csv(path);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].step, 500);
  EXPECT_EQ(rows[0].model, "nvdp");
  EXPECT_EQ(rows[0].ll, r.ll);
  EXPECT_EQ(rows[0].pll, r.pll);
  EXPECT_EQ(rows[1].model, "np+random");
  std::filesystem::remove(path);
}

TEST(Export, JsonHoldsConfigAndRecords) {
  const auto path = std::filesystem::temp_directory_path() / "nvdp_export_test.json";
  MetricsRecord r;
  r.model_kind = "cnp";
  const std::vector<MetricsRecord> recs{r};
  export_results(recs, {}, path, ResultFormat::json, nlohmann::json{{"seed", 4}});
  std::ifstream in(path);
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j["config"]["seed"], 4);
  EXPECT_EQ(j["records"].size(), 1u);
  EXPECT_EQ(j["records"][0]["model"], "cnp");
  std::filesystem::remove(path);
}

TEST(Export, NothingToWriteOrBadPathIsAnError) {
  const auto path = std::filesystem::temp_directory_path() / "nvdp_export_empty.csv";
  EXPECT_THROW(export_results({}, {}, path, ResultFormat::csv), std::invalid_argument);
  MetricsRecord r;
  const std::vector<MetricsRecord> recs{r};
  const auto blocked = std::filesystem::temp_directory_path() / "nvdp_export_blocker";
  { std::ofstream(blocked) << "file"; }
  EXPECT_THROW(export_results(recs, {}, blocked / "y.csv", ResultFormat::csv),
               std::runtime_error);
  std::filesystem::remove(blocked);
}
