// SPDX-License-Identifier: Apache-2.0
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "nvdp/checkpoint.hpp"
#include "nvdp/cli.hpp"

namespace nvdp::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Flags shared by every subcommand.
struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> model;
  std::optional<long> iterations;
  std::optional<std::string> run_id;
  std::optional<std::size_t> n_tasks;
  std::optional<std::string> tasks;
  bool paper_preset = false;
  std::string checkpoint;
  std::string phase = "eval";
};

void add_common(CLI::App* app, CommonArgs& a) {
  app->add_option("-c,--config", a.config_path, "INI config file");
  app->add_option("--set", a.sets, "Override a config key: section.key=value")
      ->allow_extra_args(false);
  app->add_option("--seed", a.seed, "Seed for training, evaluation and acquisition streams");
  app->add_option("--model", a.model, "Model kind: " + valid_model_kinds());
  app->add_option("--run-id", a.run_id, "Run directory name under the runs root");
  app->add_option("--tasks", a.tasks, "Task source: gp, trig or idx:<path>");
}

enum class Command { train, eval, active_learn, gen_tasks };

const char* command_name(Command c) {
  switch (c) {
    case Command::train: return "train";
    case Command::eval: return "eval";
    case Command::active_learn: return "active-learn";
    case Command::gen_tasks: return "gen-tasks";
  }
  return "?";
}

// File < --set < dedicated flags.
RunConfig resolve_config(Command cmd, const CommonArgs& a) {
  FlatConfig flat;
  if (!a.config_path.empty()) flat = read_config_file(a.config_path);
  for (const auto& s : a.sets) apply_override(flat, s);
  if (a.paper_preset) {
    if (cmd == Command::train) {
      flat["model.preset"] = "gp-paper";
      flat["train.iterations"] = "500000";
    }
    flat["eval.n_tasks"] = "50000";
  }
  if (a.seed) {
    const std::string s = std::to_string(*a.seed);
    flat["train.seed"] = s;
    flat["eval.seed"] = s;
    flat["active.seed"] = s;
  }
  if (a.model) flat["model.kind"] = *a.model;
  if (a.iterations) flat["train.iterations"] = std::to_string(*a.iterations);
  if (a.run_id) flat["run.id"] = *a.run_id;
  if (a.tasks) flat["tasks.source"] = *a.tasks;
  if (a.n_tasks) {
    const std::string n = std::to_string(*a.n_tasks);
    if (cmd == Command::active_learn) {
      flat["active.n_tasks"] = n;
    } else {
      flat["eval.n_tasks"] = n;
    }
  }
  RunConfig rc = RunConfig::from_flat(flat);
  if (rc.run_id.empty()) {
    std::uint64_t seed = rc.train.seed;
    if (cmd == Command::eval || cmd == Command::gen_tasks) seed = rc.eval.seed;
    if (cmd == Command::active_learn) seed = rc.active.seed;
    rc.run_id = std::string(command_name(cmd)) + "-" +
                (cmd == Command::gen_tasks ? rc.tasks.source.substr(0, rc.tasks.source.find(':'))
                                           : to_string(rc.model.kind)) +
                "-seed" + std::to_string(seed);
  }
  return rc;
}

// Records what a run produced; always written, including on failure.
class Manifest {
 public:
  Manifest(Command cmd, const RunConfig& cfg, fs::path dir)
      : dir_(std::move(dir)), start_(std::chrono::steady_clock::now()) {
    j_["run_id"] = cfg.run_id;
    j_["command"] = command_name(cmd);
    j_["version"] = version_string();
    j_["config"] = cfg.to_json();
    j_["started"] = utc_now();
    j_["status"] = "running";
    j_["checkpoints"] = json::array();
    j_["metrics_files"] = json::array();
  }

  json& data() { return j_; }
  void add_checkpoint(const fs::path& p) { j_["checkpoints"].push_back(relative(p)); }
  void add_metrics(const fs::path& p) { j_["metrics_files"].push_back(relative(p)); }

  void finish(const std::string& status, const std::string& error = "") {
    j_["status"] = status;
    if (!error.empty()) j_["error"] = error;
    j_["finished"] = utc_now();
    j_["runtime_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    fs::create_directories(dir_);
    std::ofstream out(dir_ / "manifest.json");
    out << j_.dump(2) << '\n';
  }

 private:
  std::string relative(const fs::path& p) const { return fs::relative(p, dir_).string(); }

  fs::path dir_;
  std::chrono::steady_clock::time_point start_;
  json j_;
};

std::vector<Task> draw_eval_tasks(const TaskSource& src, std::size_t n, Rng& rng) {
  std::vector<Task> tasks;
  tasks.reserve(n);
  for (std::size_t i = 0; i < n; ++i) tasks.push_back(src.eval_task(rng));
  return tasks;
}

void check_compatible(const Model& model, const TaskSource& src) {
  const ModelConfig& c = model.config();
  if (c.x_dim != src.x_dim() || c.y_dim != src.y_dim()) {
    throw ConfigError("tasks.source: model expects x_dim=" + std::to_string(c.x_dim) +
                      ", y_dim=" + std::to_string(c.y_dim) + " but source '" + src.name() +
                      "' yields x_dim=" + std::to_string(src.x_dim()) +
                      ", y_dim=" + std::to_string(src.y_dim()));
  }
}

LoadedCheckpoint load_for(const std::string& path, const CommonArgs& a) {
  if (path.empty()) throw ConfigError("--checkpoint: required");
  LoadedCheckpoint ck = load_checkpoint(path);
  if (a.model && *a.model != to_string(ck.model->kind())) {
    throw ConfigError("--model: checkpoint holds model kind '" + to_string(ck.model->kind()) +
                      "', requested '" + *a.model + "'");
  }
  return ck;
}

// Evaluates in chunks so very large task counts stay within memory.
MetricsRecord evaluate_stream(const Model& model, const TaskSource& src, std::size_t n_tasks,
                              int n_samples, std::uint64_t seed) {
  constexpr std::size_t kChunk = 1000;
  Rng rng(seed);
  MetricsRecord total;
  double ll = 0.0;
  double rll = 0.0;
  double pll = 0.0;
  for (std::size_t done = 0; done < n_tasks;) {
    const std::size_t n = std::min(kChunk, n_tasks - done);
    const auto tasks = draw_eval_tasks(src, n, rng);
    const MetricsRecord r = compute_metrics(model, tasks, n_samples, seed);
    ll += r.ll * static_cast<double>(n);
    rll += r.rll * static_cast<double>(n);
    pll += r.pll * static_cast<double>(n);
    total = r;
    done += n;
  }
  total.task_count = n_tasks;
  if (n_tasks > 0) {
    const double n = static_cast<double>(n_tasks);
    total.ll = ll / n;
    total.rll = rll / n;
    total.pll = pll / n;
  }
  return total;
}

class CliSink : public TrainSink {
 public:
  CliSink(fs::path dir, const RunConfig& cfg, Manifest& manifest, std::ostream& log)
      : dir_(std::move(dir)), cfg_(cfg), manifest_(manifest), log_(log) {
    csv_.open(dir_ / "train_log.csv");
    csv_ << "step,loss,nll,kl\n";
    manifest_.add_metrics(dir_ / "train_log.csv");
  }

  void on_step(const StepRecord& r) override {
    csv_ << r.step << ',' << fmt_double(r.loss) << ',' << fmt_double(r.nll) << ','
         << fmt_double(r.kl) << '\n';
    csv_.flush();
    log_ << "step " << r.step << "  loss " << r.loss << "  nll " << r.nll << "  kl " << r.kl
         << "  (" << static_cast<long>(r.wall_time) << " s)\n";
  }

  void on_checkpoint(long step, const Model& model) override {
    const fs::path p = dir_ / "checkpoints" / ("step-" + std::to_string(step) + ".ckpt");
    fs::create_directories(p.parent_path());
    save_checkpoint(p, model, step, cfg_.run_id);
    manifest_.add_checkpoint(p);
    last_checkpoint_ = p;
  }

  const fs::path& last_checkpoint() const { return last_checkpoint_; }

 private:
  fs::path dir_;
  const RunConfig& cfg_;
  Manifest& manifest_;
  std::ostream& log_;
  std::ofstream csv_;
  fs::path last_checkpoint_;
};

int cmd_train(const RunConfig& cfg, const fs::path& dir, Manifest& manifest, std::ostream& out) {
  auto source = make_task_source(cfg.tasks);
  ModelConfig mc = cfg.model;
  mc.x_dim = source->x_dim();
  mc.y_dim = source->y_dim();
  auto model = make_model(mc, cfg.train.seed);
  CliSink sink(dir, cfg, manifest, out);
  const TrainResult res = train_run(cfg.train, *model, *source, sink);
  manifest.data()["steps_completed"] = res.steps_completed;
  if (res.aborted) {
    manifest.finish("failed", res.error);
    out << "training aborted: " << res.error << '\n';
    return kExitFailure;
  }
  if (cfg.train_eval_tasks > 0) {
    MetricsRecord rec = evaluate_stream(*model, *source, cfg.train_eval_tasks,
                                        cfg.eval.n_samples, cfg.eval.seed);
    rec.step = res.steps_completed;
    const fs::path csv = dir / "metrics.csv";
    export_results(std::span(&rec, 1), {}, csv, ResultFormat::csv, cfg.to_json());
    manifest.add_metrics(csv);
    manifest.data()["metrics"] = to_json(rec);
    out << "eval over " << rec.task_count << " tasks: ll " << rec.ll << "  rll " << rec.rll
        << "  pll " << rec.pll << '\n';
  }
  manifest.finish("ok");
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, const CommonArgs& a, const fs::path& dir, Manifest& manifest,
             std::ostream& out) {
  LoadedCheckpoint ck = load_for(a.checkpoint, a);
  auto source = make_task_source(cfg.tasks);
  check_compatible(*ck.model, *source);
  manifest.data()["checkpoint"] = fs::absolute(a.checkpoint).string();
  MetricsRecord rec =
      evaluate_stream(*ck.model, *source, cfg.eval.n_tasks, cfg.eval.n_samples, cfg.eval.seed);
  rec.step = ck.step;
  const fs::path csv = dir / "metrics.csv";
  export_results(std::span(&rec, 1), {}, csv, ResultFormat::csv, cfg.to_json());
  manifest.add_metrics(csv);
  if (cfg.eval.format == "json") {
    const fs::path js = dir / "metrics.json";
    export_results(std::span(&rec, 1), {}, js, ResultFormat::json, cfg.to_json());
    manifest.add_metrics(js);
  }
  manifest.data()["tasks_consumed"] = cfg.eval.n_tasks;
  manifest.data()["metrics"] = to_json(rec);
  out << "eval over " << rec.task_count << " tasks: ll " << rec.ll << "  rll " << rec.rll
      << "  pll " << rec.pll << '\n';
  manifest.finish("ok");
  return kExitOk;
}

int cmd_active_learn(const RunConfig& cfg, const CommonArgs& a, const fs::path& dir,
                     Manifest& manifest, std::ostream& out) {
  LoadedCheckpoint ck = load_for(a.checkpoint, a);
  auto source = make_task_source(cfg.tasks);
  check_compatible(*ck.model, *source);
  manifest.data()["checkpoint"] = fs::absolute(a.checkpoint).string();

  const std::string name = to_string(ck.model->kind());
  const std::string control = name + "+random";
  ActiveLearningOptions opts;
  opts.n_acquire = cfg.active.n_acquire;
  opts.realizations = cfg.active.realizations;
  opts.metric_samples = cfg.active.metric_samples;

  std::vector<ResultRow> rows;
  Rng stream(cfg.active.seed);
  std::vector<double> final_model(static_cast<std::size_t>(opts.n_acquire) + 1, 0.0);
  std::vector<double> final_control(final_model.size(), 0.0);
  for (std::size_t t = 0; t < cfg.active.n_tasks; ++t) {
    const Task task = source->eval_task(stream);
    const std::uint64_t task_seed = stream();
    for (Acquisition rule : {Acquisition::max_variance, Acquisition::random}) {
      opts.rule = rule;
      Rng rng(task_seed);
      const auto steps = active_learning_run(*ck.model, task, opts, rng);
      auto& acc = rule == Acquisition::max_variance ? final_model : final_control;
      for (std::size_t k = 0; k < steps.size(); ++k) {
        const TaskMetrics& m = steps[k].metrics;
        rows.push_back(ResultRow{static_cast<long>(k),
                                 rule == Acquisition::max_variance ? name : control, task_seed,
                                 m.ll, m.rll, m.pll});
        acc[k] += m.ll;
      }
    }
  }
  const fs::path csv = dir / "active.csv";
  export_results({}, rows, csv, ResultFormat::csv, cfg.to_json());
  manifest.add_metrics(csv);
  const double n = static_cast<double>(std::max<std::size_t>(cfg.active.n_tasks, 1));
  json curve = json::array();
  for (std::size_t k = 0; k < final_model.size(); ++k) {
    curve.push_back({{"acquired", k}, {"ll", final_model[k] / n},
                     {"ll_random", final_control[k] / n}});
  }
  manifest.data()["mean_curve"] = curve;
  out << "active learning over " << cfg.active.n_tasks << " tasks: final ll "
      << final_model.back() / n << " (random " << final_control.back() / n << ")\n";
  manifest.finish("ok");
  return kExitOk;
}

json task_json(const Task& t, std::size_t index) {
  auto rows = [](const Matrix& m) {
    json out = json::array();
    for (Index i = 0; i < m.rows(); ++i) {
      json r = json::array();
      for (Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
      out.push_back(std::move(r));
    }
    return out;
  };
  return {{"index", index}, {"xs", rows(t.xs)},      {"ys", rows(t.ys)},
          {"context", t.context}, {"target", t.target}, {"meta", t.meta}};
}

int cmd_gen_tasks(const RunConfig& cfg, const CommonArgs& a, const fs::path& dir,
                  Manifest& manifest, std::ostream& out) {
  if (a.phase != "train" && a.phase != "eval") {
    throw ConfigError("--phase: expected train or eval, got '" + a.phase + "'");
  }
  auto source = make_task_source(cfg.tasks);
  Rng rng(cfg.eval.seed);
  const fs::path path = dir / "tasks.jsonl";
  fs::create_directories(dir);
  std::ofstream f(path);
  for (std::size_t i = 0; i < cfg.eval.n_tasks; ++i) {
    const Task t = a.phase == "train" ? source->train_task(rng) : source->eval_task(rng);
    f << task_json(t, i).dump() << '\n';
  }
  if (!f) throw std::runtime_error("failed writing " + path.string());
  manifest.add_metrics(path);
  manifest.data()["tasks_consumed"] = cfg.eval.n_tasks;
  out << "wrote " << cfg.eval.n_tasks << " " << a.phase << " tasks to " << path.string() << '\n';
  manifest.finish("ok");
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Neural variational dropout processes: train, evaluate, active learning"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version_string());

  CommonArgs args;
  CLI::App* train = app.add_subcommand("train", "Train a model and write checkpoints");
  add_common(train, args);
  train->add_option("--iterations", args.iterations, "Training steps");
  train->add_flag("--paper-preset", args.paper_preset,
                  "Paper-scale architecture, 500k steps and 50000 eval tasks");

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on held-out tasks");
  add_common(eval, args);
  eval->add_option("--checkpoint", args.checkpoint, "Checkpoint file")->required();
  eval->add_option("--n-tasks", args.n_tasks, "Number of evaluation tasks");
  eval->add_flag("--paper-preset", args.paper_preset, "Evaluate on 50000 tasks");

  CLI::App* active = app.add_subcommand("active-learn", "Max-variance vs random acquisition");
  add_common(active, args);
  active->add_option("--checkpoint", args.checkpoint, "Checkpoint file")->required();
  active->add_option("--n-tasks", args.n_tasks, "Number of tasks");

  CLI::App* gen = app.add_subcommand("gen-tasks", "Dump a seeded task stream as JSON lines");
  add_common(gen, args);
  gen->add_option("--n-tasks", args.n_tasks, "Number of tasks");
  gen->add_option("--phase", args.phase, "train or eval splits");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  Command cmd = Command::train;
  if (eval->parsed()) cmd = Command::eval;
  if (active->parsed()) cmd = Command::active_learn;
  if (gen->parsed()) cmd = Command::gen_tasks;
  if (cmd == Command::gen_tasks && !args.n_tasks) args.n_tasks = 10;

  RunConfig cfg;
  try {
    cfg = resolve_config(cmd, args);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  const fs::path dir = runs_root(cfg) / cfg.run_id;
  Manifest manifest(cmd, cfg, dir);
  try {
    fs::create_directories(dir);
    switch (cmd) {
      case Command::train: return cmd_train(cfg, dir, manifest, out);
      case Command::eval: return cmd_eval(cfg, args, dir, manifest, out);
      case Command::active_learn: return cmd_active_learn(cfg, args, dir, manifest, out);
      case Command::gen_tasks: return cmd_gen_tasks(cfg, args, dir, manifest, out);
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    manifest.finish("failed", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    try {
      manifest.finish("failed", e.what());
    } catch (const std::exception&) {
    }
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace nvdp::cli
