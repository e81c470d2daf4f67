// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/lexical_cast.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "nvdp/cli.hpp"
#include "nvdp/checkpoint.hpp"
#include "nvdp/idx.hpp"

namespace nvdp::cli {

namespace {

FlatConfig flatten(const boost::property_tree::ptree& tree) {
  FlatConfig out;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      throw ConfigError(section + ": keys must live inside a [section]");
    }
    for (const auto& [key, value] : body) {
      out[section + "." + key] = boost::algorithm::trim_copy(value.data());
    }
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& raw) {
  try {
    if constexpr (std::is_unsigned_v<T>) {
      if (!raw.empty() && raw.front() == '-') throw boost::bad_lexical_cast();
    }
    return boost::lexical_cast<T>(raw);
  } catch (const boost::bad_lexical_cast&) {
    throw ConfigError(key + ": expected a number, got '" + raw + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& raw) {
  const std::string v = boost::algorithm::to_lower_copy(raw);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + raw + "'");
}

std::vector<int> parse_widths(const std::string& key, const std::string& raw) {
  std::vector<std::string> parts;
  boost::algorithm::split(parts, raw, boost::algorithm::is_any_of(","));
  std::vector<int> out;
  for (auto& p : parts) {
    boost::algorithm::trim(p);
    if (p.empty()) continue;
    out.push_back(parse_number<int>(key, p));
  }
  return out;
}

const std::vector<std::string> kKnownKeys = {
    "active.metric_samples", "active.n_acquire",      "active.n_tasks",
    "active.realizations",   "active.seed",           "eval.format",
    "eval.n_samples",        "eval.n_tasks",          "eval.seed",
    "model.d_r",             "model.d_z",             "model.decoder_activation",
    "model.decoder_hidden",  "model.decoder_uses_r",  "model.encoder_depth",
    "model.fixed_sigma",     "model.kind",            "model.meta_activate_output",
    "model.meta_activation", "model.meta_hidden",     "model.preset",
    "model.variance",
    "run.id",                "run.runs_dir",          "tasks.eval_points",
    "tasks.image_limit",     "tasks.max_context",     "tasks.min_context",
    "tasks.source",          "tasks.target_upper",    "train.batch_size",
    "train.checkpoint_every", "train.clip_norm",      "train.eval_tasks",
    "train.iterations",      "train.kl_scale",        "train.learning_rate",
    "train.log_every",       "train.noise_samples",   "train.seed",
};

}  // namespace

std::vector<std::string> known_keys() { return kKnownKeys; }

FlatConfig parse_config_text(const std::string& text) {
  std::istringstream in(text);
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config: " + e.message() + " at line " + std::to_string(e.line()));
  }
  return flatten(tree);
}

FlatConfig read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  // Strip '#' comments, which the INI reader does not know.
  std::string text;
  std::string line;
  while (std::getline(ss, line)) {
    const auto t = boost::algorithm::trim_left_copy(line);
    if (!t.empty() && t.front() == '#') continue;
    text += line + "\n";
  }
  try {
    return parse_config_text(text);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(e.what()) + " (" + path.string() + ")");
  }
}

void apply_override(FlatConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override '" + std::string(assignment) + "': expected section.key=value");
  }
  std::string key = boost::algorithm::trim_copy(std::string(assignment.substr(0, eq)));
  std::string value = boost::algorithm::trim_copy(std::string(assignment.substr(eq + 1)));
  if (key.find('.') == std::string::npos) {
    throw ConfigError("override '" + key + "': expected section.key");
  }
  cfg[key] = value;
}

RunConfig RunConfig::from_flat(const FlatConfig& cfg) {
  for (const auto& [key, value] : cfg) {
    if (!std::binary_search(kKnownKeys.begin(), kKnownKeys.end(), key)) {
      throw ConfigError(key + ": unknown key");
    }
  }
  auto get = [&](const std::string& key) -> std::optional<std::string> {
    auto it = cfg.find(key);
    if (it == cfg.end()) return std::nullopt;
    return it->second;
  };

  RunConfig rc;
  if (auto v = get("model.preset")) rc.preset = *v;
  try {
    rc.model = ModelConfig::preset(rc.preset);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("model.preset: ") + e.what());
  }

  if (auto v = get("run.id")) rc.run_id = *v;
  if (auto v = get("run.runs_dir")) rc.runs_dir = *v;

  ModelConfig& m = rc.model;
  if (auto v = get("model.kind")) {
    auto k = parse_model_kind(*v);
    if (!k) {
      throw ConfigError("model.kind: unknown model kind '" + *v + "'; valid kinds: " +
                        valid_model_kinds());
    }
    m.kind = *k;
  }
  if (auto v = get("model.variance")) {
    auto mode = parse_variance_mode(*v);
    if (!mode) throw ConfigError("model.variance: expected fixed or learned, got '" + *v + "'");
    m.variance = *mode;
  }
  if (auto v = get("model.fixed_sigma")) m.fixed_sigma = parse_number<double>("model.fixed_sigma", *v);
  if (auto v = get("model.d_r")) m.d_r = parse_number<int>("model.d_r", *v);
  if (auto v = get("model.d_z")) m.d_z = parse_number<int>("model.d_z", *v);
  if (auto v = get("model.encoder_depth")) {
    m.encoder_depth = parse_number<int>("model.encoder_depth", *v);
  }
  if (auto v = get("model.decoder_hidden")) m.decoder_hidden = parse_widths("model.decoder_hidden", *v);
  if (auto v = get("model.meta_hidden")) m.meta_hidden = parse_widths("model.meta_hidden", *v);
  for (const char* key : {"model.decoder_activation", "model.meta_activation"}) {
    if (auto v = get(key)) {
      auto a = parse_activation(*v);
      if (!a) {
        throw ConfigError(std::string(key) +
                          ": expected none, relu, leaky-relu or mish, got '" + *v + "'");
      }
      (std::string_view(key) == "model.decoder_activation" ? m.decoder_activation
                                                           : m.meta_activation) = *a;
    }
  }
  if (auto v = get("model.decoder_uses_r")) m.decoder_uses_r = parse_bool("model.decoder_uses_r", *v);
  if (auto v = get("model.meta_activate_output")) {
    m.meta_activate_output = parse_bool("model.meta_activate_output", *v);
  }

  TrainConfig& t = rc.train;
  if (auto v = get("train.batch_size")) t.batch_size = parse_number<std::size_t>("train.batch_size", *v);
  if (auto v = get("train.learning_rate")) t.learning_rate = parse_number<double>("train.learning_rate", *v);
  if (auto v = get("train.iterations")) t.iterations = parse_number<long>("train.iterations", *v);
  if (auto v = get("train.seed")) t.seed = parse_number<std::uint64_t>("train.seed", *v);
  if (auto v = get("train.noise_samples")) t.noise_samples = parse_number<int>("train.noise_samples", *v);
  if (auto v = get("train.clip_norm")) t.clip_norm = parse_number<double>("train.clip_norm", *v);
  if (auto v = get("train.checkpoint_every")) {
    t.checkpoint_every = parse_number<long>("train.checkpoint_every", *v);
  }
  if (auto v = get("train.kl_scale")) {
    try {
      t.kl_scale = parse_kl_scale(*v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("train.kl_scale: ") + e.what());
    }
  }
  if (auto v = get("train.log_every")) t.log_every = parse_number<long>("train.log_every", *v);
  if (auto v = get("train.eval_tasks")) {
    rc.train_eval_tasks = parse_number<std::size_t>("train.eval_tasks", *v);
  }

  TaskSpec& ts = rc.tasks;
  if (auto v = get("tasks.source")) ts.source = *v;
  if (ts.source.rfind("idx:", 0) == 0) ts.ranges = SplitRanges{3, 197, 200};
  if (auto v = get("tasks.min_context")) ts.ranges.min_context = parse_number<std::size_t>("tasks.min_context", *v);
  if (auto v = get("tasks.max_context")) ts.ranges.max_context = parse_number<std::size_t>("tasks.max_context", *v);
  if (auto v = get("tasks.target_upper")) ts.ranges.target_upper = parse_number<std::size_t>("tasks.target_upper", *v);
  if (auto v = get("tasks.eval_points")) ts.eval_points = parse_number<std::size_t>("tasks.eval_points", *v);
  if (auto v = get("tasks.image_limit")) ts.image_limit = parse_number<std::size_t>("tasks.image_limit", *v);

  EvalSettings& e = rc.eval;
  if (auto v = get("eval.n_tasks")) e.n_tasks = parse_number<std::size_t>("eval.n_tasks", *v);
  if (auto v = get("eval.n_samples")) e.n_samples = parse_number<int>("eval.n_samples", *v);
  if (auto v = get("eval.seed")) e.seed = parse_number<std::uint64_t>("eval.seed", *v);
  if (auto v = get("eval.format")) e.format = *v;

  ActiveSettings& a = rc.active;
  if (auto v = get("active.n_tasks")) a.n_tasks = parse_number<std::size_t>("active.n_tasks", *v);
  if (auto v = get("active.n_acquire")) a.n_acquire = parse_number<int>("active.n_acquire", *v);
  if (auto v = get("active.realizations")) a.realizations = parse_number<int>("active.realizations", *v);
  if (auto v = get("active.metric_samples")) a.metric_samples = parse_number<int>("active.metric_samples", *v);
  if (auto v = get("active.seed")) a.seed = parse_number<std::uint64_t>("active.seed", *v);

  // Field-level validation.
  if (ts.source != "gp" && ts.source != "trig" && ts.source.rfind("idx:", 0) != 0) {
    throw ConfigError("tasks.source: expected gp, trig or idx:<path>, got '" + ts.source + "'");
  }
  if (ts.source.rfind("idx:", 0) == 0) m.x_dim = 2;
  if (ts.ranges.min_context < 1 || ts.ranges.max_context < ts.ranges.min_context ||
      ts.ranges.target_upper < ts.ranges.max_context + 2) {
    throw ConfigError("tasks.min_context: need 1 <= min_context <= max_context < target_upper - 1");
  }
  if (ts.eval_points <= ts.ranges.max_context) {
    throw ConfigError("tasks.eval_points: must exceed tasks.max_context");
  }
  if (e.n_samples < 1) throw ConfigError("eval.n_samples: must be >= 1");
  if (e.format != "csv" && e.format != "json") {
    throw ConfigError("eval.format: expected csv or json, got '" + e.format + "'");
  }
  if (a.n_acquire < 0) throw ConfigError("active.n_acquire: must be >= 0");
  if (a.realizations < 1) throw ConfigError("active.realizations: must be >= 1");
  if (a.metric_samples < 1) throw ConfigError("active.metric_samples: must be >= 1");
  if (rc.run_id.find('/') != std::string::npos || rc.run_id == "." || rc.run_id == "..") {
    throw ConfigError("run.id: must be a plain directory name");
  }
  try {
    m.validate();
    t.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& ex) {
    throw ConfigError(ex.what());
  }
  return rc;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["run"] = {{"id", run_id}, {"runs_dir", runs_dir.string()}};
  j["model"] = nvdp::to_json(model);
  j["model"]["preset"] = preset;
  j["train"] = {{"batch_size", train.batch_size},
                {"learning_rate", train.learning_rate},
                {"iterations", train.iterations},
                {"seed", train.seed},
                {"noise_samples", train.noise_samples},
                {"clip_norm", train.clip_norm},
                {"checkpoint_every", train.checkpoint_every},
                {"log_every", train.log_every},
                {"kl_scale", to_string(train.kl_scale)},
                {"eval_tasks", train_eval_tasks}};
  j["tasks"] = {{"source", tasks.source},
                {"min_context", tasks.ranges.min_context},
                {"max_context", tasks.ranges.max_context},
                {"target_upper", tasks.ranges.target_upper},
                {"eval_points", tasks.eval_points},
                {"image_limit", tasks.image_limit}};
  j["eval"] = {{"n_tasks", eval.n_tasks},
               {"n_samples", eval.n_samples},
               {"seed", eval.seed},
               {"format", eval.format}};
  j["active"] = {{"n_tasks", active.n_tasks},
                 {"n_acquire", active.n_acquire},
                 {"realizations", active.realizations},
                 {"metric_samples", active.metric_samples},
                 {"seed", active.seed}};
  return j;
}

std::unique_ptr<TaskSource> make_task_source(const TaskSpec& spec) {
  if (spec.source == "gp") {
    return std::make_unique<GpTaskSource>(GpConfig{}, spec.ranges, spec.eval_points);
  }
  if (spec.source == "trig") {
    return std::make_unique<TrigTaskSource>(spec.ranges, spec.eval_points);
  }
  if (spec.source.rfind("idx:", 0) == 0) {
    const std::filesystem::path path = spec.source.substr(4);
    auto images = load_idx_images(path, std::nullopt, spec.image_limit);
    if (images.empty()) throw std::runtime_error("no images in " + path.string());
    return std::make_unique<ImageTaskSource>(std::move(images), spec.ranges);
  }
  throw ConfigError("tasks.source: unknown source '" + spec.source + "'");
}

std::filesystem::path runs_root(const RunConfig& cfg) {
  if (const char* env = std::getenv("NVDP_RUNS_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  return cfg.runs_dir;
}

std::string version_string() {
#ifdef NVDP_VERSION
  return NVDP_VERSION;
#else
  return "unknown";
#endif
}

}  // namespace nvdp::cli
