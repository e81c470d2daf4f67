// SPDX-License-Identifier: Apache-2.0
#include "nvdp/checkpoint.hpp"

#include <fstream>
#include <set>

namespace nvdp {

using nlohmann::json;

json to_json(const ModelConfig& c) {
  return json{
      {"kind", to_string(c.kind)},
      {"variance", to_string(c.variance)},
      {"fixed_sigma", c.fixed_sigma},
      {"x_dim", c.x_dim},
      {"y_dim", c.y_dim},
      {"d_r", c.d_r},
      {"d_z", c.d_z},
      {"encoder_depth", c.encoder_depth},
      {"decoder_hidden", c.decoder_hidden},
      {"meta_hidden", c.meta_hidden},
      {"decoder_activation", to_string(c.decoder_activation)},
      {"meta_activation", to_string(c.meta_activation)},
      {"decoder_uses_r", c.decoder_uses_r},
      {"meta_activate_output", c.meta_activate_output},
  };
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  auto kind = parse_model_kind(j.at("kind").get<std::string>());
  if (!kind) throw CheckpointError("checkpoint: unknown model kind " + j.at("kind").dump());
  c.kind = *kind;
  auto var = parse_variance_mode(j.at("variance").get<std::string>());
  if (!var) throw CheckpointError("checkpoint: unknown variance mode");
  c.variance = *var;
  c.fixed_sigma = j.at("fixed_sigma").get<double>();
  c.x_dim = j.at("x_dim").get<int>();
  c.y_dim = j.at("y_dim").get<int>();
  c.d_r = j.at("d_r").get<int>();
  c.d_z = j.at("d_z").get<int>();
  c.encoder_depth = j.at("encoder_depth").get<int>();
  c.decoder_hidden = j.at("decoder_hidden").get<std::vector<int>>();
  c.meta_hidden = j.at("meta_hidden").get<std::vector<int>>();
  auto dact = parse_activation(j.at("decoder_activation").get<std::string>());
  auto mact = parse_activation(j.at("meta_activation").get<std::string>());
  if (!dact || !mact) throw CheckpointError("checkpoint: unknown activation");
  c.decoder_activation = *dact;
  c.meta_activation = *mact;
  c.decoder_uses_r = j.at("decoder_uses_r").get<bool>();
  c.meta_activate_output = j.value("meta_activate_output", false);
  return c;
}

json checkpoint_json(const Model& model, long step, const std::string& run_id) {
  json params = json::array();
  const ParamRegistry& reg = model.params();
  for (std::size_t i = 0; i < reg.size(); ++i) {
    const Parameter& p = reg.at(i);
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(p.value.size()));
    for (Index r = 0; r < p.value.rows(); ++r) {
      for (Index c = 0; c < p.value.cols(); ++c) values.push_back(p.value(r, c));
    }
    params.push_back(json{{"name", p.name},
                          {"shape", {p.value.rows(), p.value.cols()}},
                          {"values", std::move(values)}});
  }
  return json{{"format", "nvdp-checkpoint"}, {"version", 1},
              {"run_id", run_id},            {"step", step},
              {"model", to_json(model.config())}, {"parameters", std::move(params)}};
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, long step,
                     const std::string& run_id) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw CheckpointError("cannot write checkpoint " + tmp.string());
    out << checkpoint_json(model, step, run_id).dump() << '\n';
    if (!out) throw CheckpointError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint checkpoint_from_json(const json& j) {
  if (j.value("format", "") != "nvdp-checkpoint") {
    throw CheckpointError("not an nvdp checkpoint");
  }
  if (j.value("version", 0) != 1) throw CheckpointError("unsupported checkpoint version");
  LoadedCheckpoint out;
  out.step = j.at("step").get<long>();
  out.run_id = j.at("run_id").get<std::string>();
  out.model = make_model(model_config_from_json(j.at("model")), 0);

  ParamRegistry& reg = out.model->params();
  std::set<std::string> seen;
  for (const json& pj : j.at("parameters")) {
    const auto name = pj.at("name").get<std::string>();
    Parameter* p = reg.find(name);
    if (p == nullptr) {
      throw CheckpointError("checkpoint parameter '" + name + "' does not exist in a " +
                            to_string(out.model->kind()) + " model");
    }
    const auto shape = pj.at("shape").get<std::vector<Index>>();
    if (shape.size() != 2 || shape[0] != p->value.rows() || shape[1] != p->value.cols()) {
      throw CheckpointError("checkpoint parameter '" + name + "' has shape " +
                            pj.at("shape").dump() + ", model expects " +
                            diff::shape_str(p->value));
    }
    const auto values = pj.at("values").get<std::vector<double>>();
    if (values.size() != static_cast<std::size_t>(p->value.size())) {
      throw CheckpointError("checkpoint parameter '" + name + "' has " +
                            std::to_string(values.size()) + " values");
    }
    std::size_t k = 0;
    for (Index r = 0; r < p->value.rows(); ++r) {
      for (Index c = 0; c < p->value.cols(); ++c) p->value(r, c) = values[k++];
    }
    seen.insert(name);
  }
  if (seen.size() != reg.size()) {
    throw CheckpointError("checkpoint is missing " + std::to_string(reg.size() - seen.size()) +
                          " parameters of the " + to_string(out.model->kind()) + " model");
  }
  return out;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw CheckpointError("malformed checkpoint " + path.string() + ": " + e.what());
  }
  try {
    return checkpoint_from_json(j);
  } catch (const json::exception& e) {
    throw CheckpointError("malformed checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace nvdp
