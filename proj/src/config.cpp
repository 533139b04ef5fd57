#include "dsda/config.hpp"

#include <fstream>
#include <set>

#include "dsda/errors.hpp"

namespace dsda {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : obj.items())
    if (!allowed.contains(key)) throw ConfigError(where + ": unknown key \"" + key + "\"");
}

template <typename T>
void read(const json& obj, const std::string& where, const char* key, T& out) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    if constexpr (std::is_unsigned_v<T>) {
      if (!it->is_number_unsigned()) throw ConfigError(where + "." + key + ": expected a non-negative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw ConfigError(where + "." + key + ": expected a number");
    }
    out = it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

TrainConfig parse_train(const json& j) {
  check_keys(j, "train",
             {"lambda", "batch_size", "epochs", "adam_lr", "adam_betas", "adam_eps", "finetune_lr",
              "finetune_momentum", "beta_update_every", "seed", "source_samples", "target_labeled"});
  TrainConfig c;
  read(j, "train", "lambda", c.lambda);
  read(j, "train", "batch_size", c.batch_size);
  read(j, "train", "epochs", c.epochs);
  read(j, "train", "adam_lr", c.adam_lr);
  if (j.contains("adam_betas")) {
    const auto& b = j.at("adam_betas");
    if (!b.is_array() || b.size() != 2 || !b[0].is_number() || !b[1].is_number())
      throw ConfigError("train.adam_betas: expected two numbers");
    c.adam_betas = {b[0].get<double>(), b[1].get<double>()};
  }
  read(j, "train", "adam_eps", c.adam_eps);
  read(j, "train", "finetune_lr", c.finetune_lr);
  read(j, "train", "finetune_momentum", c.finetune_momentum);
  read(j, "train", "beta_update_every", c.beta_update_every);
  read(j, "train", "seed", c.seed);
  read(j, "train", "source_samples", c.source_samples);
  read(j, "train", "target_labeled", c.target_labeled);
  return c;
}

SceneSpec parse_scene(const json& j, const std::string& where, SceneSpec s) {
  check_keys(j, where, {"height", "width", "bands", "n_objects", "change_fraction", "noise_sigma", "seed"});
  read(j, where, "height", s.height);
  read(j, where, "width", s.width);
  read(j, where, "bands", s.bands);
  read(j, where, "n_objects", s.n_objects);
  read(j, where, "change_fraction", s.change_fraction);
  read(j, where, "noise_sigma", s.noise_sigma);
  read(j, where, "seed", s.seed);
  return s;
}

json scene_json(const SceneSpec& s) {
  return {{"height", s.height},
          {"width", s.width},
          {"bands", s.bands},
          {"n_objects", s.n_objects},
          {"change_fraction", s.change_fraction},
          {"noise_sigma", s.noise_sigma},
          {"seed", s.seed}};
}

}  // namespace

RunConfig::RunConfig() {
  source_scene.seed = 1;
  target_scene.seed = 2;
  shift.gain = {3.0, 0.3, 2.5, 0.4};
  shift.offset = {0.0, 0.0, 0.0, 0.0};
  shift.gamma = 1.5;
  shift.extra_noise = 0.01;
}

void RunConfig::validate() const {
  train.validate();
  source_scene.validate();
  target_scene.validate();
  shift.validate(target_scene.bands);
  if (preset) lambda_preset(*preset);
}

RunConfig config_from_json(const json& doc) {
  check_keys(doc, "config", {"train", "preset", "source_scene", "target_scene", "shift"});
  RunConfig cfg;
  if (doc.contains("train")) cfg.train = parse_train(doc.at("train"));
  if (doc.contains("preset")) {
    if (!doc.at("preset").is_string()) throw ConfigError("config.preset: expected a string");
    if (doc.contains("train") && doc.at("train").contains("lambda"))
      throw ConfigError("config: give either preset or train.lambda, not both");
    cfg.preset = doc.at("preset").get<std::string>();
    cfg.train.lambda = lambda_preset(*cfg.preset);
  }
  if (doc.contains("source_scene")) cfg.source_scene = parse_scene(doc.at("source_scene"), "source_scene", cfg.source_scene);
  if (doc.contains("target_scene")) cfg.target_scene = parse_scene(doc.at("target_scene"), "target_scene", cfg.target_scene);
  if (doc.contains("shift")) {
    const json& j = doc.at("shift");
    check_keys(j, "shift", {"gain", "offset", "gamma", "extra_noise", "seed"});
    read(j, "shift", "gain", cfg.shift.gain);
    read(j, "shift", "offset", cfg.shift.offset);
    read(j, "shift", "gamma", cfg.shift.gamma);
    read(j, "shift", "extra_noise", cfg.shift.extra_noise);
    read(j, "shift", "seed", cfg.shift_seed);
  }
  cfg.validate();
  return cfg;
}

json config_to_json(const RunConfig& cfg) {
  const TrainConfig& t = cfg.train;
  json doc;
  doc["train"] = {{"lambda", t.lambda},
                  {"batch_size", t.batch_size},
                  {"epochs", t.epochs},
                  {"adam_lr", t.adam_lr},
                  {"adam_betas", {t.adam_betas[0], t.adam_betas[1]}},
                  {"adam_eps", t.adam_eps},
                  {"finetune_lr", t.finetune_lr},
                  {"finetune_momentum", t.finetune_momentum},
                  {"beta_update_every", t.beta_update_every},
                  {"seed", t.seed},
                  {"source_samples", t.source_samples},
                  {"target_labeled", t.target_labeled}};
  if (cfg.preset) doc["preset"] = *cfg.preset;
  doc["source_scene"] = scene_json(cfg.source_scene);
  doc["target_scene"] = scene_json(cfg.target_scene);
  doc["shift"] = {{"gain", cfg.shift.gain},
                  {"offset", cfg.shift.offset},
                  {"gamma", cfg.shift.gamma},
                  {"extra_noise", cfg.shift.extra_noise},
                  {"seed", cfg.shift_seed}};
  return doc;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(doc);
}

}  // namespace dsda
