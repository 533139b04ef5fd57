#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"

#include "dsda/synth.hpp"
#include "dsda/trainer.hpp"

namespace dsda {

/// Everything a CLI run can be configured with. JSON layout:
///   { "train": {TrainConfig fields}, "preset": "hy" | "qu" | "lo",
///     "source_scene": {SceneSpec fields}, "target_scene": {...},
///     "shift": {"gain", "offset", "gamma", "extra_noise", "seed"} }
/// Every section is optional; unknown keys anywhere are rejected.
struct RunConfig {
  TrainConfig train;
  std::optional<std::string> preset;
  SceneSpec source_scene;
  SceneSpec target_scene;
  ShiftSpec shift;
  std::uint64_t shift_seed = 3;

  RunConfig();
  void validate() const;
};

RunConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const RunConfig& cfg);

/// Missing path -> ConfigError; unparseable JSON -> ConfigError.
RunConfig load_config(const std::filesystem::path& path);

}  // namespace dsda
