#pragma once

#include <cstdint>
#include <vector>

#include "dsda/raster.hpp"

namespace dsda {

struct SceneSpec {
  std::size_t height = 128;
  std::size_t width = 128;
  std::size_t bands = 4;
  std::size_t n_objects = 60;
  double change_fraction = 0.1;
  double noise_sigma = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Sensor-level distortion v -> gain * sign(v) |v|^gamma + offset + N(0, extra_noise),
/// per band, applied to both dates.
struct ShiftSpec {
  std::vector<double> gain = {1.0, 1.0, 1.0, 1.0};
  std::vector<double> offset = {0.0, 0.0, 0.0, 0.0};
  double gamma = 1.0;
  double extra_noise = 0.0;

  void validate(std::size_t bands) const;
  static ShiftSpec identity(std::size_t bands = 4);
};

struct Scene {
  RasterPair images;
  LabelMap labels;
  RasterPair noiseless;  // same scene before additive noise
};

/// Textured blobs over a background; a seeded subset of blobs takes a new
/// land-cover spectrum at t2 and those pixels are labeled changed.
Scene gen_scene(const SceneSpec& spec);

RasterPair apply_shift(const RasterPair& rp, const ShiftSpec& shift, std::uint64_t seed);

}  // namespace dsda
