#include "dsda/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "dsda/errors.hpp"

namespace dsda {

namespace {

constexpr std::size_t kClasses = 8;
constexpr double kTextureSigma = 0.05;
constexpr double kBandCorrelation = 0.6;
constexpr double kStripeAmplitude = 0.04;

struct Material {
  std::vector<double> spectrum;
  double stripe_period = 6.0;
  double stripe_angle = 0.0;
  double stripe_phase = 0.0;
};

struct Blob {
  double cy = 0.0;
  double cx = 0.0;
  double ry = 0.0;
  double rx = 0.0;
  bool ellipse = false;
  std::size_t cls = 0;

  bool contains(double y, double x) const {
    const double dy = (y - cy) / ry;
    const double dx = (x - cx) / rx;
    return ellipse ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
  }
};

Material random_material(std::size_t bands, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> level(0.05, 0.7);
  std::uniform_real_distribution<double> period(4.0, 10.0);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  Material m;
  m.spectrum.resize(bands);
  for (double& v : m.spectrum) v = level(rng);
  m.stripe_period = period(rng);
  m.stripe_angle = angle(rng);
  m.stripe_phase = 2.0 * angle(rng);
  return m;
}

// Band-correlated Gaussian texture plus an oriented stripe pattern.
void paint_pixel(Raster& r, std::size_t row, std::size_t col, const Material& m, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  const double shared = z(rng);
  const double stripe =
      kStripeAmplitude * std::sin(2.0 * std::numbers::pi *
                                      (static_cast<double>(row) * std::sin(m.stripe_angle) +
                                       static_cast<double>(col) * std::cos(m.stripe_angle)) /
                                      m.stripe_period +
                                  m.stripe_phase);
  for (std::size_t b = 0; b < r.bands; ++b) {
    const double own = z(rng);
    const double tex = kTextureSigma * (std::sqrt(kBandCorrelation) * shared + std::sqrt(1.0 - kBandCorrelation) * own);
    r.at(row, col, b) = m.spectrum[b] + tex + stripe;
  }
}

}  // namespace

void SceneSpec::validate() const {
  if (height == 0 || width == 0) throw ConfigError("scene: height and width must be positive");
  if (bands == 0) throw ConfigError("scene: bands must be positive");
  if (!(change_fraction >= 0.0 && change_fraction < 0.5)) throw ConfigError("scene: change_fraction must lie in [0, 0.5)");
  if (!(noise_sigma >= 0.0)) throw ConfigError("scene: noise_sigma must be >= 0");
}

void ShiftSpec::validate(std::size_t bands) const {
  if (gain.size() != bands || offset.size() != bands)
    throw ConfigError("shift: gain and offset need one entry per band (" + std::to_string(bands) + ")");
  for (double g : gain)
    if (!(g > 0.0)) throw ConfigError("shift: gain must be > 0");
  if (!(gamma > 0.0)) throw ConfigError("shift: gamma must be > 0");
  if (!(extra_noise >= 0.0)) throw ConfigError("shift: extra_noise must be >= 0");
}

ShiftSpec ShiftSpec::identity(std::size_t bands) {
  return {std::vector<double>(bands, 1.0), std::vector<double>(bands, 0.0), 1.0, 0.0};
}

Scene gen_scene(const SceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const std::size_t h = spec.height;
  const std::size_t w = spec.width;

  std::vector<Material> palette;
  for (std::size_t k = 0; k < kClasses; ++k) palette.push_back(random_material(spec.bands, rng));

  std::vector<Blob> blobs(spec.n_objects);
  const double max_radius = 3.0 + 0.12 * static_cast<double>(std::min(h, w));
  std::uniform_real_distribution<double> ypos(0.0, static_cast<double>(h));
  std::uniform_real_distribution<double> xpos(0.0, static_cast<double>(w));
  std::uniform_real_distribution<double> radius(3.0, max_radius);
  std::uniform_int_distribution<std::size_t> cls(1, kClasses - 1);
  std::bernoulli_distribution coin(0.5);
  for (auto& b : blobs) b = {ypos(rng), xpos(rng), radius(rng), radius(rng), coin(rng), cls(rng)};

  // Top-most blob per pixel; later blobs cover earlier ones.
  std::vector<int> owner(h * w, -1);
  std::vector<std::size_t> area(blobs.size(), 0);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      for (std::size_t k = blobs.size(); k-- > 0;) {
        if (blobs[k].contains(static_cast<double>(r) + 0.5, static_cast<double>(c) + 0.5)) {
          owner[r * w + c] = static_cast<int>(k);
          ++area[k];
          break;
        }
      }
    }
  }

  // Choose changed blobs until the visible changed area reaches the target
  // without overshooting it by more than 20%.
  std::vector<bool> changed(blobs.size(), false);
  const double target = spec.change_fraction * static_cast<double>(h * w);
  if (target > 0.0) {
    std::vector<std::size_t> order(blobs.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (auto k : order) {
      if (total >= target) break;
      if (area[k] == 0 || total + static_cast<double>(area[k]) > 1.2 * target) continue;
      changed[k] = true;
      total += static_cast<double>(area[k]);
    }
    if (total < 0.8 * target)
      throw ConfigError("scene: change_fraction " + std::to_string(spec.change_fraction) +
                        " is infeasible with " + std::to_string(spec.n_objects) + " objects");
  }
  std::vector<std::size_t> new_cls(blobs.size());
  for (std::size_t k = 0; k < blobs.size(); ++k) {
    std::size_t c = cls(rng);
    while (c == blobs[k].cls) c = cls(rng);
    new_cls[k] = c;
  }

  Raster t1(h, w, spec.bands);
  Raster t2(h, w, spec.bands);
  LabelMap labels(h, w, kUnchanged);
  std::mt19937_64 tex_rng(rng());
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const int k = owner[r * w + c];
      const std::size_t material = k < 0 ? 0 : blobs[static_cast<std::size_t>(k)].cls;
      paint_pixel(t1, r, c, palette[material], tex_rng);
      if (k >= 0 && changed[static_cast<std::size_t>(k)]) {
        paint_pixel(t2, r, c, palette[new_cls[static_cast<std::size_t>(k)]], tex_rng);
        labels.at(r, c) = kChanged;
      } else {
        for (std::size_t b = 0; b < spec.bands; ++b) t2.at(r, c, b) = t1.at(r, c, b);
      }
    }
  }

  Scene scene{RasterPair(t1, t2), std::move(labels), RasterPair(t1, t2)};
  if (spec.noise_sigma > 0.0) {
    std::mt19937_64 noise_rng(rng());
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    for (double& v : scene.images.t1.data) v += noise(noise_rng);
    for (double& v : scene.images.t2.data) v += noise(noise_rng);
  }
  return scene;
}

RasterPair apply_shift(const RasterPair& rp, const ShiftSpec& shift, std::uint64_t seed) {
  shift.validate(rp.bands());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, shift.extra_noise > 0.0 ? shift.extra_noise : 1.0);
  auto transform = [&](const Raster& in) {
    Raster out = in;
    for (std::size_t i = 0; i < in.pixels(); ++i) {
      for (std::size_t b = 0; b < in.bands; ++b) {
        double& v = out.data[i * in.bands + b];
        if (shift.gamma != 1.0) v = std::copysign(std::pow(std::abs(v), shift.gamma), v);
        if (shift.gain[b] != 1.0) v *= shift.gain[b];
        if (shift.offset[b] != 0.0) v += shift.offset[b];
        if (shift.extra_noise > 0.0) v += noise(rng);
      }
    }
    return out;
  };
  Raster t1 = transform(rp.t1);
  Raster t2 = transform(rp.t2);
  return {std::move(t1), std::move(t2)};
}

}  // namespace dsda
