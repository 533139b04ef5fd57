#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dsda/errors.hpp"
#include "dsda/tensor.hpp"

namespace dsda {

/// Multiband image, row-major with bands interleaved per pixel.
struct Raster {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t bands = 0;
  std::vector<double> data;

  Raster() = default;
  Raster(std::size_t h, std::size_t w, std::size_t b, double fill = 0.0)
      : height(h), width(w), bands(b), data(h * w * b, fill) {}

  double& at(std::size_t row, std::size_t col, std::size_t band) {
    return data[(row * width + col) * bands + band];
  }
  double at(std::size_t row, std::size_t col, std::size_t band) const {
    return data[(row * width + col) * bands + band];
  }
  std::size_t pixels() const { return height * width; }
};

struct RasterPair {
  Raster t1;
  Raster t2;

  RasterPair() = default;
  RasterPair(Raster a, Raster b);

  std::size_t height() const { return t1.height; }
  std::size_t width() const { return t1.width; }
  std::size_t bands() const { return t1.bands; }
};

inline constexpr std::uint8_t kUnchanged = 0;
inline constexpr std::uint8_t kChanged = 1;
inline constexpr std::uint8_t kUnknown = 255;

struct LabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> labels;

  LabelMap() = default;
  LabelMap(std::size_t h, std::size_t w, std::uint8_t fill = kUnchanged)
      : height(h), width(w), labels(h * w, fill) {}

  std::uint8_t& at(std::size_t row, std::size_t col) { return labels[row * width + col]; }
  std::uint8_t at(std::size_t row, std::size_t col) const { return labels[row * width + col]; }
};

struct PixelIndex {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const PixelIndex&, const PixelIndex&) = default;
};

/// n patch pairs of shape k x k x bands with optional labels and provenance.
struct PatchPairBatch {
  Tensor4 patch_t1;
  Tensor4 patch_t2;
  std::optional<std::vector<double>> labels;
  std::optional<std::vector<PixelIndex>> pixel_index;

  std::size_t size() const { return patch_t1.n; }
};

// DSRA / DSLB files share a 24-byte header; see README for the layout.
Raster load_raster(const std::filesystem::path& path);
void save_raster(const std::filesystem::path& path, const Raster& r);
LabelMap load_labels(const std::filesystem::path& path);
void save_labels(const std::filesystem::path& path, const LabelMap& lm);

/// Per-band z-score with population std. Constant bands become zero.
Raster normalize_per_band(const Raster& r);

/// Same z-score for both dates, with band statistics pooled over t1 and t2
/// so that change between dates is not normalised away.
RasterPair normalize_pair(const RasterPair& rp);

/// Maps an out-of-range coordinate back into [0, n) by mirroring about the
/// edge pixel without repeating it (-1 -> 1, n -> n-2).
std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n);

/// Top-left offset of a k-sized window anchored so that the centre pixel
/// lands at patch index k/2.
inline std::ptrdiff_t patch_origin(std::size_t centre, std::size_t k) {
  return static_cast<std::ptrdiff_t>(centre) - static_cast<std::ptrdiff_t>(k / 2);
}

/// Writes the k x k patch of `r` centred at (row, col) into `out`
/// (length k*k*bands), reflect-padding outside the image.
void extract_patch(const Raster& r, std::size_t row, std::size_t col, std::size_t k, double* out);

std::pair<Tensor4, Tensor4> extract_patch_pair(const RasterPair& rp, std::size_t row,
                                               std::size_t col, std::size_t k);

/// Builds a batch from explicit pixel coordinates. Labels are attached when
/// `lm` is given; unknown labels are rejected.
PatchPairBatch make_batch(const RasterPair& rp, const std::vector<PixelIndex>& pixels,
                          std::size_t k, const LabelMap* lm = nullptr);

/// Seeded selection of n labeled pixels (without replacement).
std::vector<PixelIndex> sample_labeled_pixels(const LabelMap& lm, std::size_t n,
                                              std::uint64_t seed, bool balanced);

PatchPairBatch sample_training_set(const RasterPair& rp, const LabelMap& lm, std::size_t n,
                                   std::uint64_t seed, bool balanced, std::size_t k = 8);

}  // namespace dsda
