#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "dsda/checkpoint.hpp"
#include "dsda/raster.hpp"
#include "dsda/tensor.hpp"

namespace dsda {

inline constexpr double kChangeThreshold = 0.5;

struct ChangeMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> prob;
  std::vector<std::uint8_t> binary;  // 1 iff prob >= 0.5

  LabelMap as_labels() const;
  Raster as_raster() const;  // single-band probability raster
};

/// Thresholds probabilities into a change map (ties at 0.5 count as change).
ChangeMap make_change_map(std::size_t height, std::size_t width, std::vector<double> prob);

/// Classifies every pixel from its centred 8x8 patch pair. Pixels are
/// processed in row-major chunks of `batch`; output does not depend on
/// `batch` or `threads`.
ChangeMap predict_map(const Checkpoint& ckpt, const RasterPair& rp, std::size_t batch = 256,
                      std::size_t threads = 1);

struct Metrics {
  std::uint64_t tp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t oe = 0;
  double oa = 0.0;
  double kc = 0.0;

  std::uint64_t total() const { return tp + tn + fp + fn; }
};

/// Confusion counts over pixels whose truth is not unknown (255).
Metrics confusion_metrics(const ChangeMap& cm, const LabelMap& gt);

/// OE, OA and KC from raw confusion counts.
Metrics metrics_from_counts(std::uint64_t tp, std::uint64_t tn, std::uint64_t fp, std::uint64_t fn);

/// "FP,FN,OE,OA,KC" header and one row.
void write_metrics_csv(std::ostream& os, const Metrics& m, bool header = true);

/// Proxy A-distance 2 (1 - hinge) of a linear classifier separating source
/// rows (label -1) from target rows (label +1), measured on a seeded 50%
/// holdout split.
double a_distance(const Matrix& fs, const Matrix& ft, std::uint64_t seed);

/// FC-1 activations of the network for the given pixels.
Matrix fc1_features(const DsdaParams& params, const RasterPair& rp, const std::vector<PixelIndex>& pixels);

/// Flattened t1 and t2 patches (2 * 8 * 8 * bands values per pixel).
Matrix raw_patch_features(const RasterPair& rp, const std::vector<PixelIndex>& pixels);

/// Seeded uniform draw of n distinct pixels.
std::vector<PixelIndex> random_pixels(std::size_t height, std::size_t width, std::size_t n, std::uint64_t seed);

}  // namespace dsda
