#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "dsda/layers.hpp"
#include "dsda/raster.hpp"
#include "dsda/tensor.hpp"

namespace dsda {

inline constexpr std::size_t kPatchSize = 8;
inline constexpr std::size_t kInputBands = 4;
inline constexpr std::size_t kStreamFeatures = 64;
inline constexpr std::size_t kHiddenUnits = 128;

/// Trainable weights of the siamese network. The convolution stack exists
/// once and is applied to both acquisition dates.
struct DsdaParams {
  // conv1_1, conv1_2, conv2_1, conv2_2, conv3_1, conv3_2
  std::array<ConvParams, 6> conv;
  // fc1 (64->128, ReLU), fc2 (128->128, ReLU), fc3 (128->1, sigmoid)
  std::array<FcParams, 3> fc;

  /// Zero-valued copy with identical shapes, used for gradients.
  DsdaParams zeros_like() const;

  /// Every parameter array in fixed checkpoint order.
  std::vector<std::span<double>> views();
  std::vector<std::span<const double>> views() const;

  std::size_t parameter_count() const;
};

/// Alias documenting that a DsdaParams value holds gradients.
using DsdaGrads = DsdaParams;

/// Layer names in checkpoint order, two entries (weight, bias) per layer.
std::span<const std::string_view> parameter_names();

/// Table layout with zero weights.
DsdaParams make_params();

/// He-normal weights (variance 2 / fan_in), zero biases.
DsdaParams init_params(std::uint64_t seed);

/// Activations of one convolutional stream.
struct StreamCache {
  Tensor4 input;
  std::array<Tensor4, 6> conv_out;
  std::array<PoolResult, 3> pool;
  Matrix features;  // (n, 64), channel-major flatten of pool3
};

struct ForwardCache {
  StreamCache t1;
  StreamCache t2;
  Matrix diff;    // |f1 - f2|, (n, 64)
  Matrix h_fc1;   // (n, 128), post-ReLU
  Matrix h_fc2;   // (n, 128), post-ReLU
  Matrix prob;    // (n, 1)

  std::size_t size() const { return prob.rows; }
  std::vector<double> probabilities() const { return prob.values; }
};

StreamCache forward_stream(const Tensor4& patches, const DsdaParams& params);

/// Accumulates the conv-stack gradient of one stream into `grads` given
/// dL/d(features).
void backward_stream(const StreamCache& cache, const Matrix& grad_features, const DsdaParams& params,
                     DsdaGrads& grads);

ForwardCache forward(const PatchPairBatch& batch, const DsdaParams& params);

/// Full backward pass. `grad_h1` / `grad_h2` are extra dL/dh terms injected
/// at the FC-1 and FC-2 outputs (the adaptation layers). Results accumulate
/// into `grads`.
void backward(const ForwardCache& cache, std::span<const double> grad_p, const DsdaParams& params,
              DsdaGrads& grads, const Matrix* grad_h1 = nullptr, const Matrix* grad_h2 = nullptr);

/// Convenience wrapper returning a fresh gradient store.
DsdaGrads backward(const ForwardCache& cache, std::span<const double> grad_p, const DsdaParams& params,
                   const Matrix* grad_h1 = nullptr, const Matrix* grad_h2 = nullptr);

}  // namespace dsda
