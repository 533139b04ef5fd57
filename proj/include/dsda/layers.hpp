#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dsda/tensor.hpp"

namespace dsda {

enum class Activation { kNone, kRelu, kSigmoid };

/// Convolution weights laid out as (kh, kw, in_ch, out_ch).
struct ConvParams {
  std::size_t kh = 0;
  std::size_t kw = 0;
  std::size_t in_ch = 0;
  std::size_t out_ch = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  ConvParams() = default;
  ConvParams(std::size_t kh_, std::size_t kw_, std::size_t in, std::size_t out, std::size_t stride_,
             std::size_t pad)
      : kh(kh_), kw(kw_), in_ch(in), out_ch(out), stride(stride_), padding(pad),
        weight(kh_ * kw_ * in * out, 0.0), bias(out, 0.0) {}

  double& w(std::size_t u, std::size_t v, std::size_t c, std::size_t o) {
    return weight[((u * kw + v) * in_ch + c) * out_ch + o];
  }
  double w(std::size_t u, std::size_t v, std::size_t c, std::size_t o) const {
    return weight[((u * kw + v) * in_ch + c) * out_ch + o];
  }

  /// Same geometry, all values zero. Used as a gradient accumulator.
  ConvParams zeros_like() const { return {kh, kw, in_ch, out_ch, stride, padding}; }
};

/// Fully connected weights (out_dim, in_dim), row-major.
struct FcParams {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  FcParams() = default;
  FcParams(std::size_t in, std::size_t out) : in_dim(in), out_dim(out), weight(in * out, 0.0), bias(out, 0.0) {}

  double& w(std::size_t o, std::size_t i) { return weight[o * in_dim + i]; }
  double w(std::size_t o, std::size_t i) const { return weight[o * in_dim + i]; }

  FcParams zeros_like() const { return {in_dim, out_dim}; }
};

std::size_t conv_output_dim(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad);

/// out[b,i,j,o] = act(sum_{u,v,c} W[u,v,c,o] * x_pad[b, i*s+u, j*s+v, c] + bias[o]).
/// Each output element accumulates in fixed (u, v, c) order, so results do not
/// depend on how samples are grouped into batches.
Tensor4 conv2d(const Tensor4& x, const ConvParams& p, Activation act);

/// Given the forward input `x`, forward output `y` and dL/dy, accumulates
/// dL/dW and dL/db into `grads` and returns dL/dx.
Tensor4 conv2d_backward(const Tensor4& x, const Tensor4& y, const Tensor4& grad_y,
                        const ConvParams& p, Activation act, ConvParams& grads);

struct PoolResult {
  Tensor4 out;
  /// Flat index into the input tensor of the winning element per output.
  std::vector<std::size_t> argmax;
};

/// 2x2 / stride 2 max pooling. Ties go to the first element in row-major
/// window order.
PoolResult maxpool2d(const Tensor4& x);
Tensor4 maxpool2d_backward(const Tensor4& x, const PoolResult& fwd, const Tensor4& grad_out);

Matrix fully_connected(const Matrix& f, const FcParams& p, Activation act);
Matrix fully_connected_backward(const Matrix& f, const Matrix& y, const Matrix& grad_y,
                                const FcParams& p, Activation act, FcParams& grads);

inline constexpr double kBceEpsilon = 1e-7;

struct BceResult {
  double loss = 0.0;
  std::vector<double> grad;  // dL/dp per sample
};

/// Mean binary cross-entropy with p clamped to [eps, 1-eps].
BceResult bce_loss(std::span<const double> p, std::span<const double> y);

double sigmoid(double z);

}  // namespace dsda
