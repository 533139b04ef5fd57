#include "dsda/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dsda {

namespace {

void apply_activation(std::span<double> v, Activation act) {
  switch (act) {
    case Activation::kNone:
      break;
    case Activation::kRelu:
      for (double& x : v) x = x > 0.0 ? x : 0.0;
      break;
    case Activation::kSigmoid:
      for (double& x : v) x = sigmoid(x);
      break;
  }
}

// dL/dz from dL/dy using the stored activation output y. ReLU'(0) = 0.
double activation_grad(double y, double gy, Activation act) {
  switch (act) {
    case Activation::kRelu:
      return y > 0.0 ? gy : 0.0;
    case Activation::kSigmoid:
      return gy * y * (1.0 - y);
    case Activation::kNone:
    default:
      return gy;
  }
}

}  // namespace

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::size_t conv_output_dim(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  if (stride == 0) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (in + 2 * pad < k) return 0;
  return (in + 2 * pad - k) / stride + 1;
}

Tensor4 conv2d(const Tensor4& x, const ConvParams& p, Activation act) {
  if (x.c != p.in_ch)
    throw std::invalid_argument("conv2d: channel mismatch (input " + std::to_string(x.c) +
                                ", kernel " + std::to_string(p.in_ch) + ")");
  const std::size_t oh = conv_output_dim(x.h, p.kh, p.stride, p.padding);
  const std::size_t ow = conv_output_dim(x.w, p.kw, p.stride, p.padding);
  if (oh == 0 || ow == 0) throw std::invalid_argument("conv2d: non-positive output dimensions");

  Tensor4 y(x.n, oh, ow, p.out_ch);
  const std::size_t cin = p.in_ch;
  const std::size_t cout = p.out_ch;
  const auto pad = static_cast<std::ptrdiff_t>(p.padding);
  for (std::size_t b = 0; b < x.n; ++b) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        double* out = &y.values[y.index(b, i, j, 0)];
        std::copy(p.bias.begin(), p.bias.end(), out);
        for (std::size_t u = 0; u < p.kh; ++u) {
          const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i * p.stride + u) - pad;
          if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(x.h)) continue;
          for (std::size_t v = 0; v < p.kw; ++v) {
            const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j * p.stride + v) - pad;
            if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(x.w)) continue;
            const double* xin = &x.values[x.index(b, static_cast<std::size_t>(ii), static_cast<std::size_t>(jj), 0)];
            const double* wk = &p.weight[(u * p.kw + v) * cin * cout];
            for (std::size_t c = 0; c < cin; ++c) {
              const double xv = xin[c];
              const double* wrow = wk + c * cout;
              for (std::size_t o = 0; o < cout; ++o) out[o] += xv * wrow[o];
            }
          }
        }
        apply_activation({out, cout}, act);
      }
    }
  }
  return y;
}

Tensor4 conv2d_backward(const Tensor4& x, const Tensor4& y, const Tensor4& grad_y,
                        const ConvParams& p, Activation act, ConvParams& grads) {
  if (!y.same_shape(grad_y)) throw std::invalid_argument("conv2d_backward: gradient shape mismatch");
  if (grads.weight.size() != p.weight.size() || grads.bias.size() != p.bias.size())
    throw std::invalid_argument("conv2d_backward: gradient store shape mismatch");

  const std::size_t cin = p.in_ch;
  const std::size_t cout = p.out_ch;
  const auto pad = static_cast<std::ptrdiff_t>(p.padding);

  // (u, v, o, c) copy of the weights so dL/dx vectorises over c.
  std::vector<double> wt(p.weight.size());
  for (std::size_t uv = 0; uv < p.kh * p.kw; ++uv)
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t o = 0; o < cout; ++o)
        wt[(uv * cout + o) * cin + c] = p.weight[(uv * cin + c) * cout + o];

  Tensor4 gx(x.n, x.h, x.w, x.c);
  std::vector<double> gz(cout);
  for (std::size_t b = 0; b < y.n; ++b) {
    for (std::size_t i = 0; i < y.h; ++i) {
      for (std::size_t j = 0; j < y.w; ++j) {
        const std::size_t base = y.index(b, i, j, 0);
        bool any = false;
        for (std::size_t o = 0; o < cout; ++o) {
          gz[o] = activation_grad(y.values[base + o], grad_y.values[base + o], act);
          any = any || gz[o] != 0.0;
        }
        if (!any) continue;
        for (std::size_t o = 0; o < cout; ++o) grads.bias[o] += gz[o];
        for (std::size_t u = 0; u < p.kh; ++u) {
          const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i * p.stride + u) - pad;
          if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(x.h)) continue;
          for (std::size_t v = 0; v < p.kw; ++v) {
            const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j * p.stride + v) - pad;
            if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(x.w)) continue;
            const std::size_t xi = x.index(b, static_cast<std::size_t>(ii), static_cast<std::size_t>(jj), 0);
            const double* xin = &x.values[xi];
            double* gxin = &gx.values[xi];
            const std::size_t uv = u * p.kw + v;
            double* gw = &grads.weight[uv * cin * cout];
            for (std::size_t c = 0; c < cin; ++c) {
              const double xv = xin[c];
              double* gwrow = gw + c * cout;
              for (std::size_t o = 0; o < cout; ++o) gwrow[o] += xv * gz[o];
            }
            const double* wtk = &wt[uv * cout * cin];
            for (std::size_t o = 0; o < cout; ++o) {
              const double g = gz[o];
              const double* wrow = wtk + o * cin;
              for (std::size_t c = 0; c < cin; ++c) gxin[c] += wrow[c] * g;
            }
          }
        }
      }
    }
  }
  return gx;
}

PoolResult maxpool2d(const Tensor4& x) {
  if (x.h % 2 != 0 || x.w % 2 != 0)
    throw std::invalid_argument("maxpool2d: odd spatial dimension (" + std::to_string(x.h) + "x" +
                                std::to_string(x.w) + ")");
  PoolResult r{Tensor4(x.n, x.h / 2, x.w / 2, x.c), {}};
  r.argmax.resize(r.out.values.size());
  for (std::size_t b = 0; b < x.n; ++b) {
    for (std::size_t i = 0; i < r.out.h; ++i) {
      for (std::size_t j = 0; j < r.out.w; ++j) {
        for (std::size_t ch = 0; ch < x.c; ++ch) {
          std::size_t best = x.index(b, 2 * i, 2 * j, ch);
          double best_v = x.values[best];
          for (std::size_t du = 0; du < 2; ++du) {
            for (std::size_t dv = 0; dv < 2; ++dv) {
              const std::size_t idx = x.index(b, 2 * i + du, 2 * j + dv, ch);
              if (x.values[idx] > best_v) {
                best_v = x.values[idx];
                best = idx;
              }
            }
          }
          const std::size_t o = r.out.index(b, i, j, ch);
          r.out.values[o] = best_v;
          r.argmax[o] = best;
        }
      }
    }
  }
  return r;
}

Tensor4 maxpool2d_backward(const Tensor4& x, const PoolResult& fwd, const Tensor4& grad_out) {
  if (!fwd.out.same_shape(grad_out)) throw std::invalid_argument("maxpool2d_backward: gradient shape mismatch");
  Tensor4 gx(x.n, x.h, x.w, x.c);
  for (std::size_t o = 0; o < grad_out.values.size(); ++o) gx.values[fwd.argmax[o]] += grad_out.values[o];
  return gx;
}

Matrix fully_connected(const Matrix& f, const FcParams& p, Activation act) {
  if (f.cols != p.in_dim)
    throw std::invalid_argument("fully_connected: dimension mismatch (input " + std::to_string(f.cols) +
                                ", layer " + std::to_string(p.in_dim) + ")");
  Matrix y(f.rows, p.out_dim);
  for (std::size_t b = 0; b < f.rows; ++b) {
    const double* in = &f.values[b * f.cols];
    double* out = &y.values[b * p.out_dim];
    for (std::size_t o = 0; o < p.out_dim; ++o) {
      const double* wrow = &p.weight[o * p.in_dim];
      double acc = p.bias[o];
      for (std::size_t i = 0; i < p.in_dim; ++i) acc += wrow[i] * in[i];
      out[o] = acc;
    }
    apply_activation({out, p.out_dim}, act);
  }
  return y;
}

Matrix fully_connected_backward(const Matrix& f, const Matrix& y, const Matrix& grad_y,
                                const FcParams& p, Activation act, FcParams& grads) {
  if (!y.same_shape(grad_y) || f.rows != y.rows || f.cols != p.in_dim)
    throw std::invalid_argument("fully_connected_backward: gradient shape mismatch");
  Matrix gf(f.rows, f.cols);
  for (std::size_t b = 0; b < f.rows; ++b) {
    const double* in = &f.values[b * f.cols];
    double* gin = &gf.values[b * f.cols];
    for (std::size_t o = 0; o < p.out_dim; ++o) {
      const double gz = activation_grad(y(b, o), grad_y(b, o), act);
      if (gz == 0.0) continue;
      grads.bias[o] += gz;
      double* gw = &grads.weight[o * p.in_dim];
      const double* wrow = &p.weight[o * p.in_dim];
      for (std::size_t i = 0; i < p.in_dim; ++i) {
        gw[i] += gz * in[i];
        gin[i] += wrow[i] * gz;
      }
    }
  }
  return gf;
}

BceResult bce_loss(std::span<const double> p, std::span<const double> y) {
  if (p.size() != y.size()) throw std::invalid_argument("bce_loss: size mismatch");
  if (p.empty()) throw std::invalid_argument("bce_loss: empty batch");
  BceResult r{0.0, std::vector<double>(p.size())};
  const double n = static_cast<double>(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) throw std::invalid_argument("bce_loss: label not in {0,1}");
    const double q = std::clamp(p[i], kBceEpsilon, 1.0 - kBceEpsilon);
    r.loss -= y[i] * std::log(q) + (1.0 - y[i]) * std::log(1.0 - q);
    r.grad[i] = (-y[i] / q + (1.0 - y[i]) / (1.0 - q)) / n;
  }
  r.loss /= n;
  return r;
}

}  // namespace dsda
