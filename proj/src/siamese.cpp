#include "dsda/siamese.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace dsda {

namespace {

constexpr std::array<std::string_view, 18> kParamNames = {
    "conv1_1.weight", "conv1_1.bias", "conv1_2.weight", "conv1_2.bias", "conv2_1.weight", "conv2_1.bias",
    "conv2_2.weight", "conv2_2.bias", "conv3_1.weight", "conv3_1.bias", "conv3_2.weight", "conv3_2.bias",
    "fc1.weight",     "fc1.bias",     "fc2.weight",     "fc2.bias",     "fc3.weight",     "fc3.bias",
};

constexpr std::array<Activation, 3> kFcActivation = {Activation::kRelu, Activation::kRelu,
                                                     Activation::kSigmoid};

}  // namespace

DsdaParams make_params() {
  DsdaParams p;
  p.conv[0] = ConvParams(3, 3, kInputBands, 16, 1, 1);
  p.conv[1] = ConvParams(3, 3, 16, 16, 1, 1);
  p.conv[2] = ConvParams(3, 3, 16, 32, 1, 1);
  p.conv[3] = ConvParams(3, 3, 32, 32, 1, 1);
  p.conv[4] = ConvParams(3, 3, 32, 64, 1, 1);
  p.conv[5] = ConvParams(3, 3, 64, 64, 1, 1);
  p.fc[0] = FcParams(kStreamFeatures, kHiddenUnits);
  p.fc[1] = FcParams(kHiddenUnits, kHiddenUnits);
  p.fc[2] = FcParams(kHiddenUnits, 1);
  return p;
}

DsdaParams DsdaParams::zeros_like() const {
  DsdaParams z;
  for (std::size_t i = 0; i < conv.size(); ++i) z.conv[i] = conv[i].zeros_like();
  for (std::size_t i = 0; i < fc.size(); ++i) z.fc[i] = fc[i].zeros_like();
  return z;
}

std::vector<std::span<double>> DsdaParams::views() {
  std::vector<std::span<double>> v;
  for (auto& c : conv) {
    v.emplace_back(c.weight);
    v.emplace_back(c.bias);
  }
  for (auto& f : fc) {
    v.emplace_back(f.weight);
    v.emplace_back(f.bias);
  }
  return v;
}

std::vector<std::span<const double>> DsdaParams::views() const {
  std::vector<std::span<const double>> v;
  for (const auto& c : conv) {
    v.emplace_back(c.weight);
    v.emplace_back(c.bias);
  }
  for (const auto& f : fc) {
    v.emplace_back(f.weight);
    v.emplace_back(f.bias);
  }
  return v;
}

std::size_t DsdaParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& v : views()) n += v.size();
  return n;
}

std::span<const std::string_view> parameter_names() { return kParamNames; }

DsdaParams init_params(std::uint64_t seed) {
  DsdaParams p = make_params();
  std::mt19937_64 rng(seed);
  for (auto& c : p.conv) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(c.kh * c.kw * c.in_ch)));
    for (double& w : c.weight) w = dist(rng);
  }
  for (auto& f : p.fc) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(f.in_dim)));
    for (double& w : f.weight) w = dist(rng);
  }
  return p;
}

StreamCache forward_stream(const Tensor4& patches, const DsdaParams& params) {
  if (patches.h != kPatchSize || patches.w != kPatchSize || patches.c != kInputBands)
    throw std::invalid_argument("forward: patches must be (n,8,8,4), got (" + std::to_string(patches.n) + "," +
                                std::to_string(patches.h) + "," + std::to_string(patches.w) + "," +
                                std::to_string(patches.c) + ")");
  StreamCache s;
  s.input = patches;
  const Tensor4* x = &s.input;
  for (std::size_t block = 0; block < 3; ++block) {
    s.conv_out[2 * block] = conv2d(*x, params.conv[2 * block], Activation::kRelu);
    s.conv_out[2 * block + 1] = conv2d(s.conv_out[2 * block], params.conv[2 * block + 1], Activation::kRelu);
    s.pool[block] = maxpool2d(s.conv_out[2 * block + 1]);
    x = &s.pool[block].out;
  }
  // pool3 is (n,1,1,64); NHWC storage already gives the channel-major flatten.
  const Tensor4& last = s.pool[2].out;
  s.features = Matrix(last.n, last.sample_size());
  s.features.values = last.values;
  return s;
}

void backward_stream(const StreamCache& cache, const Matrix& grad_features, const DsdaParams& params,
                     DsdaGrads& grads) {
  const Tensor4& last = cache.pool[2].out;
  if (grad_features.rows != last.n || grad_features.cols != last.sample_size())
    throw std::invalid_argument("backward: feature gradient shape mismatch");
  Tensor4 g(last.n, last.h, last.w, last.c);
  g.values = grad_features.values;
  for (std::size_t block = 3; block-- > 0;) {
    const Tensor4& conv_b = cache.conv_out[2 * block + 1];
    g = maxpool2d_backward(conv_b, cache.pool[block], g);
    const Tensor4& conv_a = cache.conv_out[2 * block];
    g = conv2d_backward(conv_a, conv_b, g, params.conv[2 * block + 1], Activation::kRelu,
                        grads.conv[2 * block + 1]);
    const Tensor4& in = block == 0 ? cache.input : cache.pool[block - 1].out;
    g = conv2d_backward(in, conv_a, g, params.conv[2 * block], Activation::kRelu, grads.conv[2 * block]);
  }
}

ForwardCache forward(const PatchPairBatch& batch, const DsdaParams& params) {
  if (!batch.patch_t1.same_shape(batch.patch_t2))
    throw std::invalid_argument("forward: t1/t2 patch shapes differ");
  ForwardCache c;
  c.t1 = forward_stream(batch.patch_t1, params);
  c.t2 = forward_stream(batch.patch_t2, params);
  c.diff = Matrix(c.t1.features.rows, c.t1.features.cols);
  for (std::size_t i = 0; i < c.diff.values.size(); ++i)
    c.diff.values[i] = std::abs(c.t1.features.values[i] - c.t2.features.values[i]);
  c.h_fc1 = fully_connected(c.diff, params.fc[0], kFcActivation[0]);
  c.h_fc2 = fully_connected(c.h_fc1, params.fc[1], kFcActivation[1]);
  c.prob = fully_connected(c.h_fc2, params.fc[2], kFcActivation[2]);
  return c;
}

void backward(const ForwardCache& cache, std::span<const double> grad_p, const DsdaParams& params,
              DsdaGrads& grads, const Matrix* grad_h1, const Matrix* grad_h2) {
  const std::size_t n = cache.size();
  if (grad_p.size() != n) throw std::invalid_argument("backward: grad_p size mismatch");
  if (grad_h1 && !grad_h1->same_shape(cache.h_fc1)) throw std::invalid_argument("backward: grad_h1 shape mismatch");
  if (grad_h2 && !grad_h2->same_shape(cache.h_fc2)) throw std::invalid_argument("backward: grad_h2 shape mismatch");

  Matrix gp(n, 1);
  std::copy(grad_p.begin(), grad_p.end(), gp.values.begin());
  Matrix g2 = fully_connected_backward(cache.h_fc2, cache.prob, gp, params.fc[2], kFcActivation[2], grads.fc[2]);
  if (grad_h2)
    for (std::size_t i = 0; i < g2.values.size(); ++i) g2.values[i] += grad_h2->values[i];
  Matrix g1 = fully_connected_backward(cache.h_fc1, cache.h_fc2, g2, params.fc[1], kFcActivation[1], grads.fc[1]);
  if (grad_h1)
    for (std::size_t i = 0; i < g1.values.size(); ++i) g1.values[i] += grad_h1->values[i];
  Matrix gd = fully_connected_backward(cache.diff, cache.h_fc1, g1, params.fc[0], kFcActivation[0], grads.fc[0]);

  // d|a-b|/da = sign(a-b), with sign(0) = 0.
  Matrix gf1(gd.rows, gd.cols);
  Matrix gf2(gd.rows, gd.cols);
  for (std::size_t i = 0; i < gd.values.size(); ++i) {
    const double delta = cache.t1.features.values[i] - cache.t2.features.values[i];
    const double s = delta > 0.0 ? 1.0 : (delta < 0.0 ? -1.0 : 0.0);
    gf1.values[i] = s * gd.values[i];
    gf2.values[i] = -s * gd.values[i];
  }
  backward_stream(cache.t1, gf1, params, grads);
  backward_stream(cache.t2, gf2, params, grads);
}

DsdaGrads backward(const ForwardCache& cache, std::span<const double> grad_p, const DsdaParams& params,
                   const Matrix* grad_h1, const Matrix* grad_h2) {
  DsdaGrads g = params.zeros_like();
  backward(cache, grad_p, params, g, grad_h1, grad_h2);
  return g;
}

}  // namespace dsda
