#include "dsda/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>

namespace dsda {

ChangeMap make_change_map(std::size_t height, std::size_t width, std::vector<double> prob) {
  if (prob.size() != height * width) throw std::invalid_argument("make_change_map: size mismatch");
  ChangeMap cm{height, width, std::move(prob), {}};
  cm.binary.resize(cm.prob.size());
  for (std::size_t i = 0; i < cm.prob.size(); ++i) cm.binary[i] = cm.prob[i] >= kChangeThreshold ? 1 : 0;
  return cm;
}

LabelMap ChangeMap::as_labels() const {
  LabelMap lm(height, width);
  lm.labels = binary;
  return lm;
}

Raster ChangeMap::as_raster() const {
  Raster r(height, width, 1);
  r.data = prob;
  return r;
}

ChangeMap predict_map(const Checkpoint& ckpt, const RasterPair& rp, std::size_t batch, std::size_t threads) {
  if (rp.bands() != kInputBands)
    throw std::invalid_argument("predict_map: expected 4 bands, got " + std::to_string(rp.bands()));
  if (batch == 0) throw std::invalid_argument("predict_map: batch must be positive");
  threads = std::max<std::size_t>(1, threads);

  const std::size_t total = rp.height() * rp.width();
  const std::size_t chunks = (total + batch - 1) / batch;
  std::vector<double> prob(total);

  auto worker = [&](std::size_t first_chunk) {
    std::vector<PixelIndex> px;
    for (std::size_t ch = first_chunk; ch < chunks; ch += threads) {
      const std::size_t begin = ch * batch;
      const std::size_t end = std::min(total, begin + batch);
      px.clear();
      for (std::size_t i = begin; i < end; ++i) px.push_back({i / rp.width(), i % rp.width()});
      const ForwardCache c = forward(make_batch(rp, px, kPatchSize), ckpt.params);
      std::copy(c.prob.values.begin(), c.prob.values.end(), prob.begin() + static_cast<std::ptrdiff_t>(begin));
    }
  };

  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker, t);
  }
  return make_change_map(rp.height(), rp.width(), std::move(prob));
}

Metrics metrics_from_counts(std::uint64_t tp, std::uint64_t tn, std::uint64_t fp, std::uint64_t fn) {
  Metrics m{tp, tn, fp, fn, fp + fn, 0.0, 0.0};
  const std::uint64_t n_int = m.total();
  if (n_int == 0) throw std::invalid_argument("confusion_metrics: no labeled pixels");
  const double n = static_cast<double>(n_int);
  m.oa = 1.0 - static_cast<double>(m.oe) / n;
  const double pe = (static_cast<double>(tp + fp) * static_cast<double>(tp + fn) +
                     static_cast<double>(tn + fn) * static_cast<double>(fp + tn)) /
                    (n * n);
  if (pe == 1.0) {
    // Truth and prediction both single-class: agreement is all-or-nothing.
    m.kc = m.oe == 0 ? 1.0 : 0.0;
  } else {
    m.kc = (m.oa - pe) / (1.0 - pe);
  }
  return m;
}

Metrics confusion_metrics(const ChangeMap& cm, const LabelMap& gt) {
  if (cm.height != gt.height || cm.width != gt.width)
    throw std::invalid_argument("confusion_metrics: change map and ground truth dimensions differ");
  std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    const auto truth = gt.labels[i];
    if (truth == kUnknown) continue;
    const bool pred = cm.binary[i] != 0;
    if (truth == kChanged) (pred ? tp : fn) += 1;
    else (pred ? fp : tn) += 1;
  }
  return metrics_from_counts(tp, tn, fp, fn);
}

void write_metrics_csv(std::ostream& os, const Metrics& m, bool header) {
  if (header) os << "FP,FN,OE,OA,KC\n";
  const auto old = os.precision(10);
  os << m.fp << ',' << m.fn << ',' << m.oe << ',' << m.oa << ',' << m.kc << '\n';
  os.precision(old);
}

double a_distance(const Matrix& fs, const Matrix& ft, std::uint64_t seed) {
  if (fs.cols != ft.cols) throw std::invalid_argument("a_distance: feature dimension mismatch");
  if (fs.rows < 20 || ft.rows < 20) throw std::invalid_argument("a_distance: need at least 20 points per domain");
  const std::size_t dim = fs.cols;
  const std::size_t n = fs.rows + ft.rows;
  auto row = [&](std::size_t i) { return i < fs.rows ? fs.row(i) : ft.row(i - fs.rows); };
  auto label = [&](std::size_t i) { return i < fs.rows ? -1.0 : 1.0; };

  bool degenerate = true;
  for (std::size_t i = 1; i < n && degenerate; ++i) {
    const auto a = row(0);
    const auto b = row(i);
    degenerate = std::equal(a.begin(), a.end(), b.begin());
  }
  if (degenerate) throw std::invalid_argument("a_distance: degenerate features (all points identical)");

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::size_t n_train = n / 2;
  std::vector<std::size_t> train(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  const std::vector<std::size_t> hold(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());

  // Standardise with train-split statistics.
  std::vector<double> mean(dim, 0.0), sd(dim, 0.0);
  for (auto i : train)
    for (std::size_t k = 0; k < dim; ++k) mean[k] += row(i)[k];
  for (double& v : mean) v /= static_cast<double>(n_train);
  for (auto i : train)
    for (std::size_t k = 0; k < dim; ++k) sd[k] += (row(i)[k] - mean[k]) * (row(i)[k] - mean[k]);
  for (double& v : sd) {
    v = std::sqrt(v / static_cast<double>(n_train));
    if (!(v > 1e-12)) v = 1.0;
  }
  Matrix z(n, dim);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < dim; ++k) z(i, k) = (row(i)[k] - mean[k]) / sd[k];

  // Linear hinge-loss model trained by per-sample subgradient steps.
  constexpr std::size_t kEpochs = 2000;
  std::vector<double> w(dim, 0.0);
  double bias = 0.0;
  for (std::size_t epoch = 1; epoch <= kEpochs; ++epoch) {
    const double step = 1e-2 / std::sqrt(static_cast<double>(epoch));
    std::shuffle(train.begin(), train.end(), rng);
    for (auto i : train) {
      const auto x = z.row(i);
      const double y = label(i);
      double score = bias;
      for (std::size_t k = 0; k < dim; ++k) score += w[k] * x[k];
      if (y * score < 1.0) {
        for (std::size_t k = 0; k < dim; ++k) w[k] += step * y * x[k];
        bias += step * y;
      }
    }
  }

  double hinge = 0.0;
  for (auto i : hold) {
    const auto x = z.row(i);
    double score = bias;
    for (std::size_t k = 0; k < dim; ++k) score += w[k] * x[k];
    hinge += std::max(0.0, 1.0 - label(i) * score);
  }
  hinge = std::clamp(hinge / static_cast<double>(hold.size()), 0.0, 1.0);
  return std::clamp(2.0 * (1.0 - hinge), 0.0, 2.0);
}

Matrix fc1_features(const DsdaParams& params, const RasterPair& rp, const std::vector<PixelIndex>& pixels) {
  return forward(make_batch(rp, pixels, kPatchSize), params).h_fc1;
}

Matrix raw_patch_features(const RasterPair& rp, const std::vector<PixelIndex>& pixels) {
  const PatchPairBatch b = make_batch(rp, pixels, kPatchSize);
  const std::size_t ss = b.patch_t1.sample_size();
  Matrix out(pixels.size(), 2 * ss);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    std::copy_n(b.patch_t1.sample(i).begin(), ss, out.row(i).begin());
    std::copy_n(b.patch_t2.sample(i).begin(), ss, out.row(i).begin() + static_cast<std::ptrdiff_t>(ss));
  }
  return out;
}

std::vector<PixelIndex> random_pixels(std::size_t height, std::size_t width, std::size_t n, std::uint64_t seed) {
  const std::size_t total = height * width;
  if (n > total) throw std::invalid_argument("random_pixels: n exceeds pixel count");
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, total - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  std::vector<PixelIndex> px(n);
  for (std::size_t i = 0; i < n; ++i) px[i] = {idx[i] / width, idx[i] % width};
  return px;
}

}  // namespace dsda
