#include "dsda/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <string>

#include "dsda/errors.hpp"
#include "dsda/log.hpp"

namespace dsda {

namespace {

// Independent RNG streams derived from the user seed.
enum class Stream : std::uint64_t { kSourcePixels = 1, kSourceShuffle = 2, kTargetShuffle = 3, kProbe = 4 };

std::mt19937_64 make_rng(std::uint64_t seed, Stream s) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(s)};
  return std::mt19937_64(seq);
}

std::uint64_t derive_seed(std::uint64_t seed, Stream s) { return make_rng(seed, s)(); }

constexpr std::size_t kProbeSize = 256;
constexpr std::size_t kMedianPairCap = 1u << 18;

PatchPairBatch subset(const PatchPairBatch& all, std::span<const std::size_t> idx) {
  PatchPairBatch b;
  const std::size_t ss = all.patch_t1.sample_size();
  b.patch_t1 = Tensor4(idx.size(), all.patch_t1.h, all.patch_t1.w, all.patch_t1.c);
  b.patch_t2 = Tensor4(idx.size(), all.patch_t2.h, all.patch_t2.w, all.patch_t2.c);
  if (all.labels) b.labels.emplace(idx.size());
  if (all.pixel_index) b.pixel_index.emplace(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(all.patch_t1.values.begin() + static_cast<std::ptrdiff_t>(idx[i] * ss), ss,
                b.patch_t1.values.begin() + static_cast<std::ptrdiff_t>(i * ss));
    std::copy_n(all.patch_t2.values.begin() + static_cast<std::ptrdiff_t>(idx[i] * ss), ss,
                b.patch_t2.values.begin() + static_cast<std::ptrdiff_t>(i * ss));
    if (all.labels) (*b.labels)[i] = (*all.labels)[idx[i]];
    if (all.pixel_index) (*b.pixel_index)[i] = (*all.pixel_index)[idx[i]];
  }
  return b;
}

std::vector<PixelIndex> all_pixels(const RasterPair& rp) {
  std::vector<PixelIndex> px;
  px.reserve(rp.height() * rp.width());
  for (std::size_t r = 0; r < rp.height(); ++r)
    for (std::size_t c = 0; c < rp.width(); ++c) px.push_back({r, c});
  return px;
}

// Hands out target pixels in shuffled order, reshuffling on wrap-around.
class TargetCycler {
 public:
  TargetCycler(std::vector<PixelIndex> pool, std::mt19937_64 rng) : pool_(std::move(pool)), rng_(std::move(rng)) {
    std::shuffle(pool_.begin(), pool_.end(), rng_);
  }

  std::vector<PixelIndex> next(std::size_t n) {
    std::vector<PixelIndex> out;
    out.reserve(n);
    while (out.size() < n) {
      if (pos_ == pool_.size()) {
        std::shuffle(pool_.begin(), pool_.end(), rng_);
        pos_ = 0;
      }
      out.push_back(pool_[pos_++]);
    }
    return out;
  }

 private:
  std::vector<PixelIndex> pool_;
  std::mt19937_64 rng_;
  std::size_t pos_ = 0;
};

void check_finite(const StepResult& r, std::size_t epoch, std::size_t step) {
  if (!std::isfinite(r.loss_total))
    throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + " step " + std::to_string(step) +
                             " (loss_c=" + std::to_string(r.loss_c) + ", mmd_fc1=" + std::to_string(r.mmd_fc1) +
                             ", mmd_fc2=" + std::to_string(r.mmd_fc2) + ")");
}

void check_inputs(const RasterPair& source, const LabelMap& labels, const TrainConfig& cfg) {
  cfg.validate();
  if (source.bands() != kInputBands) throw std::invalid_argument("train: source raster must have 4 bands");
  if (labels.height != source.height() || labels.width != source.width())
    throw std::invalid_argument("train: label map does not match source raster");
}

// Shared by train() and train_baseline() so both consume identical streams.
struct SourcePlan {
  PatchPairBatch samples;
  std::mt19937_64 shuffle_rng;
  std::vector<std::size_t> order;
  std::size_t steps = 0;
};

SourcePlan plan_source(const RasterPair& source, const LabelMap& labels, const TrainConfig& cfg) {
  SourcePlan plan;
  const auto px = sample_labeled_pixels(labels, cfg.source_samples, derive_seed(cfg.seed, Stream::kSourcePixels), false);
  plan.samples = make_batch(source, px, kPatchSize, &labels);
  plan.shuffle_rng = make_rng(cfg.seed, Stream::kSourceShuffle);
  plan.order.resize(plan.samples.size());
  plan.steps = plan.samples.size() / cfg.batch_size;
  return plan;
}

void reshuffle(SourcePlan& plan) {
  std::iota(plan.order.begin(), plan.order.end(), std::size_t{0});
  std::shuffle(plan.order.begin(), plan.order.end(), plan.shuffle_rng);
}

PatchPairBatch source_batch(const SourcePlan& plan, std::size_t step, std::size_t batch_size) {
  return subset(plan.samples, std::span<const std::size_t>(plan.order).subspan(step * batch_size, batch_size));
}

}  // namespace

void TrainConfig::validate() const {
  auto bad = [](const std::string& why) { throw ConfigError("invalid train config: " + why); };
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) bad("lambda must be >= 0");
  if (batch_size == 0 || batch_size % 2 != 0) bad("batch_size must be even and positive");
  if (!(adam_lr > 0.0)) bad("adam_lr must be > 0");
  if (!(adam_eps > 0.0)) bad("adam_eps must be > 0");
  if (!(adam_betas[0] >= 0.0 && adam_betas[0] < 1.0 && adam_betas[1] >= 0.0 && adam_betas[1] < 1.0))
    bad("adam_betas must lie in [0,1)");
  if (!(finetune_lr > 0.0)) bad("finetune_lr must be > 0");
  if (!(finetune_momentum >= 0.0 && finetune_momentum < 1.0)) bad("finetune_momentum must lie in [0,1)");
  if (beta_update_every == 0) bad("beta_update_every must be >= 1");
  if (source_samples < batch_size) bad("source_samples must be >= batch_size");
}

double lambda_preset(std::string_view name) {
  if (name == "hy") return 0.2;
  if (name == "qu") return 0.8;
  if (name == "lo") return 0.6;
  throw ConfigError("unknown preset '" + std::string(name) + "' (expected hy, qu or lo)");
}

AdamState::AdamState(const DsdaParams& shape, double lr, std::array<double, 2> betas, double eps)
    : lr_(lr), betas_(betas), eps_(eps), m_(shape.zeros_like()), v_(shape.zeros_like()) {}

void AdamState::step(DsdaParams& params, const DsdaGrads& grads) {
  ++step_;
  const double bc1 = 1.0 - std::pow(betas_[0], static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(betas_[1], static_cast<double>(step_));
  auto p = params.views();
  const auto g = grads.views();
  auto m = m_.views();
  auto v = v_.views();
  for (std::size_t k = 0; k < p.size(); ++k) {
    for (std::size_t i = 0; i < p[k].size(); ++i) {
      const double gi = g[k][i];
      m[k][i] = betas_[0] * m[k][i] + (1.0 - betas_[0]) * gi;
      v[k][i] = betas_[1] * v[k][i] + (1.0 - betas_[1]) * gi * gi;
      const double mhat = m[k][i] / bc1;
      const double vhat = v[k][i] / bc2;
      p[k][i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

SgdMomentumState::SgdMomentumState(const DsdaParams& shape, double lr, double momentum)
    : lr_(lr), momentum_(momentum), velocity_(shape.zeros_like()) {}

void SgdMomentumState::step(DsdaParams& params, const DsdaGrads& grads) {
  auto p = params.views();
  const auto g = grads.views();
  auto vel = velocity_.views();
  for (std::size_t k = 0; k < p.size(); ++k) {
    for (std::size_t i = 0; i < p[k].size(); ++i) {
      vel[k][i] = momentum_ * vel[k][i] + g[k][i];
      p[k][i] -= lr_ * vel[k][i];
    }
  }
}

StepResult supervised_step(const PatchPairBatch& source, const DsdaParams& params) {
  if (!source.labels) throw std::invalid_argument("supervised_step: source batch has no labels");
  const ForwardCache cs = forward(source, params);
  const BceResult bce = bce_loss(cs.prob.values, *source.labels);
  StepResult r;
  r.loss_c = bce.loss;
  r.loss_total = bce.loss;
  r.grads = backward(cs, bce.grad, params);
  return r;
}

StepResult joint_step(const PatchPairBatch& source, const PatchPairBatch& target, const DsdaParams& params,
                      const KernelFamily& fam, double lambda) {
  if (source.size() != target.size())
    throw std::invalid_argument("joint_step: source and target batch sizes differ");
  if (source.size() == 0 || source.size() % 2 != 0) throw std::invalid_argument("joint_step: batch size must be even");
  if (!source.labels) throw std::invalid_argument("joint_step: source batch has no labels");
  if (!(lambda >= 0.0)) throw std::invalid_argument("joint_step: lambda must be >= 0");

  const ForwardCache cs = forward(source, params);
  const ForwardCache ct = forward(target, params);
  const BceResult bce = bce_loss(cs.prob.values, *source.labels);
  const bool adapt = lambda != 0.0;
  LinearMmd m1 = mmd2_linear(cs.h_fc1, ct.h_fc1, fam, adapt);
  LinearMmd m2 = mmd2_linear(cs.h_fc2, ct.h_fc2, fam, adapt);

  StepResult r;
  r.loss_c = bce.loss;
  r.mmd_fc1 = m1.value;
  r.mmd_fc2 = m2.value;
  r.loss_total = bce.loss + lambda * (m1.value + m2.value);
  r.grads = params.zeros_like();
  if (!adapt) {
    backward(cs, bce.grad, params, r.grads);
    return r;
  }
  for (Matrix* g : {&m1.grad_s, &m1.grad_t, &m2.grad_s, &m2.grad_t})
    for (double& v : g->values) v *= lambda;
  backward(cs, bce.grad, params, r.grads, &m1.grad_s, &m2.grad_s);
  const std::vector<double> no_label_grad(target.size(), 0.0);
  backward(ct, no_label_grad, params, r.grads, &m1.grad_t, &m2.grad_t);
  return r;
}

KernelUpdate update_kernel_family(const PatchPairBatch& source_probe, const PatchPairBatch& target_probe,
                                  const DsdaParams& params) {
  const ForwardCache cs = forward(source_probe, params);
  const ForwardCache ct = forward(target_probe, params);
  KernelUpdate up;
  try {
    up.gamma = median_heuristic(cs.h_fc1, ct.h_fc1, kMedianPairCap, 0);
  } catch (const std::invalid_argument& e) {
    log::warn("median heuristic failed ({}); using gamma = 1", e.what());
    up.gamma = 1.0;
  }
  up.family = build_family(up.gamma);

  std::vector<double> beta(up.family.size(), 0.0);
  const std::array<const Matrix*, 2> hs = {&cs.h_fc1, &cs.h_fc2};
  const std::array<const Matrix*, 2> ht = {&ct.h_fc1, &ct.h_fc2};
  for (std::size_t l = 0; l < 2; ++l) {
    const QdEstimate qd = estimate_q_d(*hs[l], *ht[l], up.family.bandwidths);
    const QpResult qp = solve_beta_qp(qd.q, qd.d);
    up.status[l] = qp.status;
    for (std::size_t u = 0; u < beta.size(); ++u) beta[u] += 0.5 * qp.beta_simplex[u];
  }
  const double sum = std::accumulate(beta.begin(), beta.end(), 0.0);
  for (double& b : beta) b /= sum;
  up.family.beta = std::move(beta);
  up.family.validate();
  return up;
}

void write_report_csv(std::ostream& os, const TrainReport& report) {
  const std::size_t m = report.epochs.empty() ? 0 : report.epochs.front().beta.size();
  os << "epoch,loss_c,mmd_fc1,mmd_fc2,loss_total";
  for (std::size_t u = 0; u < m; ++u) os << ",beta_" << u;
  os << '\n';
  const auto old_precision = os.precision(17);
  for (const auto& e : report.epochs) {
    os << e.epoch << ',' << e.loss_c << ',' << e.mmd_fc1 << ',' << e.mmd_fc2 << ',' << e.loss_total;
    for (double b : e.beta) os << ',' << b;
    os << '\n';
  }
  os.precision(old_precision);
}

TrainResult train(const RasterPair& source, const LabelMap& source_labels, const RasterPair& target,
                  const TrainConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  check_inputs(source, source_labels, cfg);
  if (target.bands() != kInputBands) throw std::invalid_argument("train: target raster must have 4 bands");

  SourcePlan plan = plan_source(source, source_labels, cfg);
  TargetCycler targets(all_pixels(target), make_rng(cfg.seed, Stream::kTargetShuffle));

  // Fixed probe batches for kernel-coefficient updates.
  auto probe_rng = make_rng(cfg.seed, Stream::kProbe);
  std::size_t n_probe = std::min({kProbeSize, plan.samples.size(), target.height() * target.width()});
  n_probe -= n_probe % 2;
  std::vector<std::size_t> probe_idx(plan.samples.size());
  std::iota(probe_idx.begin(), probe_idx.end(), std::size_t{0});
  std::shuffle(probe_idx.begin(), probe_idx.end(), probe_rng);
  probe_idx.resize(n_probe);
  const PatchPairBatch source_probe = subset(plan.samples, probe_idx);
  auto target_probe_px = all_pixels(target);
  std::shuffle(target_probe_px.begin(), target_probe_px.end(), probe_rng);
  target_probe_px.resize(n_probe);
  const PatchPairBatch target_probe = make_batch(target, target_probe_px, kPatchSize);

  TrainResult result{{init_params(cfg.seed), build_family(1.0)}, {}};
  DsdaParams& params = result.checkpoint.params;
  KernelFamily& fam = result.checkpoint.family;
  AdamState adam(params, cfg.adam_lr, cfg.adam_betas, cfg.adam_eps);
  double gamma = 1.0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (epoch % cfg.beta_update_every == 0) {
      KernelUpdate up = update_kernel_family(source_probe, target_probe, params);
      fam = std::move(up.family);
      gamma = up.gamma;
    }
    reshuffle(plan);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    for (std::size_t s = 0; s < plan.steps; ++s) {
      const PatchPairBatch sb = source_batch(plan, s, cfg.batch_size);
      const PatchPairBatch tb = make_batch(target, targets.next(cfg.batch_size), kPatchSize);
      StepResult r = joint_step(sb, tb, params, fam, cfg.lambda);
      check_finite(r, epoch + 1, s);
      adam.step(params, r.grads);
      rec.loss_c += r.loss_c;
      rec.mmd_fc1 += r.mmd_fc1;
      rec.mmd_fc2 += r.mmd_fc2;
      rec.loss_total += r.loss_total;
    }
    const auto steps = static_cast<double>(plan.steps);
    rec.loss_c /= steps;
    rec.mmd_fc1 /= steps;
    rec.mmd_fc2 /= steps;
    rec.loss_total /= steps;
    rec.beta = fam.beta;
    rec.gamma = gamma;
    {
      const ForwardCache ps = forward(source_probe, params);
      const ForwardCache pt = forward(target_probe, params);
      rec.probe_mmd_fc1 = mmd2_quadratic(ps.h_fc1, pt.h_fc1, fam);
      rec.probe_mmd_fc2 = mmd2_quadratic(ps.h_fc2, pt.h_fc2, fam);
    }
    log::debug("epoch {:3d}  loss_c {:.5f}  mmd_fc1 {:.5f}  mmd_fc2 {:.5f}  total {:.5f}  gamma {:.4g}", rec.epoch,
               rec.loss_c, rec.mmd_fc1, rec.mmd_fc2, rec.loss_total, gamma);
    result.report.epochs.push_back(std::move(rec));
  }
  result.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

DsdaParams train_baseline(const RasterPair& source, const LabelMap& source_labels, const TrainConfig& cfg) {
  check_inputs(source, source_labels, cfg);
  SourcePlan plan = plan_source(source, source_labels, cfg);
  DsdaParams params = init_params(cfg.seed);
  AdamState adam(params, cfg.adam_lr, cfg.adam_betas, cfg.adam_eps);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    reshuffle(plan);
    for (std::size_t s = 0; s < plan.steps; ++s) {
      StepResult r = supervised_step(source_batch(plan, s, cfg.batch_size), params);
      check_finite(r, epoch + 1, s);
      adam.step(params, r.grads);
    }
  }
  return params;
}

Checkpoint finetune(const Checkpoint& ckpt, const PatchPairBatch& target_labeled, const TrainConfig& cfg) {
  if (target_labeled.size() == 0) throw std::invalid_argument("finetune: empty labeled batch");
  if (!target_labeled.labels) throw std::invalid_argument("finetune: batch has no labels");
  Checkpoint out = ckpt;
  SgdMomentumState sgd(out.params, cfg.finetune_lr, cfg.finetune_momentum);
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    StepResult r = supervised_step(target_labeled, out.params);
    check_finite(r, e + 1, 0);
    sgd.step(out.params, r.grads);
  }
  return out;
}

}  // namespace dsda
