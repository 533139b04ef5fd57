#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "dsda/checkpoint.hpp"
#include "dsda/mkmmd.hpp"
#include "dsda/raster.hpp"
#include "dsda/siamese.hpp"

namespace dsda {

struct TrainConfig {
  double lambda = 0.6;
  std::size_t batch_size = 64;
  std::size_t epochs = 100;
  double adam_lr = 1e-3;
  std::array<double, 2> adam_betas = {0.9, 0.999};
  double adam_eps = 1e-8;
  double finetune_lr = 1e-4;
  double finetune_momentum = 0.9;
  std::size_t beta_update_every = 1;
  std::uint64_t seed = 0;
  std::size_t source_samples = 5000;
  std::size_t target_labeled = 20;

  /// Throws ConfigError on violated invariants.
  void validate() const;
};

/// Named domain-penalty presets: "hy", "qu", "lo".
double lambda_preset(std::string_view name);

class AdamState {
 public:
  AdamState(const DsdaParams& shape, double lr, std::array<double, 2> betas, double eps);
  void step(DsdaParams& params, const DsdaGrads& grads);
  std::size_t steps() const { return step_; }

 private:
  double lr_;
  std::array<double, 2> betas_;
  double eps_;
  std::size_t step_ = 0;
  DsdaParams m_;
  DsdaParams v_;
};

/// Heavy-ball SGD: v = momentum * v + g; theta -= lr * v.
class SgdMomentumState {
 public:
  SgdMomentumState(const DsdaParams& shape, double lr, double momentum);
  void step(DsdaParams& params, const DsdaGrads& grads);

 private:
  double lr_;
  double momentum_;
  DsdaParams velocity_;
};

struct StepResult {
  double loss_c = 0.0;
  double mmd_fc1 = 0.0;
  double mmd_fc2 = 0.0;
  double loss_total = 0.0;
  DsdaGrads grads;
};

/// Classification loss and gradient on a labeled batch only.
StepResult supervised_step(const PatchPairBatch& source, const DsdaParams& params);

/// L = bce(source) + lambda * (MMD_fc1 + MMD_fc2) with linear-time MK-MMD;
/// adaptation gradients are injected at FC-1 / FC-2 of both domains.
/// With lambda = 0 the gradient is exactly the supervised one.
StepResult joint_step(const PatchPairBatch& source, const PatchPairBatch& target, const DsdaParams& params,
                      const KernelFamily& fam, double lambda);

struct KernelUpdate {
  KernelFamily family;
  double gamma = 0.0;
  std::array<QpStatus, 2> status = {QpStatus::kOptimal, QpStatus::kOptimal};
};

/// Median-heuristic gamma on FC-1 features, 15-kernel family, one QP per
/// adaptation layer, simplex-normalised average of the two solutions.
KernelUpdate update_kernel_family(const PatchPairBatch& source_probe, const PatchPairBatch& target_probe,
                                  const DsdaParams& params);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss_c = 0.0;
  double mmd_fc1 = 0.0;
  double mmd_fc2 = 0.0;
  double loss_total = 0.0;
  std::vector<double> beta;
  double gamma = 0.0;
  // Quadratic MK-MMD on the fixed probe batches after the epoch's updates,
  // with the epoch's kernel family. Not part of the CSV.
  double probe_mmd_fc1 = 0.0;
  double probe_mmd_fc2 = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  double wall_seconds = 0.0;
};

/// CSV: epoch,loss_c,mmd_fc1,mmd_fc2,loss_total,beta_0..beta_{m-1}.
void write_report_csv(std::ostream& os, const TrainReport& report);

struct TrainResult {
  Checkpoint checkpoint;
  TrainReport report;
};

/// Joint training on labeled source pixels and all unlabeled target pixels.
/// `source` and `target` are expected to be normalised already.
TrainResult train(const RasterPair& source, const LabelMap& source_labels, const RasterPair& target,
                  const TrainConfig& cfg);

/// Source-only supervised training with the same sampling and shuffling
/// streams as `train`; the reference that lambda = 0 must reproduce.
DsdaParams train_baseline(const RasterPair& source, const LabelMap& source_labels, const TrainConfig& cfg);

/// Full-batch SGD-momentum on bce over the sparse target batch for
/// cfg.epochs; the kernel family is carried over unchanged.
Checkpoint finetune(const Checkpoint& ckpt, const PatchPairBatch& target_labeled, const TrainConfig& cfg);

}  // namespace dsda
