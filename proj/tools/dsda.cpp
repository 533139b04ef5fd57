#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "dsda/checkpoint.hpp"
#include "dsda/config.hpp"
#include "dsda/errors.hpp"
#include "dsda/eval.hpp"
#include "dsda/log.hpp"
#include "dsda/synth.hpp"
#include "dsda/trainer.hpp"
#include "dsda/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  std::string out;

  std::optional<double> lambda;
  std::optional<std::string> preset;
  std::optional<std::size_t> epochs;
  bool normalize = false;

  std::string source;
  std::string target;
  std::string model;
  std::string map;
  std::string labels;
  std::size_t batch = 256;
  std::size_t points = 500;
};

// Writes through a temporary sibling and renames, so readers never see a
// partially written file.
void write_atomic(const fs::path& path, const std::function<void(const fs::path&)>& write) {
  fs::path tmp = path;
  tmp += ".tmp";
  write(tmp);
  fs::rename(tmp, path);
}

void write_text(const fs::path& path, const std::string& text) {
  write_atomic(path, [&](const fs::path& tmp) {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os << text;
    if (!os) throw std::runtime_error("write failed: " + tmp.string());
  });
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create directory " + dir.string());
}

class Run {
 public:
  Run(std::string command, const Options& opt) : command_(std::move(command)), opt_(opt) {
    cfg_ = opt.config.empty() ? dsda::RunConfig{} : dsda::load_config(opt.config);
    if (opt.preset) {
      cfg_.preset = *opt.preset;
      cfg_.train.lambda = dsda::lambda_preset(*opt.preset);
    }
    if (opt.lambda) {
      cfg_.preset.reset();
      cfg_.train.lambda = *opt.lambda;
    }
    if (opt.epochs) cfg_.train.epochs = *opt.epochs;
    if (opt.seed) {
      cfg_.train.seed = *opt.seed;
      cfg_.source_scene.seed = *opt.seed;
      cfg_.target_scene.seed = *opt.seed + 1;
      cfg_.shift_seed = *opt.seed + 2;
    }
    cfg_.validate();
  }

  const dsda::RunConfig& cfg() const { return cfg_; }
  void input(const std::string& key, const fs::path& p) { inputs_[key] = p.string(); }
  void output(const std::string& key, const fs::path& p) { outputs_[key] = p.string(); }

  void finish(const fs::path& out_dir) const {
    json m;
    m["command"] = command_;
    m["config"] = opt_.config.empty() ? json(nullptr) : json(opt_.config);
    m["inputs"] = inputs_;
    m["outputs"] = outputs_;
    m["seed"] = cfg_.train.seed;
    m["threads"] = opt_.threads;
    m["version"] = dsda::kVersion;
    m["wall_time"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    m["effective_config"] = dsda::config_to_json(cfg_);
    write_text(out_dir / "manifest.json", m.dump(2) + "\n");
  }

 private:
  std::string command_;
  Options opt_;
  dsda::RunConfig cfg_;
  json inputs_ = json::object();
  json outputs_ = json::object();
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void save_pair(const fs::path& dir, const dsda::RasterPair& rp, const dsda::LabelMap& lm, Run& run,
               const std::string& tag) {
  make_dir(dir);
  write_atomic(dir / "t1.dsra", [&](const fs::path& p) { dsda::save_raster(p, rp.t1); });
  write_atomic(dir / "t2.dsra", [&](const fs::path& p) { dsda::save_raster(p, rp.t2); });
  write_atomic(dir / "gt.dslb", [&](const fs::path& p) { dsda::save_labels(p, lm); });
  run.output(tag + "_t1", dir / "t1.dsra");
  run.output(tag + "_t2", dir / "t2.dsra");
  run.output(tag + "_gt", dir / "gt.dslb");
}

dsda::RasterPair load_pair(const fs::path& dir, Run& run, const std::string& tag, bool normalize) {
  run.input(tag + "_t1", dir / "t1.dsra");
  run.input(tag + "_t2", dir / "t2.dsra");
  dsda::RasterPair rp(dsda::load_raster(dir / "t1.dsra"), dsda::load_raster(dir / "t2.dsra"));
  return normalize ? dsda::normalize_pair(rp) : rp;
}

dsda::LabelMap load_gt(const fs::path& dir, Run& run, const std::string& tag) {
  run.input(tag + "_gt", dir / "gt.dslb");
  return dsda::load_labels(dir / "gt.dslb");
}

void save_model(const fs::path& out, const dsda::Checkpoint& ckpt, Run& run) {
  write_atomic(out / "model.dsck", [&](const fs::path& p) { dsda::save_checkpoint(p, ckpt); });
  run.output("model", out / "model.dsck");
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw std::runtime_error(std::string("non-finite ") + what);
}

int cmd_synth(const Options& opt) {
  Run run("synth", opt);
  const fs::path out = opt.out;
  make_dir(out);
  const dsda::RunConfig& cfg = run.cfg();
  const dsda::Scene src = dsda::gen_scene(cfg.source_scene);
  const dsda::Scene tgt = dsda::gen_scene(cfg.target_scene);
  const dsda::RasterPair shifted = dsda::apply_shift(tgt.images, cfg.shift, cfg.shift_seed);
  save_pair(out / "source", src.images, src.labels, run, "source");
  save_pair(out / "target", shifted, tgt.labels, run, "target");
  run.finish(out);
  return 0;
}

int cmd_train(const Options& opt) {
  Run run("train", opt);
  const fs::path out = opt.out;
  make_dir(out);
  const dsda::RasterPair source = load_pair(opt.source, run, "source", opt.normalize);
  const dsda::LabelMap labels = load_gt(opt.source, run, "source");
  const dsda::RasterPair target = load_pair(opt.target, run, "target", opt.normalize);
  dsda::log::info("training: lambda {} epochs {} batch {} samples {}", run.cfg().train.lambda,
                  run.cfg().train.epochs, run.cfg().train.batch_size, run.cfg().train.source_samples);
  const dsda::TrainResult res = dsda::train(source, labels, target, run.cfg().train);
  for (const auto& e : res.report.epochs) require_finite(e.loss_total, "training loss");
  save_model(out, res.checkpoint, run);
  std::ostringstream csv;
  dsda::write_report_csv(csv, res.report);
  write_text(out / "train_report.csv", csv.str());
  run.output("report", out / "train_report.csv");
  run.finish(out);
  return 0;
}

int cmd_finetune(const Options& opt) {
  Run run("finetune", opt);
  const fs::path out = opt.out;
  make_dir(out);
  run.input("model", opt.model);
  const dsda::Checkpoint ckpt = dsda::load_checkpoint(opt.model);
  const dsda::RasterPair target = load_pair(opt.target, run, "target", opt.normalize);
  const dsda::LabelMap labels = load_gt(opt.target, run, "target");
  const dsda::TrainConfig& tc = run.cfg().train;
  const dsda::PatchPairBatch sparse =
      dsda::sample_training_set(target, labels, tc.target_labeled, tc.seed, true, dsda::kPatchSize);
  const dsda::Checkpoint tuned = dsda::finetune(ckpt, sparse, tc);
  for (const auto view : tuned.params.views())
    for (double v : view) require_finite(v, "parameter");
  save_model(out, tuned, run);
  run.finish(out);
  return 0;
}

int cmd_predict(const Options& opt) {
  Run run("predict", opt);
  const fs::path out = opt.out;
  make_dir(out);
  run.input("model", opt.model);
  const dsda::Checkpoint ckpt = dsda::load_checkpoint(opt.model);
  const dsda::RasterPair target = load_pair(opt.target, run, "target", opt.normalize);
  const dsda::ChangeMap cm = dsda::predict_map(ckpt, target, opt.batch, opt.threads);
  for (double p : cm.prob) require_finite(p, "probability");
  write_atomic(out / "change.dslb", [&](const fs::path& p) { dsda::save_labels(p, cm.as_labels()); });
  write_atomic(out / "prob.dsra", [&](const fs::path& p) { dsda::save_raster(p, cm.as_raster()); });
  run.output("change_map", out / "change.dslb");
  run.output("probability", out / "prob.dsra");
  run.finish(out);
  return 0;
}

int cmd_evaluate(const Options& opt) {
  Run run("evaluate", opt);
  run.input("map", opt.map);
  run.input("labels", opt.labels);
  const dsda::LabelMap pred = dsda::load_labels(opt.map);
  const dsda::LabelMap gt = dsda::load_labels(opt.labels);
  std::vector<double> prob(pred.labels.size());
  for (std::size_t i = 0; i < prob.size(); ++i) {
    if (pred.labels[i] > 1) throw dsda::FormatError("change map holds a label other than 0/1");
    prob[i] = pred.labels[i];
  }
  const dsda::Metrics m =
      dsda::confusion_metrics(dsda::make_change_map(pred.height, pred.width, std::move(prob)), gt);
  require_finite(m.kc, "kappa");
  std::ostringstream csv;
  dsda::write_metrics_csv(csv, m);
  std::cout << csv.str();
  if (!opt.out.empty()) {
    make_dir(opt.out);
    write_text(fs::path(opt.out) / "metrics.csv", csv.str());
    run.output("metrics", fs::path(opt.out) / "metrics.csv");
    run.finish(opt.out);
  }
  return 0;
}

int cmd_adist(const Options& opt) {
  Run run("adist", opt);
  const dsda::RasterPair source = load_pair(opt.source, run, "source", opt.normalize);
  const dsda::RasterPair target = load_pair(opt.target, run, "target", opt.normalize);
  const std::uint64_t seed = run.cfg().train.seed;
  const auto ps = dsda::random_pixels(source.height(), source.width(), opt.points, seed);
  const auto pt = dsda::random_pixels(target.height(), target.width(), opt.points, seed + 1);
  double a = 0.0;
  std::string features = "raw";
  if (opt.model.empty()) {
    a = dsda::a_distance(dsda::raw_patch_features(source, ps), dsda::raw_patch_features(target, pt), seed);
  } else {
    run.input("model", opt.model);
    const dsda::Checkpoint ckpt = dsda::load_checkpoint(opt.model);
    features = "fc1";
    a = dsda::a_distance(dsda::fc1_features(ckpt.params, source, ps), dsda::fc1_features(ckpt.params, target, pt),
                         seed);
  }
  require_finite(a, "A-distance");
  std::ostringstream csv;
  csv.precision(10);
  csv << "features,points,a_distance\n" << features << ',' << opt.points << ',' << a << '\n';
  std::cout << csv.str();
  if (!opt.out.empty()) {
    make_dir(opt.out);
    write_text(fs::path(opt.out) / "adist.csv", csv.str());
    run.output("adist", fs::path(opt.out) / "adist.csv");
    run.finish(opt.out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  dsda::log::init_from_env();
  CLI::App app{"Cross-domain change detection with a deep siamese domain-adaptation network"};
  app.set_version_flag("--version", std::string(dsda::kVersion));
  app.require_subcommand(1);
  Options opt;

  auto common = [&](CLI::App* sub, bool out_required) {
    sub->add_option("--config", opt.config, "JSON config")->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "Seed (overrides config)");
    sub->add_option("--threads", opt.threads, "Worker cap; results do not depend on it")->check(CLI::PositiveNumber);
    auto* o = sub->add_option("--out", opt.out, "Output directory");
    if (out_required) o->required();
  };
  auto normalize = [&](CLI::App* sub) {
    sub->add_flag("--normalize", opt.normalize, "Z-score each date pair per band before use");
  };

  auto* synth = app.add_subcommand("synth", "Generate source and shifted target scenes");
  common(synth, true);

  auto* train = app.add_subcommand("train", "Joint training on labeled source and unlabeled target");
  common(train, true);
  normalize(train);
  train->add_option("--source", opt.source, "Source scene directory")->required();
  train->add_option("--target", opt.target, "Target scene directory")->required();
  auto* lambda = train->add_option("--lambda", opt.lambda, "Domain penalty (0 = source-only baseline)");
  train->add_option("--preset", opt.preset, "Named lambda: hy, qu or lo")->excludes(lambda);
  train->add_option("--epochs", opt.epochs, "Training epochs");

  auto* tune = app.add_subcommand("finetune", "Fine-tune on a few labeled target pixels");
  common(tune, true);
  normalize(tune);
  tune->add_option("--model", opt.model, "Checkpoint")->required();
  tune->add_option("--target", opt.target, "Target scene directory (with gt.dslb)")->required();
  tune->add_option("--epochs", opt.epochs, "Fine-tuning epochs");

  auto* predict = app.add_subcommand("predict", "Full-scene change map");
  common(predict, true);
  normalize(predict);
  predict->add_option("--model", opt.model, "Checkpoint")->required();
  predict->add_option("--target", opt.target, "Scene directory")->required();
  predict->add_option("--batch", opt.batch, "Pixels per forward pass")->check(CLI::PositiveNumber);

  auto* evaluate = app.add_subcommand("evaluate", "FP,FN,OE,OA,KC of a change map");
  common(evaluate, false);
  evaluate->add_option("--map", opt.map, "Predicted change map (DSLB)")->required();
  evaluate->add_option("--labels", opt.labels, "Ground truth (DSLB)")->required();

  auto* adist = app.add_subcommand("adist", "A-distance between two scenes");
  common(adist, false);
  normalize(adist);
  adist->add_option("--source", opt.source, "Source scene directory")->required();
  adist->add_option("--target", opt.target, "Target scene directory")->required();
  adist->add_option("--model", opt.model, "Use FC-1 features of this checkpoint instead of raw patches");
  adist->add_option("--points", opt.points, "Pixels drawn per scene")->check(CLI::Range(20, 1 << 20));

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) return cmd_synth(opt);
    if (*train) return cmd_train(opt);
    if (*tune) return cmd_finetune(opt);
    if (*predict) return cmd_predict(opt);
    if (*evaluate) return cmd_evaluate(opt);
    if (*adist) return cmd_adist(opt);
  } catch (const dsda::ConfigError& e) {
    dsda::log::error("config: {}", e.what());
    return 2;
  } catch (const dsda::FormatError& e) {
    dsda::log::error("format: {}", e.what());
    return 3;
  } catch (const std::exception& e) {
    dsda::log::error("{}", e.what());
    return 1;
  }
  return 1;
}
