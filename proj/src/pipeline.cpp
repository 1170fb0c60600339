#include "pointgrow/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "pointgrow/error.hpp"
#include "pointgrow/parallel.hpp"
#include "pointgrow/png_io.hpp"

namespace pointgrow {

using ordered_json = nlohmann::ordered_json;

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

SuperpixelConfig PipelineConfig::superpixel_config() const {
  SuperpixelConfig out = superpixel;
  out.k = k;
  out.edge = edge;
  return out;
}

PointSet sample_points(const ClassMask& gt, PointSource strategy, int count, std::uint64_t seed) {
  switch (strategy) {
    case PointSource::kRandom: return sample_points_random(gt, count, seed);
    case PointSource::kBalanced: return sample_points_balanced(gt, count, seed);
    case PointSource::kManual: break;
  }
  fail(ErrorCode::kInvalidArgument, "manual point sets cannot be sampled");
}

std::uint64_t point_seed(std::uint64_t base, std::size_t index) {
  return derive_seed(base, 1000 + index);
}

std::vector<std::size_t> Benchmark::split_indices(Split which) const {
  std::vector<std::size_t> out;
  for (const ManifestEntry& e : manifest.entries) {
    if (e.split == which) out.push_back(std::stoul(e.image));
  }
  return out;
}

Benchmark make_benchmark(int count, int size, std::uint64_t first_seed, std::uint64_t split_seed) {
  if (count < 1) fail(ErrorCode::kInvalidArgument, "benchmark needs at least one scene");
  SyntheticSceneSpec spec;
  spec.width = size;
  spec.height = size;
  Benchmark bench;
  std::vector<std::pair<std::string, std::string>> items;
  for (int i = 0; i < count; ++i) {
    Scene scene;
    scene.seed = first_seed + static_cast<std::uint64_t>(i);
    std::tie(scene.image, scene.gt) = gen_synthetic_scene(spec, scene.seed);
    bench.scenes.push_back(std::move(scene));
    items.emplace_back(std::to_string(i), std::to_string(i) + "m");
  }
  bench.manifest = split_manifest(items, split_seed);
  return bench;
}

void ensure_hierarchies(Benchmark& bench, const SuperpixelConfig& superpixel, int threads) {
  if (superpixel.backend != SuperpixelBackend::kAgglomerative) return;
  const int slot = superpixel.edge ? 1 : 0;
  parallel_for(bench.scenes.size(), threads, [&](std::size_t i) {
    Scene& scene = bench.scenes[i];
    if (!scene.hierarchy[slot]) scene.hierarchy[slot] = build_hierarchy(scene.image, superpixel);
  });
}

namespace {

SuperpixelMap scene_superpixels(const Scene& scene, const SuperpixelConfig& sp) {
  if (sp.backend == SuperpixelBackend::kSlic) return slic(scene.image, sp);
  const auto& cached = scene.hierarchy[sp.edge ? 1 : 0];
  if (cached) return extract_k(*cached, sp.k, scene.image.width, scene.image.height);
  return extract_k(build_hierarchy(scene.image, sp), sp.k, scene.image.width, scene.image.height);
}

double mean(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / double(values.size());
}

double stddev(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const double mu = mean(values);
  double acc = 0.0;
  for (double v : values) acc += (v - mu) * (v - mu);
  return std::sqrt(acc / double(values.size() - 1));
}

}  // namespace

PseudoMask make_pseudo_mask(const Scene& scene, std::size_t index, const PipelineConfig& config) {
  const PointSet points =
      sample_points(scene.gt, config.strategy, config.points, point_seed(config.seed, index));
  return propagate(points, scene_superpixels(scene, config.superpixel_config()),
                   PropagationConfig{config.policy}, config.num_classes);
}

std::string to_string(LossVariant variant) {
  switch (variant) {
    case LossVariant::kMasked: return "masked";
    case LossVariant::kBackgroundSupervised: return "background";
    case LossVariant::kFullyLabeled: return "full";
  }
  return "masked";
}

LossVariant parse_loss_variant(const std::string& name) {
  if (name == "masked") return LossVariant::kMasked;
  if (name == "background") return LossVariant::kBackgroundSupervised;
  if (name == "full") return LossVariant::kFullyLabeled;
  fail(ErrorCode::kInvalidArgument, "unknown loss variant '" + name + "'");
}

double pseudo_mask_quality(const PseudoMask& pm, const ClassMask& gt) {
  ClassMask predicted = pm.wl;
  for (std::size_t i = 0; i < predicted.classes.size(); ++i) {
    if (pm.m[i] == 0) predicted.classes[i] = 0;
  }
  return miou_micro(predicted, gt, gt.num_classes, 0);
}

CellStats pseudo_mask_stats(const Benchmark& bench, const std::vector<std::size_t>& scenes,
                            const PipelineConfig& config) {
  std::vector<double> cov, quality;
  for (std::size_t i : scenes) {
    const PseudoMask pm = make_pseudo_mask(bench.scenes[i], i, config);
    cov.push_back(coverage(pm));
    quality.push_back(pseudo_mask_quality(pm, bench.scenes[i].gt));
  }
  return {mean(cov), mean(quality)};
}

TrainingRun run_training(const Benchmark& bench, const PipelineConfig& base, LossVariant variant,
                         std::uint64_t run_seed) {
  PipelineConfig config = base;
  config.seed = run_seed;
  config.policy = variant == LossVariant::kBackgroundSupervised ? BackgroundPolicy::kSupervise
                                                                : BackgroundPolicy::kIgnore;
  const auto train_ids = bench.split_indices(Split::kTrain);
  const auto val_ids = bench.split_indices(Split::kVal);
  const auto test_ids = bench.split_indices(Split::kTest);

  std::vector<PseudoMask> targets;
  targets.reserve(train_ids.size());
  for (std::size_t i : train_ids) {
    const Scene& scene = bench.scenes[i];
    if (variant == LossVariant::kFullyLabeled) {
      targets.push_back({scene.gt, std::vector<std::uint8_t>(scene.gt.pixel_count(), 1)});
    } else {
      targets.push_back(make_pseudo_mask(scene, i, config));
    }
  }
  std::vector<TrainSample> train_set;
  for (std::size_t k = 0; k < train_ids.size(); ++k) {
    train_set.push_back({&bench.scenes[train_ids[k]].image, &targets[k]});
  }
  auto eval_set = [&](const std::vector<std::size_t>& ids) {
    std::vector<EvalSample> out;
    for (std::size_t i : ids) out.push_back({&bench.scenes[i].image, &bench.scenes[i].gt});
    return out;
  };

  TrainConfig tc = config.train;
  tc.seed = derive_seed(run_seed, 2);
  const TrainResult result =
      train(ToyNet::initialized(config.num_classes, derive_seed(run_seed, 1)), train_set,
            eval_set(val_ids), class_weights(targets, config.num_classes), tc);

  TrainingRun run;
  run.seed = run_seed;
  run.val_miou = result.best_val_miou;
  run.best_epoch = result.best_epoch;
  run.log = result.log;
  if (!test_ids.empty()) {
    run.test_miou = miou_micro(evaluate(result.best_state.net, eval_set(test_ids), tc.batch_size), 0);
  }
  return run;
}

namespace {

struct AblationCell {
  std::string axis;
  ordered_json key;
  PipelineConfig config;
  LossVariant variant = LossVariant::kMasked;
};

}  // namespace

std::string run_ablation(Benchmark& bench, const PipelineConfig& base, const AblationRequest& req) {
  if (req.seeds.empty()) fail(ErrorCode::kInvalidArgument, "ablation needs at least one seed");
  std::vector<AblationCell> cells;
  for (LossVariant v : req.losses) cells.push_back({"loss", to_string(v), base, v});
  for (int p : req.points) {
    PipelineConfig c = base;
    c.points = p;
    cells.push_back({"points", p, c, LossVariant::kMasked});
  }
  for (int k : req.ks) {
    PipelineConfig c = base;
    c.k = k;
    cells.push_back({"k", k, c, LossVariant::kMasked});
  }
  for (bool e : req.edges) {
    PipelineConfig c = base;
    c.edge = e;
    cells.push_back({"edge", e, c, LossVariant::kMasked});
  }

  for (bool e : {false, true}) {
    const bool needed = std::any_of(cells.begin(), cells.end(),
                                    [e](const AblationCell& c) { return c.config.edge == e; });
    if (needed) {
      PipelineConfig c = base;
      c.edge = e;
      ensure_hierarchies(bench, c.superpixel_config(), req.threads);
    }
  }

  std::vector<std::size_t> all(bench.scenes.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<CellStats> stats(cells.size());
  parallel_for(cells.size(), req.threads, [&](std::size_t ci) {
    std::vector<double> cov, quality;
    for (std::uint64_t seed : req.seeds) {
      PipelineConfig c = cells[ci].config;
      c.seed = seed;
      if (cells[ci].variant == LossVariant::kBackgroundSupervised) {
        c.policy = BackgroundPolicy::kSupervise;
      }
      const CellStats s = cells[ci].variant == LossVariant::kFullyLabeled
                              ? CellStats{1.0, 1.0}
                              : pseudo_mask_stats(bench, all, c);
      cov.push_back(s.coverage_mean);
      quality.push_back(s.pseudo_miou_mean);
    }
    stats[ci] = {mean(cov), mean(quality)};
  });

  std::vector<TrainingRun> runs(req.epochs > 0 ? cells.size() * req.seeds.size() : 0);
  parallel_for(runs.size(), req.threads, [&](std::size_t job) {
    const AblationCell& cell = cells[job / req.seeds.size()];
    PipelineConfig c = cell.config;
    c.train.epochs = req.epochs;
    c.train.threads = 1;
    runs[job] = run_training(bench, c, cell.variant, req.seeds[job % req.seeds.size()]);
  });

  ordered_json report;
  report["defaults"] = {{"points", base.points},
                        {"k", base.k},
                        {"edge", base.edge},
                        {"strategy", to_string(base.strategy)},
                        {"loss", "masked"},
                        {"scenes", bench.scenes.size()},
                        {"epochs", req.epochs},
                        {"lr", base.train.lr},
                        {"batch_size", base.train.batch_size},
                        {"seeds", req.seeds}};
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    const AblationCell& cell = cells[ci];
    ordered_json row;
    row[cell.axis == "loss" ? "variant" : cell.axis] = cell.key;
    row["coverage"] = stats[ci].coverage_mean;
    row["pseudo_miou"] = stats[ci].pseudo_miou_mean;
    if (req.epochs > 0) {
      std::vector<double> val, test;
      auto run_rows = ordered_json::array();
      for (std::size_t s = 0; s < req.seeds.size(); ++s) {
        const TrainingRun& r = runs[ci * req.seeds.size() + s];
        val.push_back(r.val_miou);
        test.push_back(r.test_miou);
        run_rows.push_back({{"seed", r.seed},
                            {"val_miou", r.val_miou},
                            {"test_miou", r.test_miou},
                            {"best_epoch", r.best_epoch}});
      }
      row["val_miou_mean"] = mean(val);
      row["val_miou_std"] = stddev(val);
      row["test_miou_mean"] = mean(test);
      row["runs"] = std::move(run_rows);
    }
    const std::string table = cell.axis == "k" ? "superpixels" : cell.axis;
    report[table].push_back(std::move(row));
  }
  return report.dump(2) + "\n";
}

DatasetManifest write_synthetic_dataset(const std::filesystem::path& dir, int count, int size,
                                        std::uint64_t first_seed, std::uint64_t split_seed) {
  if (count < 1) fail(ErrorCode::kInvalidArgument, "scene count must be >= 1");
  SyntheticSceneSpec spec;
  spec.width = size;
  spec.height = size;
  std::vector<std::pair<std::string, std::string>> items;
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "scene_%04d.png", i);
    const auto [image, gt] = gen_synthetic_scene(spec, first_seed + static_cast<std::uint64_t>(i));
    write_image(image, dir / "images" / name);
    write_mask(gt, dir / "masks" / name);
    items.emplace_back(std::string("images/") + name, std::string("masks/") + name);
  }
  // Keep manifest order stable (by scene) so downstream seeds follow scene ids.
  DatasetManifest manifest = split_manifest(items, split_seed);
  std::sort(manifest.entries.begin(), manifest.entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.image < b.image; });
  save_manifest(manifest, dir / "manifest.json");
  return manifest;
}

std::filesystem::path resolve_entry_path(const std::filesystem::path& manifest_path,
                                         const std::string& entry_path) {
  const std::filesystem::path p(entry_path);
  return p.is_absolute() ? p : manifest_path.parent_path() / p;
}

std::string entry_stem(const ManifestEntry& entry) {
  return std::filesystem::path(entry.image).stem().string();
}

std::string class_weights_json(const ClassWeights& weights) {
  ordered_json doc;
  doc["weights"] = weights.w;
  doc["eps"] = weights.eps;
  return doc.dump(2) + "\n";
}

ClassWeights class_weights_from_json(const std::string& text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    ClassWeights out{doc.at("weights").get<std::vector<double>>(), doc.value("eps", 1e-6)};
    for (double w : out.w) {
      if (!(w > 0.0) || !std::isfinite(w)) {
        fail(ErrorCode::kInvalidArgument, "class weights must be positive and finite");
      }
    }
    return out;
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorCode::kInvalidArgument, std::string("malformed weights file: ") + ex.what());
  }
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

}  // namespace

PipelineReport run_pipeline(const std::filesystem::path& manifest_path,
                            const std::filesystem::path& out_dir, const PipelineConfig& config) {
  const DatasetManifest manifest = load_manifest(manifest_path);
  const SuperpixelConfig sp_config = config.superpixel_config();
  const std::size_t n = manifest.entries.size();

  std::vector<RasterImage> images(n);
  std::vector<ClassMask> gts(n);
  std::vector<PseudoMask> pseudo(n);
  std::vector<double> cov(n), quality(n);
  parallel_for(n, config.train.threads, [&](std::size_t i) {
    const ManifestEntry& e = manifest.entries[i];
    const std::string stem = entry_stem(e);
    images[i] = read_image(resolve_entry_path(manifest_path, e.image));
    gts[i] = read_mask(resolve_entry_path(manifest_path, e.mask), config.num_classes);
    const SuperpixelMap sp = compute_superpixels(images[i], sp_config);
    write_file(out_dir / "superpixels" / (stem + ".png"), encode_superpixel_png(sp));
    const PointSet points =
        sample_points(gts[i], config.strategy, config.points, point_seed(config.seed, i));
    save_points(points, out_dir / "points" / (stem + ".csv"));
    pseudo[i] = propagate(points, sp, PropagationConfig{config.policy}, config.num_classes);
    save_pseudo_mask(pseudo[i], out_dir / "pseudo" / stem);
    cov[i] = coverage(pseudo[i]);
    quality[i] = pseudo_mask_quality(pseudo[i], gts[i]);
  });

  std::vector<PseudoMask> train_targets;
  std::vector<std::size_t> train_ids, val_ids, test_ids;
  for (std::size_t i = 0; i < n; ++i) {
    switch (manifest.entries[i].split) {
      case Split::kTrain: train_ids.push_back(i); break;
      case Split::kVal: val_ids.push_back(i); break;
      case Split::kTest: test_ids.push_back(i); break;
    }
  }
  for (std::size_t i : train_ids) train_targets.push_back(pseudo[i]);
  if (train_targets.empty()) fail(ErrorCode::kEmpty, "manifest has no training entries");
  const ClassWeights weights = class_weights(train_targets, config.num_classes);
  write_text(out_dir / "weights.json", class_weights_json(weights));

  std::vector<TrainSample> train_set;
  for (std::size_t i : train_ids) train_set.push_back({&images[i], &pseudo[i]});
  auto eval_set = [&](const std::vector<std::size_t>& ids) {
    std::vector<EvalSample> out;
    for (std::size_t i : ids) out.push_back({&images[i], &gts[i]});
    return out;
  };

  TrainConfig tc = config.train;
  tc.seed = derive_seed(config.seed, 2);
  const TrainResult result =
      train(ToyNet::initialized(config.num_classes, derive_seed(config.seed, 1)), train_set,
            eval_set(val_ids), weights, tc);
  write_text(out_dir / "train_log.jsonl", epoch_log_jsonl(result.log));
  save_checkpoint(result.best_state, out_dir / "best.ckpt");
  save_checkpoint(result.final_state, out_dir / "final.ckpt");

  PipelineReport report;
  report.coverage_mean = mean(cov);
  report.pseudo_miou_mean = mean(quality);
  report.best_val_miou = result.best_val_miou;
  report.best_epoch = result.best_epoch;
  if (!test_ids.empty()) {
    const ConfusionMatrix cm = evaluate(result.best_state.net, eval_set(test_ids), tc.batch_size,
                                        tc.threads);
    write_text(out_dir / "metrics.json", metrics_json(cm, 0));
    report.test_miou = miou_micro(cm, 0);
  }

  ordered_json doc;
  doc["config"] = {{"points", config.points},
                   {"k", config.k},
                   {"edge", config.edge},
                   {"strategy", to_string(config.strategy)},
                   {"policy", to_string(config.policy)},
                   {"seed", config.seed},
                   {"classes", config.num_classes},
                   {"epochs", tc.epochs},
                   {"lr", tc.lr},
                   {"batch_size", tc.batch_size}};
  doc["coverage_mean"] = report.coverage_mean;
  doc["pseudo_miou_mean"] = report.pseudo_miou_mean;
  doc["best_val_miou"] = report.best_val_miou;
  doc["best_epoch"] = report.best_epoch;
  doc["test_miou"] = report.test_miou;
  write_text(out_dir / "report.json", doc.dump(2) + "\n");
  return report;
}

}  // namespace pointgrow
