#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pointgrow/manifest.hpp"
#include "pointgrow/superpixel.hpp"
#include "pointgrow/synthetic.hpp"
#include "pointgrow/trainer.hpp"
#include "pointgrow/weak_label.hpp"

namespace pointgrow {

/// Mixes a base seed with a stream index (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Defaults are the best cells of the point / superpixel / edge ablations.
struct PipelineConfig {
  int points = 50;
  int k = 100;
  bool edge = false;
  PointSource strategy = PointSource::kBalanced;
  BackgroundPolicy policy = BackgroundPolicy::kIgnore;
  std::uint64_t seed = 0;
  int num_classes = kNumClasses;
  SuperpixelConfig superpixel;  // k and edge above take precedence
  TrainConfig train;

  SuperpixelConfig superpixel_config() const;
};

PointSet sample_points(const ClassMask& gt, PointSource strategy, int count, std::uint64_t seed);

/// Seed used for the point sampler of manifest item `index`.
std::uint64_t point_seed(std::uint64_t base, std::size_t index);

// ---- in-memory synthetic benchmark -------------------------------------

struct Scene {
  std::uint64_t seed = 0;
  RasterImage image;
  ClassMask gt;
  /// Hierarchies indexed by the edge flag, computed on demand.
  std::optional<MergeHierarchy> hierarchy[2];
};

struct Benchmark {
  std::vector<Scene> scenes;
  DatasetManifest manifest;  // entries name scenes by index
  std::vector<std::size_t> split_indices(Split which) const;
};

/// Scenes use seeds first_seed .. first_seed + count - 1; the split uses split_seed.
Benchmark make_benchmark(int count, int size, std::uint64_t first_seed, std::uint64_t split_seed);
/// Computes any missing hierarchies for the requested edge flag.
void ensure_hierarchies(Benchmark& bench, const SuperpixelConfig& superpixel, int threads);

PseudoMask make_pseudo_mask(const Scene& scene, std::size_t index, const PipelineConfig& config);

/// How the training target is formed for the loss ablation.
enum class LossVariant { kMasked, kBackgroundSupervised, kFullyLabeled };
std::string to_string(LossVariant variant);
LossVariant parse_loss_variant(const std::string& name);

/// Full-mask quality of a pseudo-mask: micro mIoU (background ignored) of wl
/// against the ground truth, with unsupervised pixels counting as background.
double pseudo_mask_quality(const PseudoMask& pm, const ClassMask& gt);

struct CellStats {
  double coverage_mean = 0.0;
  double pseudo_miou_mean = 0.0;
};

/// Pseudo-mask statistics over the given scenes (no training).
CellStats pseudo_mask_stats(const Benchmark& bench, const std::vector<std::size_t>& scenes,
                            const PipelineConfig& config);

struct TrainingRun {
  std::uint64_t seed = 0;
  double val_miou = 0.0;   // best-validation checkpoint
  double test_miou = 0.0;  // same checkpoint on the test split
  int best_epoch = 0;
  std::vector<EpochLog> log;
};

TrainingRun run_training(const Benchmark& bench, const PipelineConfig& config, LossVariant variant,
                         std::uint64_t run_seed);

struct AblationRequest {
  std::vector<LossVariant> losses;
  std::vector<int> points;
  std::vector<int> ks;
  std::vector<bool> edges;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  int epochs = 100;  // 0 skips training and reports pseudo-mask statistics only
  int threads = 1;
};

/// Table-shaped JSON: one array per requested axis, other axes at defaults.
std::string run_ablation(Benchmark& bench, const PipelineConfig& base, const AblationRequest& req);

// ---- file-based stages ----------------------------------------------------

/// Writes images/, masks/ and manifest.json (relative paths) under dir.
DatasetManifest write_synthetic_dataset(const std::filesystem::path& dir, int count, int size,
                                        std::uint64_t first_seed, std::uint64_t split_seed);

std::filesystem::path resolve_entry_path(const std::filesystem::path& manifest_path,
                                         const std::string& entry_path);
std::string entry_stem(const ManifestEntry& entry);

struct PipelineReport {
  double coverage_mean = 0.0;
  double pseudo_miou_mean = 0.0;
  double test_miou = 0.0;
  double best_val_miou = 0.0;
  int best_epoch = 0;
};

/// Runs superpixels -> sample -> propagate -> weights -> train -> eval over a
/// manifest and writes every artifact under out_dir.
PipelineReport run_pipeline(const std::filesystem::path& manifest_path,
                            const std::filesystem::path& out_dir, const PipelineConfig& config);

std::string class_weights_json(const ClassWeights& weights);
ClassWeights class_weights_from_json(const std::string& text);

}  // namespace pointgrow
