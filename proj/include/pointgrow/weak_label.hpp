#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pointgrow/png_io.hpp"
#include "pointgrow/raster.hpp"
#include "pointgrow/superpixel.hpp"

namespace pointgrow {

struct PointAnnotation {
  int x = 0;
  int y = 0;
  int class_id = 0;

  friend bool operator==(const PointAnnotation&, const PointAnnotation&) = default;
};

enum class PointSource { kRandom, kBalanced, kManual };

std::string to_string(PointSource source);
PointSource parse_point_source(const std::string& name);

struct PointSet {
  std::vector<PointAnnotation> points;
  PointSource source = PointSource::kManual;
  std::uint64_t seed = 0;

  /// Appends after checking bounds, class range and pixel uniqueness.
  void add(const PointAnnotation& p, int width, int height, int num_classes);

  friend bool operator==(const PointSet&, const PointSet&) = default;
};

/// Throws on out-of-bounds coordinates, bad classes or duplicate pixels.
void validate(const PointSet& points, int width, int height, int num_classes);

struct PseudoMask {
  ClassMask wl;
  std::vector<std::uint8_t> m;  // 0 or 1 per pixel

  friend bool operator==(const PseudoMask&, const PseudoMask&) = default;
};

enum class BackgroundPolicy { kIgnore, kSupervise };

std::string to_string(BackgroundPolicy policy);
BackgroundPolicy parse_background_policy(const std::string& name);

struct PropagationConfig {
  BackgroundPolicy background_policy = BackgroundPolicy::kIgnore;
};

PointSet sample_points_random(const ClassMask& gt, int count, std::uint64_t seed);
PointSet sample_points_balanced(const ClassMask& gt, int count, std::uint64_t seed);

/// Each superpixel holding points takes the majority class of its points
/// (ties to the smallest id) and m = 1. Point-free superpixels get wl = 0 and
/// m = 0 (ignore) or m = 1 (supervise).
PseudoMask propagate(const PointSet& points, const SuperpixelMap& sp,
                     const PropagationConfig& config, int num_classes);

double coverage(const PseudoMask& pm);

/// CSV with header "x,y,class".
std::string points_to_csv(const PointSet& points);
PointSet points_from_csv(const std::string& text);
/// Sidecar {"source": ..., "seed": ...}.
std::string points_sidecar_json(const PointSet& points);
void apply_points_sidecar(const std::string& json_text, PointSet& points);

void save_points(const PointSet& points, const std::filesystem::path& csv_path);
/// Reads the CSV and, when present, the ".json" sidecar next to it.
PointSet load_points(const std::filesystem::path& csv_path);

Bytes encode_supervision_png(const PseudoMask& pm);
/// Writes <stem>.labels.png and <stem>.mask.png.
void save_pseudo_mask(const PseudoMask& pm, const std::filesystem::path& stem);
PseudoMask load_pseudo_mask(const std::filesystem::path& stem, int num_classes);

}  // namespace pointgrow
