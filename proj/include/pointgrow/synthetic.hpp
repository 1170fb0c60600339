#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "pointgrow/raster.hpp"

namespace pointgrow {

inline constexpr int kNumClasses = 5;

using Rgb = std::array<std::uint8_t, 3>;

/// Background, buildings, woodland, water, road.
inline constexpr std::array<Rgb, kNumClasses> kClassPalette = {{
    {64, 64, 64},
    {220, 40, 40},
    {40, 170, 60},
    {40, 80, 220},
    {230, 210, 50},
}};

enum class ShapeKind { kRectangle, kDisc, kStrip };

struct Shape {
  ShapeKind kind = ShapeKind::kRectangle;
  int class_id = 1;
  // Rectangle: [x0, x1) x [y0, y1). Disc: center (x0, y0), radius x1.
  // Strip: axis-aligned band; vertical when y1 == 1, occupying columns
  // [x0, x0 + x1) over the whole height, otherwise rows [x0, x0 + x1).
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  bool covers(int x, int y) const;
};

struct SyntheticSceneSpec {
  int width = 64;
  int height = 64;
  int min_shapes = 3;
  int max_shapes = 8;
  std::array<Rgb, kNumClasses> base_colors = kClassPalette;
  double noise_sigma = 12.0;
  std::vector<ShapeKind> kinds = {ShapeKind::kRectangle, ShapeKind::kDisc, ShapeKind::kStrip};
};

void validate(const SyntheticSceneSpec& spec);

/// The random layout of a scene, before rasterization.
std::vector<Shape> layout_shapes(const SyntheticSceneSpec& spec, std::uint64_t seed);

/// Paints shapes in order over a class-0 background; later shapes occlude
/// earlier ones. Noise is added per channel and clamped to [0, 255].
std::pair<RasterImage, ClassMask> rasterize_scene(const SyntheticSceneSpec& spec,
                                                  const std::vector<Shape>& shapes,
                                                  std::uint64_t noise_seed);

std::pair<RasterImage, ClassMask> gen_synthetic_scene(const SyntheticSceneSpec& spec,
                                                      std::uint64_t seed);

}  // namespace pointgrow
