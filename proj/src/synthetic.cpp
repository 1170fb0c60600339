#include "pointgrow/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "pointgrow/error.hpp"

namespace pointgrow {

bool Shape::covers(int x, int y) const {
  switch (kind) {
    case ShapeKind::kRectangle:
      return x >= x0 && x < x1 && y >= y0 && y < y1;
    case ShapeKind::kDisc: {
      const long dx = x - x0;
      const long dy = y - y0;
      return dx * dx + dy * dy <= static_cast<long>(x1) * x1;
    }
    case ShapeKind::kStrip:
      return y1 == 1 ? (x >= x0 && x < x0 + x1) : (y >= x0 && y < x0 + x1);
  }
  return false;
}

void validate(const SyntheticSceneSpec& spec) {
  if (spec.width < 1 || spec.height < 1) {
    fail(ErrorCode::kInvalidArgument, "scene dimensions must be positive");
  }
  if (spec.min_shapes < 0 || spec.max_shapes < spec.min_shapes) {
    fail(ErrorCode::kInvalidArgument, "shape count range must satisfy 0 <= min <= max");
  }
  if (!(spec.noise_sigma >= 0.0) || !std::isfinite(spec.noise_sigma)) {
    fail(ErrorCode::kInvalidArgument, "noise sigma must be finite and >= 0");
  }
  if (spec.max_shapes > 0 && spec.kinds.empty()) {
    fail(ErrorCode::kInvalidArgument, "at least one shape kind is required");
  }
}

std::vector<Shape> layout_shapes(const SyntheticSceneSpec& spec, std::uint64_t seed) {
  validate(spec);
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](int lo, int hi) {  // inclusive
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };
  const int w = spec.width;
  const int h = spec.height;
  const int shorter = std::min(w, h);
  const int count = uniform(spec.min_shapes, spec.max_shapes);

  std::vector<Shape> shapes;
  shapes.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Shape s;
    s.kind = spec.kinds[static_cast<std::size_t>(
        uniform(0, static_cast<int>(spec.kinds.size()) - 1))];
    s.class_id = uniform(1, kNumClasses - 1);
    switch (s.kind) {
      case ShapeKind::kRectangle: {
        const int rw = uniform(std::max(1, shorter / 8), std::max(1, shorter / 3));
        const int rh = uniform(std::max(1, shorter / 8), std::max(1, shorter / 3));
        s.x0 = uniform(0, std::max(0, w - rw));
        s.y0 = uniform(0, std::max(0, h - rh));
        s.x1 = s.x0 + rw;
        s.y1 = s.y0 + rh;
        break;
      }
      case ShapeKind::kDisc:
        s.x0 = uniform(0, w - 1);
        s.y0 = uniform(0, h - 1);
        s.x1 = uniform(std::max(1, shorter / 10), std::max(1, shorter / 5));
        break;
      case ShapeKind::kStrip: {
        const bool vertical = uniform(0, 1) == 1;
        const int extent = vertical ? w : h;
        s.y1 = vertical ? 1 : 0;
        s.x1 = uniform(std::max(1, shorter / 32), std::max(1, shorter / 12));
        s.x0 = uniform(0, std::max(0, extent - s.x1));
        break;
      }
    }
    shapes.push_back(s);
  }
  return shapes;
}

std::pair<RasterImage, ClassMask> rasterize_scene(const SyntheticSceneSpec& spec,
                                                  const std::vector<Shape>& shapes,
                                                  std::uint64_t noise_seed) {
  validate(spec);
  RasterImage image(spec.width, spec.height);
  ClassMask mask(spec.width, spec.height, kNumClasses);
  for (const Shape& s : shapes) {
    if (s.class_id < 0 || s.class_id >= kNumClasses) {
      fail(ErrorCode::kInvalidClass, "shape class out of range");
    }
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        if (s.covers(x, y)) mask.at(x, y) = static_cast<std::uint8_t>(s.class_id);
      }
    }
  }

  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const Rgb& base = spec.base_colors[mask.at(x, y)];
      Rgb px = base;
      if (spec.noise_sigma > 0.0) {
        for (int c = 0; c < 3; ++c) {
          const double v = base[c] + spec.noise_sigma * noise(rng);
          px[c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
      }
      image.set(x, y, px);
    }
  }
  return {std::move(image), std::move(mask)};
}

std::pair<RasterImage, ClassMask> gen_synthetic_scene(const SyntheticSceneSpec& spec,
                                                      std::uint64_t seed) {
  // Layout and noise draw from decorrelated streams of the same seed.
  return rasterize_scene(spec, layout_shapes(spec, seed), seed ^ 0x9e3779b97f4a7c15ULL);
}

}  // namespace pointgrow
