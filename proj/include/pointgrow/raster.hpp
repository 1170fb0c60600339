#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace pointgrow {

/// Row-major 8-bit RGB image. Pixel (x, y) starts at data[3 * (y * width + x)].
struct RasterImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  RasterImage() = default;
  RasterImage(int w, int h);
  RasterImage(int w, int h, std::vector<std::uint8_t> rgb);

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  std::array<std::uint8_t, 3> at(int x, int y) const;
  void set(int x, int y, std::array<std::uint8_t, 3> rgb);

  friend bool operator==(const RasterImage&, const RasterImage&) = default;
};

/// Per-pixel class indices, all strictly below num_classes.
struct ClassMask {
  int width = 0;
  int height = 0;
  int num_classes = 0;
  std::vector<std::uint8_t> classes;

  ClassMask() = default;
  ClassMask(int w, int h, int c, std::uint8_t fill = 0);

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  std::uint8_t at(int x, int y) const { return classes[index(x, y)]; }
  std::uint8_t& at(int x, int y) { return classes[index(x, y)]; }
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(x);
  }

  friend bool operator==(const ClassMask&, const ClassMask&) = default;
};

/// Gradient strength per pixel, normalized to [0, 1].
struct EdgeMap {
  int width = 0;
  int height = 0;
  std::vector<double> magnitude;

  double at(int x, int y) const {
    return magnitude[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                     static_cast<std::size_t>(x)];
  }
};

/// Throws kInvalidArgument unless the image satisfies its size invariants.
void validate(const RasterImage& image);
/// Throws kInvalidClass / kInvalidArgument on a malformed mask.
void validate(const ClassMask& mask);

/// 3x3 Sobel magnitude on luminance (0.299R + 0.587G + 0.114B) with
/// replicated borders, scaled so the per-image maximum is 1.
EdgeMap sobel_edges(const RasterImage& image);

}  // namespace pointgrow
