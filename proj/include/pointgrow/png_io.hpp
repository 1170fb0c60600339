#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pointgrow/raster.hpp"

namespace pointgrow {

using Bytes = std::vector<std::uint8_t>;

/// Single-channel raster as stored in a grayscale PNG (8 or 16 bit).
struct GrayImage {
  int width = 0;
  int height = 0;
  int bit_depth = 8;
  std::vector<std::uint16_t> values;
};

// Encoders produce deterministic byte streams (fixed compression settings, no
// time chunk), so identical inputs always yield identical files.
Bytes encode_rgb_png(const RasterImage& image);
Bytes encode_gray_png(const GrayImage& image);

/// Accepts 8-bit gray, gray+alpha, RGB and RGBA (alpha dropped, gray
/// replicated). Throws kMalformedPng or kUnsupportedFormat.
RasterImage decode_rgb_png(std::span<const std::uint8_t> bytes);
/// Accepts 8- or 16-bit single-channel PNGs only.
GrayImage decode_gray_png(std::span<const std::uint8_t> bytes);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

RasterImage read_image(const std::filesystem::path& path);
void write_image(const RasterImage& image, const std::filesystem::path& path);

/// Masks are 8-bit grayscale with the raw class index as the pixel value.
Bytes encode_mask_png(const ClassMask& mask);
ClassMask decode_mask_png(std::span<const std::uint8_t> bytes, int num_classes);
void write_mask(const ClassMask& mask, const std::filesystem::path& path);
ClassMask read_mask(const std::filesystem::path& path, int num_classes);

}  // namespace pointgrow
