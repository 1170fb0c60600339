#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "pointgrow/error.hpp"
#include "pointgrow/raster.hpp"

namespace testutil {

// Scratch directory removed on scope exit.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    path = std::filesystem::temp_directory_path() /
           ("pointgrow-" + tag + "-" + std::to_string(rng()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

inline pointgrow::RasterImage random_image(int w, int h, std::mt19937_64& rng, int levels = 256) {
  pointgrow::RasterImage img(w, h);
  std::uniform_int_distribution<int> d(0, levels - 1);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(d(rng) * (255 / std::max(1, levels - 1)));
  return img;
}

inline pointgrow::ClassMask random_mask(int w, int h, int c, std::mt19937_64& rng) {
  pointgrow::ClassMask m(w, h, c);
  std::uniform_int_distribution<int> d(0, c - 1);
  for (auto& v : m.classes) v = static_cast<std::uint8_t>(d(rng));
  return m;
}

template <class F>
pointgrow::ErrorCode error_of(F&& f) {
  try {
    f();
  } catch (const pointgrow::Error& e) {
    return e.code();
  }
  throw std::runtime_error("expected a pointgrow::Error");
}

}  // namespace testutil
