#include "pointgrow/raster.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pointgrow/error.hpp"

namespace pointgrow {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kDimensionMismatch: return "dimension mismatch";
    case ErrorCode::kOutOfRange: return "out of range";
    case ErrorCode::kMissingFile: return "missing file";
    case ErrorCode::kMalformedPng: return "malformed png";
    case ErrorCode::kUnsupportedFormat: return "unsupported format";
    case ErrorCode::kInvalidClass: return "invalid class";
    case ErrorCode::kIo: return "i/o failure";
    case ErrorCode::kNonFinite: return "non-finite value";
    case ErrorCode::kEmpty: return "empty input";
    case ErrorCode::kDuplicate: return "duplicate";
    case ErrorCode::kBadMagic: return "bad magic";
    case ErrorCode::kBadVersion: return "bad version";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kNotFound: return "not found";
  }
  return "unknown";
}

RasterImage::RasterImage(int w, int h)
    : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {
  validate(*this);
}

RasterImage::RasterImage(int w, int h, std::vector<std::uint8_t> rgb)
    : width(w), height(h), data(std::move(rgb)) {
  validate(*this);
}

std::array<std::uint8_t, 3> RasterImage::at(int x, int y) const {
  const std::size_t i = 3 * (static_cast<std::size_t>(y) * width + x);
  return {data[i], data[i + 1], data[i + 2]};
}

void RasterImage::set(int x, int y, std::array<std::uint8_t, 3> rgb) {
  const std::size_t i = 3 * (static_cast<std::size_t>(y) * width + x);
  data[i] = rgb[0];
  data[i + 1] = rgb[1];
  data[i + 2] = rgb[2];
}

ClassMask::ClassMask(int w, int h, int c, std::uint8_t fill)
    : width(w), height(h), num_classes(c),
      classes(static_cast<std::size_t>(w) * h, fill) {
  validate(*this);
}

void validate(const RasterImage& image) {
  if (image.width < 1 || image.height < 1) {
    fail(ErrorCode::kInvalidArgument, "image dimensions must be positive");
  }
  if (image.data.size() != image.pixel_count() * 3) {
    fail(ErrorCode::kInvalidArgument, "image buffer size does not match width*height*3");
  }
}

void validate(const ClassMask& mask) {
  if (mask.width < 1 || mask.height < 1) {
    fail(ErrorCode::kInvalidArgument, "mask dimensions must be positive");
  }
  if (mask.num_classes < 1 || mask.num_classes > 256) {
    fail(ErrorCode::kInvalidArgument, "class count must be in [1, 256]");
  }
  if (mask.classes.size() != mask.pixel_count()) {
    fail(ErrorCode::kInvalidArgument, "mask buffer size does not match width*height");
  }
  for (std::uint8_t c : mask.classes) {
    if (c >= mask.num_classes) {
      fail(ErrorCode::kInvalidClass,
           "class " + std::to_string(c) + " >= " + std::to_string(mask.num_classes));
    }
  }
}

EdgeMap sobel_edges(const RasterImage& image) {
  validate(image);
  const int w = image.width;
  const int h = image.height;
  std::vector<double> luma(image.pixel_count());
  for (std::size_t i = 0; i < luma.size(); ++i) {
    luma[i] = 0.299 * image.data[3 * i] + 0.587 * image.data[3 * i + 1] +
              0.114 * image.data[3 * i + 2];
  }
  auto lum = [&](int x, int y) {
    x = std::clamp(x, 0, w - 1);
    y = std::clamp(y, 0, h - 1);
    return luma[static_cast<std::size_t>(y) * w + x];
  };

  EdgeMap out{w, h, std::vector<double>(image.pixel_count(), 0.0)};
  double peak = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = (lum(x + 1, y - 1) + 2 * lum(x + 1, y) + lum(x + 1, y + 1)) -
                        (lum(x - 1, y - 1) + 2 * lum(x - 1, y) + lum(x - 1, y + 1));
      const double gy = (lum(x - 1, y + 1) + 2 * lum(x, y + 1) + lum(x + 1, y + 1)) -
                        (lum(x - 1, y - 1) + 2 * lum(x, y - 1) + lum(x + 1, y - 1));
      const double g = std::hypot(gx, gy);
      out.magnitude[static_cast<std::size_t>(y) * w + x] = g;
      peak = std::max(peak, g);
    }
  }
  if (peak == 0.0) return out;
  for (double& g : out.magnitude) g /= peak;
  return out;
}

}  // namespace pointgrow
