#include "pointgrow/png_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "pointgrow/error.hpp"

namespace pointgrow {
namespace {

struct ReadCursor {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t offset;
};

void read_from_cursor(png_structp png, png_bytep out, png_size_t length) {
  auto* cursor = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cursor->offset + length > cursor->size) {
    png_error(png, "unexpected end of data");
  }
  std::memcpy(out, cursor->data + cursor->offset, length);
  cursor->offset += length;
}

void write_to_bytes(png_structp png, png_bytep in, png_size_t length) {
  auto* out = static_cast<Bytes*>(png_get_io_ptr(png));
  out->insert(out->end(), in, in + length);
}

void flush_noop(png_structp) {}

void silent_warning(png_structp, png_const_charp) {}

// The default handler prints to stderr before jumping; callers report errors themselves.
[[noreturn]] void silent_error(png_structp png, png_const_charp) { png_longjmp(png, 1); }

struct Decoded {
  int width = 0;
  int height = 0;
  int bit_depth = 0;
  int color_type = 0;
  int channels = 0;
  std::vector<std::uint8_t> rows;  // tightly packed, big-endian for 16 bit
};

enum class DecodeStatus { kOk, kMalformed, kInterlaceOrPalette };

// Kept free of C++ objects with non-trivial destructors between setjmp and any
// longjmp, so libpng's error path is well defined.
DecodeStatus decode_raw(std::span<const std::uint8_t> bytes, Decoded& out) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    return DecodeStatus::kMalformed;
  }
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, silent_error, silent_warning);
  if (png == nullptr) return DecodeStatus::kMalformed;
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return DecodeStatus::kMalformed;
  }
  ReadCursor cursor{bytes.data(), bytes.size(), 0};
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return DecodeStatus::kMalformed;
  }
  png_set_read_fn(png, &cursor, read_from_cursor);
  png_read_info(png, info);
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.bit_depth = png_get_bit_depth(png, info);
  out.color_type = png_get_color_type(png, info);
  out.channels = png_get_channels(png, info);
  if (out.color_type == PNG_COLOR_TYPE_PALETTE ||
      png_get_interlace_type(png, info) != PNG_INTERLACE_NONE) {
    png_destroy_read_struct(&png, &info, nullptr);
    return DecodeStatus::kInterlaceOrPalette;
  }
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  out.rows.resize(row_bytes * static_cast<std::size_t>(out.height));
  for (int y = 0; y < out.height; ++y) {
    png_read_row(png, out.rows.data() + row_bytes * static_cast<std::size_t>(y), nullptr);
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return DecodeStatus::kOk;
}

Decoded decode_checked(std::span<const std::uint8_t> bytes) {
  Decoded raw;
  switch (decode_raw(bytes, raw)) {
    case DecodeStatus::kOk: break;
    case DecodeStatus::kMalformed: fail(ErrorCode::kMalformedPng, "malformed PNG data");
    case DecodeStatus::kInterlaceOrPalette:
      fail(ErrorCode::kUnsupportedFormat, "palette and interlaced PNGs are not supported");
  }
  if (raw.width < 1 || raw.height < 1) fail(ErrorCode::kMalformedPng, "empty PNG");
  return raw;
}

bool encode_raw(int width, int height, int bit_depth, int color_type,
                const std::uint8_t* rows, std::size_t row_bytes, Bytes& out) {
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, silent_error, silent_warning);
  if (png == nullptr) return false;
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, &out, write_to_bytes, flush_noop);
  png_set_compression_level(png, 6);
  png_set_filter(png, 0, PNG_FILTER_NONE | PNG_FILTER_SUB | PNG_FILTER_UP);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, rows + row_bytes * static_cast<std::size_t>(y));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

}  // namespace

Bytes encode_rgb_png(const RasterImage& image) {
  validate(image);
  Bytes out;
  if (!encode_raw(image.width, image.height, 8, PNG_COLOR_TYPE_RGB, image.data.data(),
                  static_cast<std::size_t>(image.width) * 3, out)) {
    fail(ErrorCode::kIo, "PNG encoding failed");
  }
  return out;
}

Bytes encode_gray_png(const GrayImage& image) {
  if (image.width < 1 || image.height < 1 ||
      image.values.size() != static_cast<std::size_t>(image.width) * image.height) {
    fail(ErrorCode::kInvalidArgument, "gray image buffer does not match its dimensions");
  }
  if (image.bit_depth != 8 && image.bit_depth != 16) {
    fail(ErrorCode::kUnsupportedFormat, "gray PNG bit depth must be 8 or 16");
  }
  const std::size_t bytes_per = image.bit_depth / 8;
  std::vector<std::uint8_t> rows(image.values.size() * bytes_per);
  for (std::size_t i = 0; i < image.values.size(); ++i) {
    const std::uint16_t v = image.values[i];
    if (bytes_per == 1) {
      if (v > 255) fail(ErrorCode::kOutOfRange, "value exceeds 8-bit range");
      rows[i] = static_cast<std::uint8_t>(v);
    } else {
      rows[2 * i] = static_cast<std::uint8_t>(v >> 8);
      rows[2 * i + 1] = static_cast<std::uint8_t>(v & 0xff);
    }
  }
  Bytes out;
  if (!encode_raw(image.width, image.height, image.bit_depth, PNG_COLOR_TYPE_GRAY,
                  rows.data(), static_cast<std::size_t>(image.width) * bytes_per, out)) {
    fail(ErrorCode::kIo, "PNG encoding failed");
  }
  return out;
}

RasterImage decode_rgb_png(std::span<const std::uint8_t> bytes) {
  const Decoded raw = decode_checked(bytes);
  if (raw.bit_depth != 8) {
    fail(ErrorCode::kUnsupportedFormat,
         "unsupported bit depth " + std::to_string(raw.bit_depth) + " (expected 8)");
  }
  RasterImage image(raw.width, raw.height);
  const std::size_t n = image.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* px = raw.rows.data() + i * static_cast<std::size_t>(raw.channels);
    switch (raw.color_type) {
      case PNG_COLOR_TYPE_GRAY:
      case PNG_COLOR_TYPE_GRAY_ALPHA:
        image.data[3 * i] = image.data[3 * i + 1] = image.data[3 * i + 2] = px[0];
        break;
      case PNG_COLOR_TYPE_RGB:
      case PNG_COLOR_TYPE_RGB_ALPHA:
        image.data[3 * i] = px[0];
        image.data[3 * i + 1] = px[1];
        image.data[3 * i + 2] = px[2];
        break;
      default:
        fail(ErrorCode::kUnsupportedFormat, "unsupported PNG color type");
    }
  }
  return image;
}

GrayImage decode_gray_png(std::span<const std::uint8_t> bytes) {
  const Decoded raw = decode_checked(bytes);
  if (raw.color_type != PNG_COLOR_TYPE_GRAY) {
    fail(ErrorCode::kUnsupportedFormat, "expected a single-channel grayscale PNG");
  }
  if (raw.bit_depth != 8 && raw.bit_depth != 16) {
    fail(ErrorCode::kUnsupportedFormat,
         "unsupported bit depth " + std::to_string(raw.bit_depth));
  }
  GrayImage out{raw.width, raw.height, raw.bit_depth,
                std::vector<std::uint16_t>(static_cast<std::size_t>(raw.width) * raw.height)};
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = raw.bit_depth == 8
                        ? raw.rows[i]
                        : static_cast<std::uint16_t>((raw.rows[2 * i] << 8) | raw.rows[2 * i + 1]);
  }
  return out;
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kMissingFile, "cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

RasterImage read_image(const std::filesystem::path& path) {
  return decode_rgb_png(read_file(path));
}

void write_image(const RasterImage& image, const std::filesystem::path& path) {
  write_file(path, encode_rgb_png(image));
}

Bytes encode_mask_png(const ClassMask& mask) {
  if (mask.num_classes > 256) fail(ErrorCode::kOutOfRange, "more than 256 classes");
  validate(mask);
  return encode_gray_png(GrayImage{mask.width, mask.height, 8,
                                   {mask.classes.begin(), mask.classes.end()}});
}

ClassMask decode_mask_png(std::span<const std::uint8_t> bytes, int num_classes) {
  if (num_classes < 1 || num_classes > 256) {
    fail(ErrorCode::kOutOfRange, "class count must be in [1, 256]");
  }
  const GrayImage gray = decode_gray_png(bytes);
  if (gray.bit_depth != 8) fail(ErrorCode::kUnsupportedFormat, "class masks must be 8-bit");
  ClassMask mask(gray.width, gray.height, num_classes);
  for (std::size_t i = 0; i < gray.values.size(); ++i) {
    if (gray.values[i] >= num_classes) {
      fail(ErrorCode::kInvalidClass, "mask value " + std::to_string(gray.values[i]) +
                                         " >= class count " + std::to_string(num_classes));
    }
    mask.classes[i] = static_cast<std::uint8_t>(gray.values[i]);
  }
  return mask;
}

void write_mask(const ClassMask& mask, const std::filesystem::path& path) {
  write_file(path, encode_mask_png(mask));
}

ClassMask read_mask(const std::filesystem::path& path, int num_classes) {
  return decode_mask_png(read_file(path), num_classes);
}

}  // namespace pointgrow
