#include <doctest.h>

#include <algorithm>
#include <set>

#include "pointgrow/manifest.hpp"
#include "pointgrow/png_io.hpp"
#include "pointgrow/synthetic.hpp"
#include "test_util.hpp"

using namespace pointgrow;
using testutil::error_of;

TEST_SUITE("raster") {

TEST_CASE("rgb png round trip is bitwise identical") {
  testutil::TempDir dir("raster");
  std::mt19937_64 rng(3);
  for (auto [w, h] : {std::pair{1, 1}, {7, 3}, {64, 64}}) {
    const RasterImage img = testutil::random_image(w, h, rng);
    write_image(img, dir / "img.png");
    CHECK(read_image(dir / "img.png") == img);
  }
}

TEST_CASE("1x1 white png decodes to one white pixel") {
  RasterImage white(1, 1, {255, 255, 255});
  const RasterImage back = decode_rgb_png(encode_rgb_png(white));
  CHECK(back.width == 1);
  CHECK(back.height == 1);
  CHECK(back.data == std::vector<std::uint8_t>{255, 255, 255});
}

TEST_CASE("grayscale png expands to rgb") {
  const Bytes png = encode_gray_png(GrayImage{2, 1, 8, {10, 200}});
  const RasterImage img = decode_rgb_png(png);
  CHECK(img.data == std::vector<std::uint8_t>{10, 10, 10, 200, 200, 200});
}

TEST_CASE("png error paths are distinct") {
  testutil::TempDir dir("raster");
  Bytes png = encode_rgb_png(RasterImage(8, 8));
  const Bytes truncated(png.begin(), png.begin() + static_cast<long>(png.size() / 2));
  CHECK(error_of([&] { decode_rgb_png(truncated); }) == ErrorCode::kMalformedPng);
  CHECK(error_of([&] { decode_rgb_png(Bytes{1, 2, 3}); }) == ErrorCode::kMalformedPng);
  CHECK(error_of([&] { read_image(dir / "missing.png"); }) == ErrorCode::kMissingFile);
  const Bytes deep = encode_gray_png(GrayImage{2, 2, 16, {0, 1000, 65535, 7}});
  CHECK(error_of([&] { decode_rgb_png(deep); }) == ErrorCode::kUnsupportedFormat);
}

TEST_CASE("16-bit gray round trip") {
  const GrayImage g{3, 2, 16, {0, 1, 256, 4097, 65535, 12}};
  const GrayImage back = decode_gray_png(encode_gray_png(g));
  CHECK(back.bit_depth == 16);
  CHECK(back.values == g.values);
}

TEST_CASE("mask png stores raw class indices") {
  testutil::TempDir dir("mask");
  ClassMask m(2, 2, 5);
  m.classes = {0, 1, 2, 4};
  write_mask(m, dir / "m.png");
  const GrayImage gray = decode_gray_png(read_file(dir / "m.png"));
  CHECK(gray.bit_depth == 8);
  CHECK(gray.values == std::vector<std::uint16_t>{0, 1, 2, 4});
  CHECK(read_mask(dir / "m.png", 5) == m);

  const ClassMask zeros(9, 4, 5);
  write_mask(zeros, dir / "z.png");
  CHECK(read_mask(dir / "z.png", 5) == zeros);
}

TEST_CASE("mask errors") {
  const Bytes five = encode_gray_png(GrayImage{1, 1, 8, {5}});
  CHECK(error_of([&] { decode_mask_png(five, 5); }) == ErrorCode::kInvalidClass);
  CHECK(decode_mask_png(five, 6).classes == std::vector<std::uint8_t>{5});
  ClassMask wide(1, 1, 5);
  wide.num_classes = 300;
  CHECK(error_of([&] { encode_mask_png(wide); }) == ErrorCode::kOutOfRange);
}

TEST_CASE("synthetic scenes are deterministic in the seed") {
  SyntheticSceneSpec spec;
  const auto a = gen_synthetic_scene(spec, 11);
  const auto b = gen_synthetic_scene(spec, 11);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
  CHECK_FALSE(gen_synthetic_scene(spec, 12).first == a.first);
}

TEST_CASE("zero shapes give an all-background mask") {
  SyntheticSceneSpec spec;
  spec.min_shapes = spec.max_shapes = 0;
  const auto [img, mask] = gen_synthetic_scene(spec, 5);
  CHECK(std::all_of(mask.classes.begin(), mask.classes.end(), [](auto c) { return c == 0; }));
}

TEST_CASE("noise-free rectangle is painted with the exact base color") {
  SyntheticSceneSpec spec;
  spec.width = 20;
  spec.height = 10;
  spec.noise_sigma = 0.0;
  const Shape rect{ShapeKind::kRectangle, 3, 4, 2, 9, 7};
  const auto [img, mask] = rasterize_scene(spec, {rect}, 0);
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 20; ++x) {
      const bool inside = x >= 4 && x < 9 && y >= 2 && y < 7;
      CHECK(mask.at(x, y) == (inside ? 3 : 0));
      CHECK(img.at(x, y) == kClassPalette[inside ? 3 : 0]);
    }
  }
}

TEST_CASE("mask equals the topmost covering shape") {
  SyntheticSceneSpec spec;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto shapes = layout_shapes(spec, seed);
    const auto [img, mask] = gen_synthetic_scene(spec, seed);
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        int expected = 0;
        for (const Shape& s : shapes) {
          if (s.covers(x, y)) expected = s.class_id;
        }
        REQUIRE(mask.at(x, y) == expected);
      }
    }
  }
}

TEST_CASE("sobel on constant and degenerate images is zero") {
  RasterImage flat(5, 4);
  std::fill(flat.data.begin(), flat.data.end(), 90);
  const EdgeMap e = sobel_edges(flat);
  CHECK(std::all_of(e.magnitude.begin(), e.magnitude.end(), [](double v) { return v == 0.0; }));
  CHECK(sobel_edges(RasterImage(1, 1, {1, 2, 3})).magnitude == std::vector<double>{0.0});
}

TEST_CASE("sobel vertical step peaks on the two columns beside the step") {
  // Replicated borders: gx = 4 * 255 on columns 2 and 3, zero elsewhere; gy = 0.
  RasterImage step(6, 4);
  for (int y = 0; y < 4; ++y) {
    for (int x = 3; x < 6; ++x) step.set(x, y, {255, 255, 255});
  }
  const EdgeMap e = sobel_edges(step);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 6; ++x) {
      CHECK(e.magnitude[static_cast<std::size_t>(y * 6 + x)] ==
            doctest::Approx(x == 2 || x == 3 ? 1.0 : 0.0));
    }
  }
}

TEST_CASE("sobel range and shift invariance") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    RasterImage img = testutil::random_image(9, 7, rng, 100);
    const EdgeMap a = sobel_edges(img);
    for (double v : a.magnitude) CHECK((v >= 0.0 && v <= 1.0));
    for (auto& v : img.data) v = static_cast<std::uint8_t>(v + 40);
    const EdgeMap b = sobel_edges(img);
    for (std::size_t i = 0; i < a.magnitude.size(); ++i) {
      CHECK(b.magnitude[i] == doctest::Approx(a.magnitude[i]).epsilon(1e-12));
    }
  }
}

std::vector<std::pair<std::string, std::string>> items(int n) {
  std::vector<std::pair<std::string, std::string>> out;
  for (int i = 0; i < n; ++i) out.emplace_back("i" + std::to_string(i), "m" + std::to_string(i));
  return out;
}

TEST_CASE("split proportions") {
  const auto ten = split_manifest(items(10), 1);
  CHECK(ten.split(Split::kTrain).size() == 6);
  CHECK(ten.split(Split::kVal).size() == 2);
  CHECK(ten.split(Split::kTest).size() == 2);
  const auto one = split_manifest(items(1), 1);
  CHECK(one.split(Split::kTrain).size() == 1);
  CHECK(one.split(Split::kVal).empty());
  for (int n = 1; n < 40; ++n) {
    const auto m = split_manifest(items(n), 4);
    CHECK(std::abs(double(m.split(Split::kTrain).size()) - 0.6 * n) <= 1.0);
    CHECK(std::abs(double(m.split(Split::kVal).size()) - 0.2 * n) <= 1.0);
    CHECK(std::abs(double(m.split(Split::kTest).size()) - 0.2 * n) <= 1.0);
    std::set<std::string> seen;
    for (const auto& e : m.entries) seen.insert(e.image);
    CHECK(seen.size() == static_cast<std::size_t>(n));
  }
}

TEST_CASE("split is deterministic and validated") {
  CHECK(split_manifest(items(17), 5) == split_manifest(items(17), 5));
  CHECK(error_of([] { split_manifest({}, 0); }) == ErrorCode::kEmpty);
  auto dup = items(3);
  dup.push_back(dup.front());
  CHECK(error_of([&] { split_manifest(dup, 0); }) == ErrorCode::kDuplicate);
}

TEST_CASE("manifest json round trip") {
  testutil::TempDir dir("manifest");
  const DatasetManifest m = split_manifest(items(7), 21);
  save_manifest(m, dir / "manifest.json");
  CHECK(load_manifest(dir / "manifest.json") == m);
  const std::string text = manifest_to_json(m);
  CHECK(text.find("\"split\"") != std::string::npos);
  CHECK(text.find("\"seed\": 21") != std::string::npos);
}

}  // TEST_SUITE
