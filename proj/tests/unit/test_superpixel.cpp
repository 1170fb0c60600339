#include <doctest.h>

#include "pointgrow/binary_io.hpp"
#include "pointgrow/synthetic.hpp"
#include "superpixel_oracle.hpp"
#include "test_util.hpp"

using namespace pointgrow;
using testutil::error_of;

TEST_SUITE("superpixel") {

TEST_CASE("grid graph dissimilarities") {
  SuperpixelConfig cfg;
  RasterImage flat(4, 3);
  std::fill(flat.data.begin(), flat.data.end(), 77);
  const AffinityGraph g = build_grid_graph(flat, std::nullopt, cfg);
  CHECK(g.nodes.size() == 12);
  CHECK(g.edges.size() == 3 * 3 + 4 * 2);
  for (const auto& e : g.edges) CHECK(e.score == 0.0);

  const RasterImage pair(2, 1, {0, 0, 0, 3, 4, 0});
  const AffinityGraph plain = build_grid_graph(pair, std::nullopt, cfg);
  REQUIRE(plain.edges.size() == 1);
  CHECK(plain.edges[0].score == doctest::Approx(5.0));

  cfg.edge = true;
  const EdgeMap ones{2, 1, {1.0, 1.0}};
  const AffinityGraph edged = build_grid_graph(pair, ones, cfg);
  CHECK(edged.edges[0].score == doctest::Approx(10.0));
  CHECK(error_of([&] { build_grid_graph(pair, EdgeMap{3, 1, {0, 0, 0}}, cfg); }) ==
        ErrorCode::kDimensionMismatch);
}

TEST_CASE("agglomerate small cases") {
  SuperpixelConfig cfg;
  const RasterImage one(1, 1, {5, 5, 5});
  CHECK(build_hierarchy(one, cfg).merges.empty());

  const RasterImage flat(2, 1, {9, 9, 9, 9, 9, 9});
  const MergeHierarchy h = build_hierarchy(flat, cfg);
  REQUIRE(h.merges.size() == 1);
  CHECK(h.merges[0].score == 0.0);

  CHECK(error_of([&] { agglomerate(AffinityGraph{}, cfg); }) == ErrorCode::kEmpty);
}

TEST_CASE("2x2 black/white columns merge within columns first") {
  // Pixels 0 and 2 are black, 1 and 3 white: the zero-cost pairs (0,2) and
  // (1,3) precede the cross-column merge.
  const RasterImage img(2, 2, {0, 0, 0, 255, 255, 255, 0, 0, 0, 255, 255, 255});
  SuperpixelConfig cfg;
  cfg.beta = 0.5;
  const MergeHierarchy h = build_hierarchy(img, cfg);
  REQUIRE(h.merges.size() == 3);
  CHECK(h.merges[0] == Merge{0, 2, 4, 0.0});
  CHECK(h.merges[1] == Merge{1, 3, 5, 0.0});
  CHECK(h.merges[2].new_region == 6);
  const SuperpixelMap two = extract_k(h, 2, 2, 2);
  CHECK(two.labels == std::vector<std::uint32_t>{0, 1, 0, 1});
}

TEST_CASE("agglomerate matches the exhaustive greedy oracle") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const int w = 2 + trial % 5, h = 2 + (trial / 5) % 4;
    const RasterImage img = testutil::random_image(w, h, rng, trial % 3 == 0 ? 3 : 256);
    SuperpixelConfig cfg;
    cfg.beta = (trial % 4) * 0.25;
    cfg.sigma = 7.0;
    const MergeHierarchy fast = build_hierarchy(img, cfg);
    const MergeHierarchy slow = oracle::greedy(img, cfg.beta, cfg.sigma);
    REQUIRE(fast.merges.size() == slow.merges.size());
    for (std::size_t i = 0; i < fast.merges.size(); ++i) {
      CHECK(fast.merges[i].region_a == slow.merges[i].region_a);
      CHECK(fast.merges[i].region_b == slow.merges[i].region_b);
      CHECK(fast.merges[i].score == doctest::Approx(slow.merges[i].score).epsilon(1e-12));
    }
  }
}

TEST_CASE("recorded scores equal brute-force costs with and without edges") {
  std::mt19937_64 rng(23);
  for (bool edge : {false, true}) {
    const RasterImage img = testutil::random_image(8, 8, rng);
    SuperpixelConfig cfg;
    cfg.edge = edge;
    const MergeHierarchy h = build_hierarchy(img, cfg);
    const std::optional<EdgeMap> edges =
        edge ? std::optional<EdgeMap>(sobel_edges(img)) : std::nullopt;
    for (std::size_t i = 0; i < h.merges.size(); ++i) {
      const auto owner = oracle::owners_after(h, i);
      const double cost = oracle::brute_cost(img, owner, h.merges[i].region_a,
                                             h.merges[i].region_b, cfg.beta, edges);
      CHECK(h.merges[i].score == doctest::Approx(cost / cfg.sigma).epsilon(1e-12));
    }
  }
}

TEST_CASE("extract_k edge cases") {
  std::mt19937_64 rng(2);
  const RasterImage img = testutil::random_image(5, 4, rng);
  const MergeHierarchy h = build_hierarchy(img, {});
  const SuperpixelMap all = extract_k(h, 20, 5, 4);
  for (std::uint32_t i = 0; i < 20; ++i) CHECK(all.labels[i] == i);
  const SuperpixelMap one = extract_k(h, 1, 5, 4);
  CHECK(std::all_of(one.labels.begin(), one.labels.end(), [](auto l) { return l == 0; }));
  CHECK(error_of([&] { extract_k(h, 0, 5, 4); }) == ErrorCode::kOutOfRange);
  CHECK(error_of([&] { extract_k(h, 21, 5, 4); }) == ErrorCode::kOutOfRange);
  CHECK(error_of([&] { extract_k(h, 3, 4, 4); }) == ErrorCode::kDimensionMismatch);
}

TEST_CASE("partition, connectivity, exact k and nesting on synthetic scenes") {
  SyntheticSceneSpec spec;
  spec.width = spec.height = 32;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    for (bool edge : {false, true}) {
      SuperpixelConfig cfg;
      cfg.edge = edge;
      const RasterImage img = gen_synthetic_scene(spec, seed).first;
      const MergeHierarchy h = build_hierarchy(img, cfg);
      SuperpixelMap previous = extract_k(h, 1, 32, 32);
      for (int k : {3, 16, 50, 100, 400}) {
        const SuperpixelMap map = extract_k(h, k, 32, 32);
        CHECK(oracle::structural_violations(map, k) == 0);
        CHECK(regions_connected(map));
        CHECK(oracle::nesting_violations(map, previous) == 0);
        previous = map;
      }
    }
  }
}

TEST_CASE("regions_connected and validate detect broken maps") {
  SuperpixelMap split{3, 1, 2, {0, 1, 0}};
  CHECK_FALSE(regions_connected(split));
  SuperpixelMap missing{2, 1, 3, {0, 1}};
  CHECK(error_of([&] { validate(missing); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("hierarchy is deterministic") {
  std::mt19937_64 rng(4);
  const RasterImage img = testutil::random_image(16, 16, rng);
  SuperpixelConfig cfg;
  cfg.edge = true;
  CHECK(build_hierarchy(img, cfg) == build_hierarchy(img, cfg));
}

TEST_CASE("slic contracts") {
  SuperpixelConfig cfg;
  cfg.backend = SuperpixelBackend::kSlic;
  std::mt19937_64 rng(8);
  const RasterImage noisy = testutil::random_image(20, 20, rng);
  cfg.k = 1;
  const SuperpixelMap single = slic(noisy, cfg);
  CHECK(single.k == 1);
  CHECK(oracle::structural_violations(single, 1) == 0);

  RasterImage flat(64, 64);
  std::fill(flat.data.begin(), flat.data.end(), 128);
  cfg.k = 4;
  const SuperpixelMap four = slic(flat, cfg);
  CHECK(four.k == 4);
  std::vector<int> sizes(4, 0);
  for (auto l : four.labels) ++sizes[l];
  for (int s : sizes) {
    CHECK(s >= 1024 / 2);
    CHECK(s <= 1024 * 2);
  }

  SyntheticSceneSpec spec;
  for (int k : {10, 50, 100}) {
    cfg.k = k;
    const SuperpixelMap map = slic(gen_synthetic_scene(spec, 3).first, cfg);
    CHECK(oracle::structural_violations(map, map.k) == 0);
  }
  cfg.k = 401;
  CHECK(error_of([&] { slic(noisy, cfg); }) == ErrorCode::kOutOfRange);
}

TEST_CASE("config validation") {
  SuperpixelConfig cfg;
  cfg.beta = 1.5;
  CHECK(error_of([&] { validate(cfg); }) == ErrorCode::kInvalidArgument);
  cfg = {};
  cfg.sigma = 0.0;
  CHECK(error_of([&] { validate(cfg); }) == ErrorCode::kInvalidArgument);
  cfg = {};
  cfg.k = 0;
  CHECK(error_of([&] { validate(cfg); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("boundary runs") {
  const SuperpixelMap one{3, 2, 1, {0, 0, 0, 0, 0, 0}};
  CHECK(boundary_runs(one).empty());
  // 0 0 1
  // 0 0 1   -> pixel (1,0),(1,1) touch region 1 on the right; (0,0),(1,0) nothing below.
  const SuperpixelMap two{3, 2, 2, {0, 0, 1, 0, 0, 1}};
  const auto runs = boundary_runs(two);
  REQUIRE(runs.size() == 2);
  CHECK(runs[0] == BoundaryRun{0, 1, 1});
  CHECK(runs[1] == BoundaryRun{1, 1, 1});
}

TEST_CASE("superpixel png round trip and limit") {
  std::mt19937_64 rng(6);
  const RasterImage img = testutil::random_image(12, 9, rng);
  const SuperpixelMap map = extract_k(build_hierarchy(img, {}), 30, 12, 9);
  CHECK(decode_superpixel_png(encode_superpixel_png(map)) == map);
  const GrayImage gray = decode_gray_png(encode_superpixel_png(map));
  CHECK(gray.bit_depth == 16);

  SuperpixelMap huge{70000, 1, 70000, {}};
  huge.labels.resize(70000);
  for (std::uint32_t i = 0; i < 70000; ++i) huge.labels[i] = i;
  CHECK(error_of([&] { encode_superpixel_png(huge); }) == ErrorCode::kOutOfRange);
}

TEST_CASE("hierarchy file format") {
  std::mt19937_64 rng(1);
  const MergeHierarchy h = build_hierarchy(testutil::random_image(6, 5, rng), {});
  const Bytes bytes = serialize_hierarchy(h);
  CHECK(bytes.size() == 4 + 2 + 4 + 29 * (12 + 8));
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "SPHX");
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 0);
  CHECK(bytes[6] == 30);  // little-endian pixel count
  CHECK(deserialize_hierarchy(bytes) == h);

  Bytes bad = bytes;
  bad[0] = 'X';
  CHECK(error_of([&] { deserialize_hierarchy(bad); }) == ErrorCode::kBadMagic);
  bad = bytes;
  bad[4] = 2;
  CHECK(error_of([&] { deserialize_hierarchy(bad); }) == ErrorCode::kBadVersion);
  const Bytes cut(bytes.begin(), bytes.end() - 3);
  CHECK(error_of([&] { deserialize_hierarchy(cut); }) == ErrorCode::kTruncated);
}

}  // TEST_SUITE
