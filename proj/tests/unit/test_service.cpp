#include <doctest.h>

#include <set>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "pointgrow/png_io.hpp"
#include "pointgrow/service.hpp"
#include "pointgrow/weak_label.hpp"
#include "superpixel_oracle.hpp"
#include "test_util.hpp"

using namespace pointgrow;
using json = nlohmann::json;

namespace {

Bytes base64_decode(const std::string& text) {
  const std::string alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  Bytes out;
  std::uint32_t acc = 0;
  int bits = 0;
  for (char ch : text) {
    if (ch == '=') break;
    acc = acc << 6 | static_cast<std::uint32_t>(alphabet.find(ch));
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>(acc >> bits));
    }
  }
  return out;
}

// Pixels whose right or lower neighbour lies in another region, as maximal horizontal runs.
std::vector<std::array<int, 3>> boundary_oracle(const SuperpixelMap& m) {
  std::vector<std::array<int, 3>> runs;
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      const bool edge = (x + 1 < m.width && m.at(x + 1, y) != m.at(x, y)) ||
                        (y + 1 < m.height && m.at(x, y + 1) != m.at(x, y));
      if (!edge) continue;
      if (!runs.empty() && runs.back()[0] == y && runs.back()[1] + runs.back()[2] == x) {
        ++runs.back()[2];
      } else {
        runs.push_back({y, x, 1});
      }
    }
  }
  return runs;
}

struct Fixture {
  std::mt19937_64 rng{21};
  RasterImage image = gen_synthetic_scene(SyntheticSceneSpec{}, 2).first;
  Bytes png = encode_rgb_png(image);
  AnnotationService service;
  std::string id;

  explicit Fixture(ServiceOptions options = {}) : service(std::move(options)) {
    const ServiceReply r = service.upload(png);
    REQUIRE(r.status == 201);
    id = json::parse(r.body).at("image_id").get<std::string>();
  }
  json ok(const ServiceReply& r, int status = 200) {
    REQUIRE(r.status == status);
    return json::parse(r.body);
  }
};

std::string point(int x, int y, int c) { return json{{"x", x}, {"y", y}, {"class_id", c}}.dump(); }

}  // namespace

TEST_SUITE("service") {

TEST_CASE("base64 test vectors") {
  CHECK(base64_encode(std::string()) == "");
  CHECK(base64_encode(std::string("f")) == "Zg==");
  CHECK(base64_encode(std::string("fo")) == "Zm8=");
  CHECK(base64_encode(std::string("foo")) == "Zm9v");
  CHECK(base64_encode(std::string("foob")) == "Zm9vYg==");
  CHECK(base64_encode(std::string("foobar")) == "Zm9vYmFy");
}

TEST_CASE("upload validation") {
  ServiceOptions o;
  o.max_side = 8;
  AnnotationService s(o);
  const ServiceReply good = s.upload(encode_rgb_png(RasterImage(8, 3)));
  CHECK(good.status == 201);
  const json doc = json::parse(good.body);
  CHECK(doc["width"] == 8);
  CHECK(doc["height"] == 3);
  const std::string id = doc["image_id"];
  CHECK(id.size() == 16);
  CHECK(id.find_first_not_of("0123456789abcdef") == std::string::npos);

  CHECK(s.upload(encode_rgb_png(RasterImage(9, 3))).status == 413);
  CHECK(s.upload(encode_rgb_png(RasterImage(2, 9))).status == 413);
  CHECK(s.upload(Bytes{1, 2, 3}).status == 400);
  const Bytes png = encode_rgb_png(RasterImage(4, 4));
  CHECK(s.upload(Bytes(png.begin(), png.begin() + 40)).status == 400);
  const ServiceReply again = s.upload(encode_rgb_png(RasterImage(8, 3)));
  CHECK(json::parse(again.body)["image_id"] != id);
  CHECK(s.image_info(id).status == 200);
  CHECK(s.image_info("0123").status == 404);
}

TEST_CASE("superpixel replies") {
  Fixture f;
  const json one = f.ok(f.service.superpixels(f.id, "1", ""));
  CHECK(one["boundaries"].empty());
  const SuperpixelMap single = decode_superpixel_png(base64_decode(one["map"]));
  CHECK(std::all_of(single.labels.begin(), single.labels.end(), [](auto l) { return l == 0; }));

  for (const char* edge : {"false", "true"}) {
    const ServiceReply first = f.service.superpixels(f.id, "60", edge);
    const ServiceReply second = f.service.superpixels(f.id, "60", edge);
    CHECK(first.body == second.body);
    const json doc = json::parse(first.body);
    const SuperpixelMap map = decode_superpixel_png(base64_decode(doc["map"]));
    CHECK(oracle::structural_violations(map, 60) == 0);
    SuperpixelConfig cfg;
    cfg.edge = std::string(edge) == "true";
    CHECK(map == extract_k(build_hierarchy(f.image, cfg), 60, f.image.width, f.image.height));
    std::vector<std::array<int, 3>> runs;
    for (const auto& r : doc["boundaries"]) runs.push_back({r[0], r[1], r[2]});
    CHECK(runs == boundary_oracle(map));
  }
  const json fallback = f.ok(f.service.superpixels(f.id, "", ""));
  CHECK(fallback["k"] == SuperpixelConfig{}.k);

  CHECK(f.service.superpixels(f.id, "0", "").status == 422);
  CHECK(f.service.superpixels(f.id, "abc", "").status == 422);
  CHECK(f.service.superpixels(f.id, "5000", "").status == 422);
  CHECK(f.service.superpixels(f.id, "5", "maybe").status == 422);
  CHECK(f.service.superpixels("ffff", "5", "").status == 404);
  CHECK(f.service.hierarchy_builds(f.id, false) == 1);
  CHECK(f.service.hierarchy_builds(f.id, true) == 1);
}

TEST_CASE("point editing") {
  Fixture f;
  const std::string empty = f.service.list_points(f.id).body;
  CHECK(json::parse(empty)["points"].empty());
  const json added = f.ok(f.service.add_point(f.id, point(3, 4, 2)));
  REQUIRE(added["points"].size() == 1);
  CHECK(added["points"][0]["x"] == 3);
  CHECK(added["points"][0]["class_id"] == 2);
  const std::string one = f.service.list_points(f.id).body;
  f.ok(f.service.add_point(f.id, point(10, 11, 1)));
  CHECK(f.ok(f.service.delete_point(f.id, "1")).dump() == json::parse(one).dump());
  CHECK(f.ok(f.service.delete_point(f.id, "0")).dump() == json::parse(empty).dump());

  f.ok(f.service.add_point(f.id, point(3, 4, 2)));
  CHECK(f.service.add_point(f.id, point(3, 4, 1)).status == 422);
  CHECK(f.service.add_point(f.id, point(64, 0, 1)).status == 422);
  CHECK(f.service.add_point(f.id, point(0, -1, 1)).status == 422);
  CHECK(f.service.add_point(f.id, point(0, 0, 5)).status == 422);
  CHECK(f.service.add_point(f.id, "{not json").status == 400);
  CHECK(f.service.add_point(f.id, R"({"x": 1})").status == 400);
  CHECK(f.service.delete_point(f.id, "7").status == 404);
  CHECK(f.service.delete_point(f.id, "-1").status == 404);
  CHECK(f.service.delete_point(f.id, "one").status == 422);
  CHECK(f.service.add_point("abcd", point(1, 1, 1)).status == 404);
  CHECK(json::parse(f.service.image_info(f.id).body)["point_count"] == 1);
}

TEST_CASE("pseudomask equals direct propagation") {
  Fixture f;
  const json none = f.ok(f.service.pseudomask(f.id, "40", "", ""));
  CHECK(none["coverage"] == 0.0);

  const ClassMask gt = gen_synthetic_scene(SyntheticSceneSpec{}, 2).second;
  const PointSet ps = sample_points_balanced(gt, 15, 4);
  for (const auto& p : ps.points) f.ok(f.service.add_point(f.id, point(p.x, p.y, p.class_id)));
  const SuperpixelMap sp = extract_k(build_hierarchy(f.image, {}), 40, 64, 64);
  for (const char* policy : {"", "ignore", "supervise"}) {
    const json doc = f.ok(f.service.pseudomask(f.id, "40", "false", policy));
    const PseudoMask pm = propagate(
        ps, sp, {std::string(policy) == "supervise" ? BackgroundPolicy::kSupervise : BackgroundPolicy::kIgnore}, 5);
    CHECK(base64_decode(doc["labels"]) == encode_mask_png(pm.wl));
    CHECK(base64_decode(doc["mask"]) == encode_supervision_png(pm));
    CHECK(doc["coverage"].get<double>() == coverage(pm));
    std::vector<int> counts(5, 0);
    for (const auto& p : ps.points) ++counts[static_cast<std::size_t>(p.class_id)];
    CHECK(doc["per_class_point_counts"].get<std::vector<int>>() == counts);
  }
  CHECK(f.service.pseudomask(f.id, "40", "", "all").status == 422);
}

TEST_CASE("exports and classes") {
  Fixture f;
  const ServiceReply csv = f.service.export_points(f.id);
  CHECK(csv.body == "x,y,class\n");
  CHECK(csv.content_type == "text/csv");
  CHECK(csv.attachment_name == f.id + ".csv");
  f.ok(f.service.add_point(f.id, point(5, 6, 4)));
  CHECK(points_from_csv(f.service.export_points(f.id).body).points ==
        std::vector<PointAnnotation>{{5, 6, 4}});
  const json side = f.ok(f.service.export_sidecar(f.id));
  CHECK(side.is_object());

  const json classes = f.ok(f.service.classes());
  REQUIRE(classes["classes"].size() == 5);
  CHECK(classes["classes"][0]["name"] == "background");
  CHECK(classes["classes"][3]["name"] == "water");
  CHECK(f.service.export_points("0000").status == 404);
}

TEST_CASE("concurrent requests build each hierarchy once") {
  Fixture f;
  std::vector<std::thread> pool;
  std::vector<std::string> bodies(24);
  for (int t = 0; t < 24; ++t) {
    pool.emplace_back([&, t] {
      const std::string k = std::to_string(10 + (t % 3) * 20);
      bodies[static_cast<std::size_t>(t)] = f.service.superpixels(f.id, k, t % 2 ? "true" : "false").body;
    });
  }
  for (auto& th : pool) th.join();
  CHECK(f.service.hierarchy_builds(f.id, false) == 1);
  CHECK(f.service.hierarchy_builds(f.id, true) == 1);
  // Same (k, edge) always yields the same bytes.
  for (int t = 6; t < 24; ++t) {
    CHECK(bodies[static_cast<std::size_t>(t)] == bodies[static_cast<std::size_t>(t % 6)]);
  }
  CHECK(f.service.hierarchy_builds("nope", false) == 0);
}

TEST_CASE("persistence reloads uploads and points") {
  testutil::TempDir dir("persist");
  ServiceOptions o;
  o.persist_dir = dir.path;
  std::string id;
  {
    Fixture f(o);
    id = f.id;
    f.ok(f.service.add_point(f.id, point(1, 2, 3)));
  }
  AnnotationService again(o);
  CHECK(json::parse(again.list_points(id).body)["points"].size() == 1);
  CHECK(json::parse(again.image_info(id).body)["width"] == 64);
}

TEST_CASE("http transport") {
  Fixture f;
  const int port = f.service.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::thread server([&] { f.service.listen(); });
  httplib::Client client("127.0.0.1", port);
  client.set_connection_timeout(5);

  auto up = client.Post("/api/images", std::string(f.png.begin(), f.png.end()), "image/png");
  REQUIRE(up);
  CHECK(up->status == 201);
  CHECK(up->get_header_value("Access-Control-Allow-Origin") == "*");
  const std::string id = json::parse(up->body)["image_id"];

  auto sp = client.Get("/api/images/" + id + "/superpixels?k=25&edge=true");
  REQUIRE(sp);
  CHECK(sp->status == 200);
  CHECK(sp->body == f.service.superpixels(id, "25", "true").body);

  auto add = client.Post("/api/images/" + id + "/points", point(2, 2, 1), "application/json");
  REQUIRE(add);
  CHECK(add->status == 200);
  auto del = client.Delete("/api/images/" + id + "/points/0");
  REQUIRE(del);
  CHECK(json::parse(del->body)["points"].empty());

  auto csv = client.Get("/api/images/" + id + "/export");
  REQUIRE(csv);
  CHECK(csv->body == "x,y,class\n");
  CHECK(csv->get_header_value("Content-Disposition").find(id + ".csv") != std::string::npos);

  auto pm = client.Get("/api/images/" + id + "/pseudomask?k=25");
  REQUIRE(pm);
  CHECK(pm->status == 200);
  auto missing = client.Get("/api/images/0000000000000000");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  auto bad = client.Post("/api/images", std::string("garbage"), "image/png");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  auto pre = client.Options("/api/images");
  REQUIRE(pre);
  CHECK(pre->status == 204);
  CHECK(pre->get_header_value("Access-Control-Allow-Methods").find("DELETE") != std::string::npos);

  f.service.stop();
  server.join();
}

}  // TEST_SUITE
