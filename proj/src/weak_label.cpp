#include "pointgrow/weak_label.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "pointgrow/error.hpp"

namespace pointgrow {

std::string to_string(PointSource source) {
  switch (source) {
    case PointSource::kRandom: return "random";
    case PointSource::kBalanced: return "balanced";
    case PointSource::kManual: return "manual";
  }
  return "manual";
}

PointSource parse_point_source(const std::string& name) {
  if (name == "random") return PointSource::kRandom;
  if (name == "balanced") return PointSource::kBalanced;
  if (name == "manual") return PointSource::kManual;
  fail(ErrorCode::kInvalidArgument, "unknown point source '" + name + "'");
}

std::string to_string(BackgroundPolicy policy) {
  return policy == BackgroundPolicy::kIgnore ? "ignore" : "supervise";
}

BackgroundPolicy parse_background_policy(const std::string& name) {
  if (name == "ignore") return BackgroundPolicy::kIgnore;
  if (name == "supervise") return BackgroundPolicy::kSupervise;
  fail(ErrorCode::kInvalidArgument, "unknown background policy '" + name + "'");
}

namespace {

void check_point(const PointAnnotation& p, int width, int height, int num_classes) {
  if (p.x < 0 || p.y < 0 || p.x >= width || p.y >= height) {
    fail(ErrorCode::kOutOfRange, "point (" + std::to_string(p.x) + ", " +
                                     std::to_string(p.y) + ") lies outside the image");
  }
  if (p.class_id < 0 || p.class_id >= num_classes) {
    fail(ErrorCode::kInvalidClass, "point class " + std::to_string(p.class_id) +
                                       " outside [0, " + std::to_string(num_classes) + ")");
  }
}

std::uint64_t pixel_key(const PointAnnotation& p) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(p.y)) << 32) |
         static_cast<std::uint32_t>(p.x);
}

}  // namespace

void PointSet::add(const PointAnnotation& p, int width, int height, int num_classes) {
  check_point(p, width, height, num_classes);
  for (const PointAnnotation& q : points) {
    if (q.x == p.x && q.y == p.y) {
      fail(ErrorCode::kDuplicate, "a point already exists at this pixel");
    }
  }
  points.push_back(p);
}

void validate(const PointSet& points, int width, int height, int num_classes) {
  std::unordered_set<std::uint64_t> seen;
  for (const PointAnnotation& p : points.points) {
    check_point(p, width, height, num_classes);
    if (!seen.insert(pixel_key(p)).second) {
      fail(ErrorCode::kDuplicate, "two points share a pixel");
    }
  }
}

namespace {

// Draws `count` distinct entries of `pool` (partial Fisher-Yates), in draw order.
std::vector<std::size_t> draw_without_replacement(std::vector<std::size_t> pool,
                                                  std::size_t count, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(count);
  return pool;
}

PointAnnotation point_at(const ClassMask& gt, std::size_t index) {
  const int x = static_cast<int>(index % static_cast<std::size_t>(gt.width));
  const int y = static_cast<int>(index / static_cast<std::size_t>(gt.width));
  return {x, y, gt.classes[index]};
}

}  // namespace

PointSet sample_points_random(const ClassMask& gt, int count, std::uint64_t seed) {
  validate(gt);
  if (count < 0 || static_cast<std::size_t>(count) > gt.pixel_count()) {
    fail(ErrorCode::kOutOfRange, "requested more points than pixels");
  }
  std::vector<std::size_t> pool(gt.pixel_count());
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  PointSet out{{}, PointSource::kRandom, seed};
  for (std::size_t index : draw_without_replacement(std::move(pool), count, rng)) {
    out.points.push_back(point_at(gt, index));
  }
  return out;
}

PointSet sample_points_balanced(const ClassMask& gt, int count, std::uint64_t seed) {
  validate(gt);
  if (count < 0 || static_cast<std::size_t>(count) > gt.pixel_count()) {
    fail(ErrorCode::kOutOfRange, "requested more points than pixels");
  }
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(gt.num_classes));
  for (std::size_t i = 0; i < gt.classes.size(); ++i) by_class[gt.classes[i]].push_back(i);
  std::vector<std::size_t> present;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (!by_class[c].empty()) present.push_back(c);
  }

  const std::size_t total = static_cast<std::size_t>(count);
  const std::size_t s = present.size();
  std::vector<std::size_t> quota(s);
  for (std::size_t i = 0; i < s; ++i) quota[i] = total / s + (i < total % s ? 1 : 0);

  std::size_t shortfall = 0;
  for (std::size_t i = 0; i < s; ++i) {
    const std::size_t capacity = by_class[present[i]].size();
    if (quota[i] > capacity) {
      shortfall += quota[i] - capacity;
      quota[i] = capacity;
    }
  }
  // count <= pixel count guarantees the loop finds room each sweep.
  for (std::size_t i = 0; shortfall > 0; i = (i + 1) % s) {
    if (quota[i] < by_class[present[i]].size()) {
      ++quota[i];
      --shortfall;
    }
  }

  std::mt19937_64 rng(seed);
  PointSet out{{}, PointSource::kBalanced, seed};
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t index : draw_without_replacement(by_class[present[i]], quota[i], rng)) {
      out.points.push_back(point_at(gt, index));
    }
  }
  return out;
}

PseudoMask propagate(const PointSet& points, const SuperpixelMap& sp,
                     const PropagationConfig& config, int num_classes) {
  validate(sp);
  if (num_classes < 1 || num_classes > 256) {
    fail(ErrorCode::kOutOfRange, "class count must be in [1, 256]");
  }
  for (const PointAnnotation& p : points.points) check_point(p, sp.width, sp.height, num_classes);

  const std::size_t k = static_cast<std::size_t>(sp.k);
  const std::size_t c = static_cast<std::size_t>(num_classes);
  std::vector<std::uint32_t> histogram(k * c, 0);
  for (const PointAnnotation& p : points.points) {
    ++histogram[sp.at(p.x, p.y) * c + static_cast<std::size_t>(p.class_id)];
  }

  std::vector<std::uint8_t> region_label(k, 0);
  std::vector<std::uint8_t> region_supervised(
      k, config.background_policy == BackgroundPolicy::kSupervise ? 1 : 0);
  for (std::size_t r = 0; r < k; ++r) {
    const auto first = histogram.begin() + static_cast<std::ptrdiff_t>(r * c);
    const auto best = std::max_element(first, first + static_cast<std::ptrdiff_t>(c));
    if (*best == 0) continue;
    // max_element returns the first maximum, i.e. the smallest class id on ties.
    region_label[r] = static_cast<std::uint8_t>(best - first);
    region_supervised[r] = 1;
  }

  PseudoMask pm{ClassMask(sp.width, sp.height, num_classes),
                std::vector<std::uint8_t>(sp.labels.size(), 0)};
  for (std::size_t i = 0; i < sp.labels.size(); ++i) {
    pm.wl.classes[i] = region_label[sp.labels[i]];
    pm.m[i] = region_supervised[sp.labels[i]];
  }
  return pm;
}

double coverage(const PseudoMask& pm) {
  if (pm.m.empty()) fail(ErrorCode::kEmpty, "empty pseudo-mask");
  const std::size_t labelled = static_cast<std::size_t>(std::count(pm.m.begin(), pm.m.end(), 1));
  return double(labelled) / double(pm.m.size());
}

std::string points_to_csv(const PointSet& points) {
  std::string out = "x,y,class\n";
  for (const PointAnnotation& p : points.points) {
    out += std::to_string(p.x) + "," + std::to_string(p.y) + "," + std::to_string(p.class_id) +
           "\n";
  }
  return out;
}

PointSet points_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::kInvalidArgument, "empty points CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "x,y,class") fail(ErrorCode::kInvalidArgument, "points CSV header must be x,y,class");

  PointSet out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    int values[3];
    const char* cursor = line.data();
    const char* end = line.data() + line.size();
    for (int i = 0; i < 3; ++i) {
      auto [ptr, ec] = std::from_chars(cursor, end, values[i]);
      const bool sep_ok = i < 2 ? (ptr < end && *ptr == ',') : ptr == end;
      if (ec != std::errc{} || !sep_ok) {
        fail(ErrorCode::kInvalidArgument, "malformed points CSV at line " + std::to_string(line_no));
      }
      cursor = ptr + 1;
    }
    out.points.push_back({values[0], values[1], values[2]});
  }
  return out;
}

std::string points_sidecar_json(const PointSet& points) {
  nlohmann::ordered_json doc;
  doc["source"] = to_string(points.source);
  doc["seed"] = points.seed;
  return doc.dump() + "\n";
}

void apply_points_sidecar(const std::string& json_text, PointSet& points) {
  try {
    const auto doc = nlohmann::json::parse(json_text);
    points.source = parse_point_source(doc.at("source").get<std::string>());
    points.seed = doc.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorCode::kInvalidArgument, std::string("malformed points sidecar: ") + ex.what());
  }
}

namespace {

std::span<const std::uint8_t> as_bytes(const std::string& s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

}  // namespace

void save_points(const PointSet& points, const std::filesystem::path& csv_path) {
  write_file(csv_path, as_bytes(points_to_csv(points)));
  std::filesystem::path sidecar = csv_path;
  sidecar.replace_extension(".json");
  write_file(sidecar, as_bytes(points_sidecar_json(points)));
}

PointSet load_points(const std::filesystem::path& csv_path) {
  const Bytes csv = read_file(csv_path);
  PointSet points = points_from_csv(std::string(csv.begin(), csv.end()));
  std::filesystem::path sidecar = csv_path;
  sidecar.replace_extension(".json");
  if (std::filesystem::exists(sidecar)) {
    const Bytes json = read_file(sidecar);
    apply_points_sidecar(std::string(json.begin(), json.end()), points);
  }
  return points;
}

Bytes encode_supervision_png(const PseudoMask& pm) {
  GrayImage gray{pm.wl.width, pm.wl.height, 8, std::vector<std::uint16_t>(pm.m.size())};
  std::transform(pm.m.begin(), pm.m.end(), gray.values.begin(),
                 [](std::uint8_t v) -> std::uint16_t { return v ? 255 : 0; });
  return encode_gray_png(gray);
}

void save_pseudo_mask(const PseudoMask& pm, const std::filesystem::path& stem) {
  write_file(stem.string() + ".labels.png", encode_mask_png(pm.wl));
  write_file(stem.string() + ".mask.png", encode_supervision_png(pm));
}

PseudoMask load_pseudo_mask(const std::filesystem::path& stem, int num_classes) {
  PseudoMask pm;
  pm.wl = read_mask(stem.string() + ".labels.png", num_classes);
  const GrayImage gray = decode_gray_png(read_file(stem.string() + ".mask.png"));
  if (gray.width != pm.wl.width || gray.height != pm.wl.height || gray.bit_depth != 8) {
    fail(ErrorCode::kDimensionMismatch, "supervision mask does not match its label image");
  }
  pm.m.resize(gray.values.size());
  for (std::size_t i = 0; i < gray.values.size(); ++i) {
    if (gray.values[i] != 0 && gray.values[i] != 255) {
      fail(ErrorCode::kInvalidArgument, "supervision mask values must be 0 or 255");
    }
    pm.m[i] = gray.values[i] ? 1 : 0;
  }
  return pm;
}

}  // namespace pointgrow
