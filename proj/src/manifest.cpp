#include "pointgrow/manifest.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <random>
#include <set>

#include <json.hpp>

#include "pointgrow/error.hpp"
#include "pointgrow/png_io.hpp"

namespace pointgrow {

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  fail(ErrorCode::kInvalidArgument, "unknown split '" + name + "'");
}

std::vector<ManifestEntry> DatasetManifest::split(Split which) const {
  std::vector<ManifestEntry> out;
  std::copy_if(entries.begin(), entries.end(), std::back_inserter(out),
               [which](const ManifestEntry& e) { return e.split == which; });
  return out;
}

namespace {

void check_unique_paths(const std::vector<ManifestEntry>& entries) {
  std::set<std::string> seen;
  for (const ManifestEntry& e : entries) {
    if (!seen.insert(e.image).second || !seen.insert(e.mask).second) {
      fail(ErrorCode::kDuplicate, "path appears twice in manifest: " + e.image);
    }
  }
}

}  // namespace

DatasetManifest split_manifest(const std::vector<std::pair<std::string, std::string>>& items,
                               std::uint64_t seed) {
  if (items.empty()) fail(ErrorCode::kEmpty, "cannot split an empty dataset");
  const std::size_t n = items.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::array<std::size_t, 3> counts = {6 * n / 10, 2 * n / 10, 2 * n / 10};
  std::size_t remainder = n - counts[0] - counts[1] - counts[2];
  for (std::size_t i = 0; remainder > 0; i = (i + 1) % 3, --remainder) ++counts[i];

  DatasetManifest manifest;
  manifest.seed = seed;
  manifest.entries.reserve(n);
  std::size_t pos = 0;
  for (int s = 0; s < 3; ++s) {
    for (std::size_t k = 0; k < counts[s]; ++k, ++pos) {
      const auto& [image, mask] = items[order[pos]];
      manifest.entries.push_back({image, mask, static_cast<Split>(s)});
    }
  }
  check_unique_paths(manifest.entries);
  return manifest;
}

std::string manifest_to_json(const DatasetManifest& manifest) {
  nlohmann::ordered_json doc;
  doc["seed"] = manifest.seed;
  doc["entries"] = nlohmann::ordered_json::array();
  for (const ManifestEntry& e : manifest.entries) {
    doc["entries"].push_back({{"image", e.image}, {"mask", e.mask}, {"split", to_string(e.split)}});
  }
  return doc.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    DatasetManifest manifest;
    manifest.seed = doc.at("seed").get<std::uint64_t>();
    for (const auto& e : doc.at("entries")) {
      manifest.entries.push_back({e.at("image").get<std::string>(),
                                  e.at("mask").get<std::string>(),
                                  parse_split(e.at("split").get<std::string>())});
    }
    check_unique_paths(manifest.entries);
    return manifest;
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorCode::kInvalidArgument, std::string("malformed manifest: ") + ex.what());
  }
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  const std::string text = manifest_to_json(manifest);
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  const Bytes bytes = read_file(path);
  return manifest_from_json(std::string(bytes.begin(), bytes.end()));
}

}  // namespace pointgrow
