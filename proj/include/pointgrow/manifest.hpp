#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace pointgrow {

enum class Split { kTrain, kVal, kTest };

std::string to_string(Split split);
Split parse_split(const std::string& name);

struct ManifestEntry {
  std::string image;
  std::string mask;
  Split split = Split::kTrain;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> entries;

  std::vector<ManifestEntry> split(Split which) const;
  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

/// Shuffles (image, mask) pairs with the seed and assigns 60/20/20; the
/// remainder items go to train first, then val.
DatasetManifest split_manifest(const std::vector<std::pair<std::string, std::string>>& items,
                               std::uint64_t seed);

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

}  // namespace pointgrow
