#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "pointgrow/png_io.hpp"
#include "pointgrow/raster.hpp"

namespace pointgrow {

enum class SuperpixelBackend { kAgglomerative, kSlic };

struct SuperpixelConfig {
  int k = 100;
  bool edge = false;
  /// Color scale in channel units; merge scores are recorded in multiples of it.
  double sigma = 10.0;
  /// Exponent of the |A||B|/(|A|+|B|) size-balance term.
  double beta = 0.5;
  SuperpixelBackend backend = SuperpixelBackend::kAgglomerative;
  double slic_compactness = 10.0;
  int slic_iterations = 10;
};

void validate(const SuperpixelConfig& config);

struct RegionStats {
  std::uint64_t size = 0;
  std::array<std::uint64_t, 3> color_sum{};

  friend bool operator==(const RegionStats&, const RegionStats&) = default;
};

struct GraphEdge {
  std::uint32_t u = 0;
  std::uint32_t v = 0;
  /// Dissimilarity: RGB distance times boundary_factor.
  double score = 0.0;
  /// 1 + max edge magnitude of the two pixels when the edge option is on, else 1.
  double boundary_factor = 1.0;
};

struct AffinityGraph {
  int width = 0;
  int height = 0;
  std::vector<RegionStats> nodes;
  std::vector<GraphEdge> edges;
};

struct Merge {
  std::uint32_t region_a = 0;
  std::uint32_t region_b = 0;
  std::uint32_t new_region = 0;
  double score = 0.0;

  friend bool operator==(const Merge&, const Merge&) = default;
};

/// Full agglomeration record. Leaves are pixel ids 0..pixel_count-1; merge i
/// creates region pixel_count + i.
struct MergeHierarchy {
  std::uint32_t pixel_count = 0;
  std::vector<Merge> merges;

  friend bool operator==(const MergeHierarchy&, const MergeHierarchy&) = default;
};

struct SuperpixelMap {
  int width = 0;
  int height = 0;
  int k = 0;
  std::vector<std::uint32_t> labels;

  std::uint32_t at(int x, int y) const {
    return labels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(x)];
  }
  friend bool operator==(const SuperpixelMap&, const SuperpixelMap&) = default;
};

AffinityGraph build_grid_graph(const RasterImage& image, const std::optional<EdgeMap>& edges,
                               const SuperpixelConfig& config);

/// Greedy best-first merging of the adjacent pair with the smallest
///   |mean(A) - mean(B)| * (|A||B| / (|A| + |B|))^beta * boundary factor
/// until a single region remains. The boundary factor is the mean of the
/// per-pixel-pair factors along the shared boundary (1 without the edge
/// option). Ties go to the lexicographically smaller (min id, max id).
MergeHierarchy agglomerate(const AffinityGraph& graph, const SuperpixelConfig& config);

/// Applies the first pixel_count - k merges and labels the survivors 0..k-1 in
/// raster order of their first pixel.
SuperpixelMap extract_k(const MergeHierarchy& hierarchy, int k, int width, int height);

/// SLIC in CIELAB. The region count of the result may differ from config.k.
SuperpixelMap slic(const RasterImage& image, const SuperpixelConfig& config);

/// Convenience: edge map (if enabled), graph, hierarchy.
MergeHierarchy build_hierarchy(const RasterImage& image, const SuperpixelConfig& config);

/// Dispatches on config.backend and returns a map with config.k regions
/// (agglomerative) or approximately k regions (slic).
SuperpixelMap compute_superpixels(const RasterImage& image, const SuperpixelConfig& config);

/// Throws unless labels form 0..k-1, all present, sized width*height.
void validate(const SuperpixelMap& map);
/// True when every region is a single 4-connected component.
bool regions_connected(const SuperpixelMap& map);

/// Horizontal runs of pixels whose right or lower neighbor lies in a different
/// region.
struct BoundaryRun {
  int y = 0;
  int x = 0;
  int length = 0;

  friend bool operator==(const BoundaryRun&, const BoundaryRun&) = default;
};
std::vector<BoundaryRun> boundary_runs(const SuperpixelMap& map);

inline constexpr int kMaxPngRegions = 65535;

/// 16-bit grayscale, pixel value = region id.
Bytes encode_superpixel_png(const SuperpixelMap& map);
SuperpixelMap decode_superpixel_png(std::span<const std::uint8_t> bytes);

/// "SPHX" binary format, little-endian.
Bytes serialize_hierarchy(const MergeHierarchy& hierarchy);
MergeHierarchy deserialize_hierarchy(std::span<const std::uint8_t> bytes);

}  // namespace pointgrow
