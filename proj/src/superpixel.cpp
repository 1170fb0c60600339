#include "pointgrow/superpixel.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <queue>
#include <string>
#include <tuple>

#include "pointgrow/binary_io.hpp"
#include "pointgrow/error.hpp"

namespace pointgrow {

void validate(const SuperpixelConfig& config) {
  if (config.k < 1) fail(ErrorCode::kInvalidArgument, "superpixel count k must be >= 1");
  if (!(config.sigma > 0.0) || !std::isfinite(config.sigma)) {
    fail(ErrorCode::kInvalidArgument, "sigma must be a positive finite value");
  }
  if (!(config.beta >= 0.0 && config.beta <= 1.0)) {
    fail(ErrorCode::kInvalidArgument, "beta must lie in [0, 1]");
  }
  if (config.slic_iterations < 1) {
    fail(ErrorCode::kInvalidArgument, "slic iterations must be >= 1");
  }
  if (!(config.slic_compactness > 0.0)) {
    fail(ErrorCode::kInvalidArgument, "slic compactness must be positive");
  }
}

AffinityGraph build_grid_graph(const RasterImage& image, const std::optional<EdgeMap>& edges,
                               const SuperpixelConfig& config) {
  validate(image);
  if (edges && (edges->width != image.width || edges->height != image.height)) {
    fail(ErrorCode::kDimensionMismatch, "edge map dimensions differ from the image");
  }
  const bool use_edges = config.edge && edges.has_value();
  const int w = image.width;
  const int h = image.height;

  AffinityGraph graph;
  graph.width = w;
  graph.height = h;
  graph.nodes.resize(image.pixel_count());
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    graph.nodes[i].size = 1;
    for (int c = 0; c < 3; ++c) graph.nodes[i].color_sum[c] = image.data[3 * i + c];
  }

  auto add_edge = [&](std::uint32_t u, std::uint32_t v) {
    double d2 = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double diff = double(image.data[3 * u + c]) - double(image.data[3 * v + c]);
      d2 += diff * diff;
    }
    const double factor =
        use_edges ? 1.0 + std::max(edges->magnitude[u], edges->magnitude[v]) : 1.0;
    graph.edges.push_back({u, v, std::sqrt(d2) * factor, factor});
  };

  graph.edges.reserve(2 * image.pixel_count());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto u = static_cast<std::uint32_t>(y * w + x);
      if (x + 1 < w) add_edge(u, u + 1);
      if (y + 1 < h) add_edge(u, u + static_cast<std::uint32_t>(w));
    }
  }
  return graph;
}

namespace {

struct Adjacency {
  std::uint32_t id;
  double boundary_sum;      // sum of per-pixel-pair boundary factors
  std::uint64_t boundary_n;  // number of pixel pairs on the shared boundary
};

struct Candidate {
  double cost;
  std::uint32_t lo;
  std::uint32_t hi;

  bool operator>(const Candidate& other) const {
    return std::tie(cost, lo, hi) > std::tie(other.cost, other.lo, other.hi);
  }
};

class Agglomerator {
 public:
  Agglomerator(const AffinityGraph& graph, const SuperpixelConfig& config)
      : beta_(config.beta), sigma_(config.sigma) {
    const std::size_t n = graph.nodes.size();
    const std::size_t capacity = 2 * n - 1;
    stats_.resize(capacity);
    alive_.assign(capacity, false);
    adjacency_.resize(capacity);
    std::copy(graph.nodes.begin(), graph.nodes.end(), stats_.begin());
    std::fill_n(alive_.begin(), n, true);
    for (const GraphEdge& e : graph.edges) {
      if (e.u == e.v || e.u >= n || e.v >= n) {
        fail(ErrorCode::kInvalidArgument, "graph edge references an invalid node");
      }
      adjacency_[e.u].push_back({e.v, e.boundary_factor, 1});
      adjacency_[e.v].push_back({e.u, e.boundary_factor, 1});
    }
    for (std::uint32_t u = 0; u < n; ++u) compact(u);
    for (std::uint32_t u = 0; u < n; ++u) {
      for (const Adjacency& a : adjacency_[u]) {
        if (u < a.id) push(u, a);
      }
    }
  }

  MergeHierarchy run() {
    const auto n = static_cast<std::uint32_t>(adjacency_.size() / 2 + 1);
    MergeHierarchy out;
    out.pixel_count = n;
    out.merges.reserve(n - 1);
    std::uint32_t next = n;
    while (out.merges.size() + 1 < n) {
      if (heap_.empty()) {
        fail(ErrorCode::kInvalidArgument, "graph is disconnected; cannot reach one region");
      }
      const Candidate top = heap_.top();
      heap_.pop();
      if (!alive_[top.lo] || !alive_[top.hi]) continue;
      merge(top.lo, top.hi, next);
      out.merges.push_back({top.lo, top.hi, next, top.cost / sigma_});
      ++next;
    }
    return out;
  }

 private:
  double cost(std::uint32_t a, std::uint32_t b, const Adjacency& link) const {
    const RegionStats& sa = stats_[a];
    const RegionStats& sb = stats_[b];
    double d2 = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double diff = double(sa.color_sum[c]) / double(sa.size) -
                          double(sb.color_sum[c]) / double(sb.size);
      d2 += diff * diff;
    }
    const double na = double(sa.size);
    const double nb = double(sb.size);
    const double balance = beta_ == 0.0 ? 1.0 : std::pow(na * nb / (na + nb), beta_);
    return std::sqrt(d2) * balance * (link.boundary_sum / double(link.boundary_n));
  }

  void push(std::uint32_t u, const Adjacency& link) {
    const std::uint32_t lo = std::min(u, link.id);
    const std::uint32_t hi = std::max(u, link.id);
    heap_.push({cost(u, link.id, link), lo, hi});
  }

  // Drops dead neighbours and folds duplicate ids together.
  void compact(std::uint32_t u) {
    auto& list = adjacency_[u];
    std::erase_if(list, [&](const Adjacency& a) { return !alive_[a.id]; });
    std::sort(list.begin(), list.end(),
              [](const Adjacency& x, const Adjacency& y) { return x.id < y.id; });
    std::size_t out = 0;
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (out > 0 && list[out - 1].id == list[i].id) {
        list[out - 1].boundary_sum += list[i].boundary_sum;
        list[out - 1].boundary_n += list[i].boundary_n;
      } else {
        list[out++] = list[i];
      }
    }
    list.resize(out);
  }

  void merge(std::uint32_t a, std::uint32_t b, std::uint32_t merged) {
    RegionStats& s = stats_[merged];
    s.size = stats_[a].size + stats_[b].size;
    for (int c = 0; c < 3; ++c) s.color_sum[c] = stats_[a].color_sum[c] + stats_[b].color_sum[c];

    alive_[a] = false;
    alive_[b] = false;
    alive_[merged] = true;

    auto& list = adjacency_[merged];
    list = std::move(adjacency_[a]);
    list.insert(list.end(), adjacency_[b].begin(), adjacency_[b].end());
    adjacency_[a] = {};
    adjacency_[b] = {};
    compact(merged);

    for (const Adjacency& link : list) {
      adjacency_[link.id].push_back({merged, link.boundary_sum, link.boundary_n});
      push(merged, link);
    }
  }

  double beta_;
  double sigma_;
  std::vector<RegionStats> stats_;
  std::vector<bool> alive_;
  std::vector<std::vector<Adjacency>> adjacency_;
  std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> heap_;
};

}  // namespace

MergeHierarchy agglomerate(const AffinityGraph& graph, const SuperpixelConfig& config) {
  validate(config);
  if (graph.nodes.empty()) fail(ErrorCode::kEmpty, "cannot agglomerate an empty graph");
  if (graph.nodes.size() >= std::numeric_limits<std::uint32_t>::max() / 2) {
    fail(ErrorCode::kOutOfRange, "graph too large for 32-bit region ids");
  }
  if (graph.nodes.size() == 1) return MergeHierarchy{1, {}};
  return Agglomerator(graph, config).run();
}

namespace {

// Relabels arbitrary non-negative ids to 0..k-1 by raster order of first use.
int relabel_raster_order(std::vector<std::uint32_t>& ids, std::size_t id_space) {
  constexpr std::uint32_t kUnset = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> remap(id_space, kUnset);
  std::uint32_t next = 0;
  for (std::uint32_t& id : ids) {
    if (remap[id] == kUnset) remap[id] = next++;
    id = remap[id];
  }
  return static_cast<int>(next);
}

}  // namespace

SuperpixelMap extract_k(const MergeHierarchy& hierarchy, int k, int width, int height) {
  const std::uint32_t n = hierarchy.pixel_count;
  if (width < 1 || height < 1 || static_cast<std::uint64_t>(width) * height != n) {
    fail(ErrorCode::kDimensionMismatch, "hierarchy pixel count does not match width*height");
  }
  if (k < 1 || static_cast<std::uint32_t>(k) > n) {
    fail(ErrorCode::kOutOfRange, "k=" + std::to_string(k) + " outside [1, " +
                                     std::to_string(n) + "]");
  }
  if (hierarchy.merges.size() + 1 != n) {
    fail(ErrorCode::kInvalidArgument, "hierarchy must contain pixel_count - 1 merges");
  }
  const std::size_t applied = n - static_cast<std::uint32_t>(k);
  std::vector<std::uint32_t> parent(2 * static_cast<std::size_t>(n) - 1);
  std::iota(parent.begin(), parent.end(), 0u);
  for (std::size_t i = 0; i < applied; ++i) {
    const Merge& m = hierarchy.merges[i];
    parent[m.region_a] = m.new_region;
    parent[m.region_b] = m.new_region;
  }
  // Merges only point upward (new_region > parents), so resolving ids from
  // the top down yields roots in one pass.
  for (std::size_t id = n + applied; id-- > 0;) {
    if (parent[id] != id) parent[id] = parent[parent[id]];
  }
  SuperpixelMap map{width, height, 0, std::vector<std::uint32_t>(parent.begin(), parent.begin() + n)};
  map.k = relabel_raster_order(map.labels, parent.size());
  return map;
}

namespace {

std::array<double, 3> rgb_to_lab(const std::uint8_t* rgb) {
  auto linear = [](double c) {
    c /= 255.0;
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
  };
  const double r = linear(rgb[0]);
  const double g = linear(rgb[1]);
  const double b = linear(rgb[2]);
  const double x = (0.4124564 * r + 0.3575761 * g + 0.1804375 * b) / 0.95047;
  const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
  const double z = (0.0193339 * r + 0.1191920 * g + 0.9503041 * b) / 1.08883;
  auto f = [](double t) {
    return t > 216.0 / 24389.0 ? std::cbrt(t) : (24389.0 / 27.0 * t + 16.0) / 116.0;
  };
  const double fx = f(x), fy = f(y), fz = f(z);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

struct SlicCenter {
  double l, a, b, x, y;
};

// Every label keeps its largest 4-connected component; the remaining
// components join the adjacent region sharing the longest boundary.
std::vector<std::uint32_t> enforce_connectivity(const std::vector<std::uint32_t>& labels, int w,
                                                int h, std::size_t label_space) {
  const std::size_t n = labels.size();
  constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> comp(n, kNone);
  std::vector<std::uint32_t> comp_label;
  std::vector<std::size_t> comp_size;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < n; ++start) {
    if (comp[start] != kNone) continue;
    const auto id = static_cast<std::uint32_t>(comp_label.size());
    comp_label.push_back(labels[start]);
    comp_size.push_back(0);
    comp[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++comp_size[id];
      const int x = static_cast<int>(p % w);
      const int y = static_cast<int>(p / w);
      const std::size_t nbrs[4] = {p - 1, p + 1, p - w, p + w};
      const bool ok[4] = {x > 0, x + 1 < w, y > 0, y + 1 < h};
      for (int i = 0; i < 4; ++i) {
        if (ok[i] && comp[nbrs[i]] == kNone && labels[nbrs[i]] == labels[p]) {
          comp[nbrs[i]] = id;
          stack.push_back(nbrs[i]);
        }
      }
    }
  }

  const std::size_t ncomp = comp_label.size();
  std::vector<std::uint32_t> anchor(label_space, kNone);
  for (std::uint32_t c = 0; c < ncomp; ++c) {
    std::uint32_t& best = anchor[comp_label[c]];
    if (best == kNone || comp_size[c] > comp_size[best]) best = c;
  }
  std::vector<std::uint32_t> region(ncomp, kNone);
  std::size_t unresolved = 0;
  for (std::uint32_t c = 0; c < ncomp; ++c) {
    if (anchor[comp_label[c]] == c) {
      region[c] = c;
    } else {
      ++unresolved;
    }
  }

  while (unresolved > 0) {
    std::vector<std::vector<std::pair<std::uint32_t, std::size_t>>> votes(ncomp);
    auto vote = [&](std::uint32_t from, std::uint32_t to_region) {
      auto& v = votes[from];
      for (auto& [r, count] : v) {
        if (r == to_region) {
          ++count;
          return;
        }
      }
      v.emplace_back(to_region, 1);
    };
    for (std::size_t p = 0; p < n; ++p) {
      const std::uint32_t c = comp[p];
      if (region[c] != kNone) continue;
      const int x = static_cast<int>(p % w);
      const int y = static_cast<int>(p / w);
      const std::size_t nbrs[4] = {p - 1, p + 1, p - w, p + w};
      const bool ok[4] = {x > 0, x + 1 < w, y > 0, y + 1 < h};
      for (int i = 0; i < 4; ++i) {
        if (!ok[i]) continue;
        const std::uint32_t other = comp[nbrs[i]];
        if (other != c && region[other] != kNone) vote(c, region[other]);
      }
    }
    std::size_t resolved_now = 0;
    for (std::uint32_t c = 0; c < ncomp; ++c) {
      if (region[c] != kNone || votes[c].empty()) continue;
      auto best = std::max_element(votes[c].begin(), votes[c].end(), [](auto& l, auto& r) {
        return l.second < r.second || (l.second == r.second && l.first > r.first);
      });
      region[c] = best->first;
      ++resolved_now;
    }
    if (resolved_now == 0) fail(ErrorCode::kInvalidArgument, "connectivity repair stalled");
    unresolved -= resolved_now;
  }

  std::vector<std::uint32_t> out(n);
  for (std::size_t p = 0; p < n; ++p) out[p] = region[comp[p]];
  return out;
}

}  // namespace

SuperpixelMap slic(const RasterImage& image, const SuperpixelConfig& config) {
  validate(image);
  validate(config);
  const int w = image.width;
  const int h = image.height;
  const std::size_t n = image.pixel_count();
  if (static_cast<std::size_t>(config.k) > n) {
    fail(ErrorCode::kOutOfRange, "k exceeds the pixel count");
  }

  std::vector<std::array<double, 3>> lab(n);
  for (std::size_t i = 0; i < n; ++i) lab[i] = rgb_to_lab(&image.data[3 * i]);

  const double step = std::sqrt(double(n) / config.k);
  const int nx = std::max(1, static_cast<int>(std::lround(w / step)));
  const int ny = std::max(1, static_cast<int>(std::lround(h / step)));
  const double sx = double(w) / nx;
  const double sy = double(h) / ny;

  auto grad = [&](int x, int y) {
    auto at = [&](int xx, int yy) -> const std::array<double, 3>& {
      xx = std::clamp(xx, 0, w - 1);
      yy = std::clamp(yy, 0, h - 1);
      return lab[static_cast<std::size_t>(yy) * w + xx];
    };
    double g = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double dx = at(x + 1, y)[c] - at(x - 1, y)[c];
      const double dy = at(x, y + 1)[c] - at(x, y - 1)[c];
      g += dx * dx + dy * dy;
    }
    return g;
  };

  std::vector<SlicCenter> centers;
  centers.reserve(static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      int cx = std::min(w - 1, static_cast<int>((i + 0.5) * sx));
      int cy = std::min(h - 1, static_cast<int>((j + 0.5) * sy));
      double best = grad(cx, cy);
      int bx = cx, by = cy;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int x = cx + dx, y = cy + dy;
          if (x < 0 || y < 0 || x >= w || y >= h) continue;
          const double g = grad(x, y);
          if (g < best) {
            best = g;
            bx = x;
            by = y;
          }
        }
      }
      const auto& c = lab[static_cast<std::size_t>(by) * w + bx];
      centers.push_back({c[0], c[1], c[2], double(bx), double(by)});
    }
  }

  const double search = std::max(sx, sy);
  const double spatial_weight = config.slic_compactness / search;
  std::vector<std::uint32_t> labels(n, 0);
  std::vector<double> dist(n);
  for (int iter = 0; iter < config.slic_iterations; ++iter) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    for (std::uint32_t ci = 0; ci < centers.size(); ++ci) {
      const SlicCenter& c = centers[ci];
      const int x0 = std::max(0, static_cast<int>(std::floor(c.x - search)));
      const int x1 = std::min(w - 1, static_cast<int>(std::ceil(c.x + search)));
      const int y0 = std::max(0, static_cast<int>(std::floor(c.y - search)));
      const int y1 = std::min(h - 1, static_cast<int>(std::ceil(c.y + search)));
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const std::size_t p = static_cast<std::size_t>(y) * w + x;
          const double dl = lab[p][0] - c.l, da = lab[p][1] - c.a, db = lab[p][2] - c.b;
          const double ddx = x - c.x, ddy = y - c.y;
          const double d = dl * dl + da * da + db * db +
                           spatial_weight * spatial_weight * (ddx * ddx + ddy * ddy);
          if (d < dist[p]) {
            dist[p] = d;
            labels[p] = ci;
          }
        }
      }
    }
    std::vector<SlicCenter> sums(centers.size(), SlicCenter{0, 0, 0, 0, 0});
    std::vector<std::size_t> counts(centers.size(), 0);
    for (std::size_t p = 0; p < n; ++p) {
      SlicCenter& s = sums[labels[p]];
      s.l += lab[p][0];
      s.a += lab[p][1];
      s.b += lab[p][2];
      s.x += double(p % w);
      s.y += double(p / w);
      ++counts[labels[p]];
    }
    for (std::size_t ci = 0; ci < centers.size(); ++ci) {
      if (counts[ci] == 0) continue;
      const double inv = 1.0 / double(counts[ci]);
      centers[ci] = {sums[ci].l * inv, sums[ci].a * inv, sums[ci].b * inv, sums[ci].x * inv,
                     sums[ci].y * inv};
    }
  }

  SuperpixelMap map{w, h, 0, enforce_connectivity(labels, w, h, centers.size())};
  map.k = relabel_raster_order(map.labels, n);
  return map;
}

MergeHierarchy build_hierarchy(const RasterImage& image, const SuperpixelConfig& config) {
  std::optional<EdgeMap> edges;
  if (config.edge) edges = sobel_edges(image);
  return agglomerate(build_grid_graph(image, edges, config), config);
}

SuperpixelMap compute_superpixels(const RasterImage& image, const SuperpixelConfig& config) {
  validate(config);
  if (config.backend == SuperpixelBackend::kSlic) return slic(image, config);
  validate(image);
  if (static_cast<std::size_t>(config.k) > image.pixel_count()) {
    fail(ErrorCode::kOutOfRange, "k exceeds the pixel count");
  }
  return extract_k(build_hierarchy(image, config), config.k, image.width, image.height);
}

void validate(const SuperpixelMap& map) {
  if (map.width < 1 || map.height < 1 ||
      map.labels.size() != static_cast<std::size_t>(map.width) * map.height) {
    fail(ErrorCode::kInvalidArgument, "superpixel map size does not match its dimensions");
  }
  if (map.k < 1) fail(ErrorCode::kInvalidArgument, "superpixel map has no regions");
  std::vector<bool> seen(static_cast<std::size_t>(map.k), false);
  for (std::uint32_t id : map.labels) {
    if (id >= static_cast<std::uint32_t>(map.k)) {
      fail(ErrorCode::kOutOfRange, "region id " + std::to_string(id) + " >= k");
    }
    seen[id] = true;
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    fail(ErrorCode::kInvalidArgument, "superpixel ids are not contiguous");
  }
}

bool regions_connected(const SuperpixelMap& map) {
  const int w = map.width;
  const int h = map.height;
  const std::size_t n = map.labels.size();
  std::vector<bool> visited(n, false);
  std::vector<bool> label_seen(static_cast<std::size_t>(map.k), false);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < n; ++start) {
    if (visited[start]) continue;
    const std::uint32_t label = map.labels[start];
    if (label_seen[label]) return false;  // a second component of this label
    label_seen[label] = true;
    visited[start] = true;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const int x = static_cast<int>(p % w);
      const int y = static_cast<int>(p / w);
      const std::size_t nbrs[4] = {p - 1, p + 1, p - w, p + w};
      const bool ok[4] = {x > 0, x + 1 < w, y > 0, y + 1 < h};
      for (int i = 0; i < 4; ++i) {
        if (ok[i] && !visited[nbrs[i]] && map.labels[nbrs[i]] == label) {
          visited[nbrs[i]] = true;
          stack.push_back(nbrs[i]);
        }
      }
    }
  }
  return true;
}

std::vector<BoundaryRun> boundary_runs(const SuperpixelMap& map) {
  std::vector<BoundaryRun> runs;
  for (int y = 0; y < map.height; ++y) {
    int run_start = -1;
    for (int x = 0; x <= map.width; ++x) {
      bool boundary = false;
      if (x < map.width) {
        const std::uint32_t id = map.at(x, y);
        boundary = (x + 1 < map.width && map.at(x + 1, y) != id) ||
                   (y + 1 < map.height && map.at(x, y + 1) != id);
      }
      if (boundary && run_start < 0) run_start = x;
      if (!boundary && run_start >= 0) {
        runs.push_back({y, run_start, x - run_start});
        run_start = -1;
      }
    }
  }
  return runs;
}

Bytes encode_superpixel_png(const SuperpixelMap& map) {
  validate(map);
  if (map.k > kMaxPngRegions) {
    fail(ErrorCode::kOutOfRange, "16-bit superpixel PNG holds at most 65535 regions");
  }
  return encode_gray_png(GrayImage{map.width, map.height, 16,
                                   {map.labels.begin(), map.labels.end()}});
}

SuperpixelMap decode_superpixel_png(std::span<const std::uint8_t> bytes) {
  const GrayImage gray = decode_gray_png(bytes);
  if (gray.bit_depth != 16) {
    fail(ErrorCode::kUnsupportedFormat, "superpixel maps must be 16-bit grayscale");
  }
  SuperpixelMap map{gray.width, gray.height, 0, {gray.values.begin(), gray.values.end()}};
  map.k = map.labels.empty() ? 0 : static_cast<int>(*std::max_element(map.labels.begin(),
                                                                       map.labels.end())) + 1;
  validate(map);
  return map;
}

namespace {
constexpr std::string_view kHierarchyMagic = "SPHX";
constexpr std::uint16_t kHierarchyVersion = 1;
}  // namespace

Bytes serialize_hierarchy(const MergeHierarchy& hierarchy) {
  ByteWriter out;
  out.put_magic(kHierarchyMagic);
  out.put_u16(kHierarchyVersion);
  out.put_u32(hierarchy.pixel_count);
  for (const Merge& m : hierarchy.merges) {
    out.put_u32(m.region_a);
    out.put_u32(m.region_b);
    out.put_u32(m.new_region);
    out.put_f64(m.score);
  }
  return out.take();
}

MergeHierarchy deserialize_hierarchy(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  if (!in.magic_matches(kHierarchyMagic)) fail(ErrorCode::kBadMagic, "not a SPHX hierarchy");
  if (in.u16() != kHierarchyVersion) fail(ErrorCode::kBadVersion, "unsupported SPHX version");
  MergeHierarchy h;
  h.pixel_count = in.u32();
  if (h.pixel_count == 0) fail(ErrorCode::kInvalidArgument, "hierarchy with zero pixels");
  constexpr std::size_t kRecord = 3 * 4 + 8;
  if (in.remaining() != static_cast<std::size_t>(h.pixel_count - 1) * kRecord) {
    fail(ErrorCode::kTruncated, "hierarchy record count does not match pixel count");
  }
  h.merges.resize(h.pixel_count - 1);
  for (Merge& m : h.merges) {
    m.region_a = in.u32();
    m.region_b = in.u32();
    m.new_region = in.u32();
    m.score = in.f64();
  }
  return h;
}

}  // namespace pointgrow
