#pragma once

// OPTICS ordering over 2D points, DBSCAN-equivalent threshold extraction and
// the adaptive max-epsilon schedule used for gaze target discovery.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <set>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ecseg/errors.hpp"

namespace ecseg::clustering {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();
inline constexpr int kNoise = -1;

struct OpticsParams {
  int min_samples = 5;
  double max_eps = 8;
};

struct OpticsOrder {
  std::vector<int> ordering;           // visit order
  std::vector<double> reachability;    // per point, kInfinity when unreached
  std::vector<double> core_distances;  // per point, kInfinity when not core within max_eps
};

struct ClusterResult {
  std::vector<int> labels;  // kNoise or 0..num_clusters-1
  std::vector<int> ordering;
  std::vector<double> reachability;
  double used_eps = 0;
  int num_clusters = 0;
};

struct AdaptiveSchedule {
  double start_eps = 8;
  double step = 8;
  double cap = 512;
};

/// min_samples grows with the number of points: denser plane for long videos.
inline int min_samples_for(std::size_t n_points, int floor_value = 5, double fraction = 0.005) {
  const auto scaled = static_cast<int>(std::ceil(fraction * static_cast<double>(n_points)));
  return std::max(floor_value, scaled);
}

namespace detail {

// Uniform grid with cell size >= the query radius; queries scan 3x3 cells.
class GridIndex {
 public:
  GridIndex(std::span<const Eigen::Vector2d> pts, double cell) : pts_(pts), cell_(cell) {
    for (int i = 0; i < static_cast<int>(pts.size()); ++i) cells_[cell_of(pts[i])].push_back(i);
  }

  // Appends (distance, index) of every point within radius (inclusive) of point i.
  void neighbors(int i, double radius, std::vector<std::pair<double, int>>& out) const {
    out.clear();
    const auto c = cell_of(pts_[i]);
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        auto it = cells_.find({c.first + dx, c.second + dy});
        if (it == cells_.end()) continue;
        for (int j : it->second) {
          const double d = (pts_[i] - pts_[j]).norm();
          if (d <= radius) out.emplace_back(d, j);
        }
      }
    }
  }

 private:
  std::pair<std::int64_t, std::int64_t> cell_of(const Eigen::Vector2d& p) const {
    return {static_cast<std::int64_t>(std::floor(p.x() / cell_)), static_cast<std::int64_t>(std::floor(p.y() / cell_))};
  }
  using Cell = std::pair<std::int64_t, std::int64_t>;
  struct CellHash {
    std::size_t operator()(const Cell& c) const noexcept {
      return static_cast<std::size_t>((static_cast<std::uint64_t>(c.first) * 0x9E3779B97F4A7C15ULL) ^
                                      static_cast<std::uint64_t>(c.second));
    }
  };

  std::span<const Eigen::Vector2d> pts_;
  double cell_;
  std::unordered_map<Cell, std::vector<int>, CellHash> cells_;
};

}  // namespace detail

/// OPTICS ordering with Euclidean distance. Seed ties break toward the lowest
/// index. New traversals start from the unprocessed point with the smallest
/// core distance, so that extraction at eps == max_eps reproduces DBSCAN.
inline OpticsOrder optics_order(std::span<const Eigen::Vector2d> points, const OpticsParams& params) {
  if (points.empty()) throw DataError("optics_order: empty input");
  if (params.min_samples < 1 || !(params.max_eps > 0)) throw ConfigError("optics_order: invalid parameters");
  const int n = static_cast<int>(points.size());
  for (const auto& p : points) {
    if (!p.allFinite()) throw DataError("optics_order: non-finite point");
  }
  OpticsOrder out;
  out.reachability.assign(n, kInfinity);
  out.core_distances.assign(n, kInfinity);
  out.ordering.reserve(n);

  detail::GridIndex grid(points, params.max_eps);
  std::vector<std::vector<std::pair<double, int>>> nbrs(n);
  std::vector<double> dists;
  for (int i = 0; i < n; ++i) {
    grid.neighbors(i, params.max_eps, nbrs[i]);
    if (static_cast<int>(nbrs[i].size()) >= params.min_samples) {
      dists.clear();
      for (const auto& [d, j] : nbrs[i]) dists.push_back(d);
      std::nth_element(dists.begin(), dists.begin() + (params.min_samples - 1), dists.end());
      out.core_distances[i] = dists[params.min_samples - 1];
    }
  }

  std::vector<int> starts(n);
  std::iota(starts.begin(), starts.end(), 0);
  std::stable_sort(starts.begin(), starts.end(),
                   [&](int a, int b) { return out.core_distances[a] < out.core_distances[b]; });

  std::vector<char> processed(n, 0);
  std::set<std::pair<double, int>> seeds;
  auto expand = [&](int p) {
    processed[p] = 1;
    out.ordering.push_back(p);
    const double core = out.core_distances[p];
    if (core == kInfinity) return;
    for (const auto& [d, q] : nbrs[p]) {
      if (processed[q]) continue;
      const double reach = std::max(core, d);
      if (reach < out.reachability[q]) {
        if (out.reachability[q] != kInfinity) seeds.erase({out.reachability[q], q});
        out.reachability[q] = reach;
        seeds.insert({reach, q});
      }
    }
  };

  for (int s : starts) {
    if (processed[s]) continue;
    expand(s);
    while (!seeds.empty()) {
      const int q = seeds.begin()->second;
      seeds.erase(seeds.begin());
      expand(q);
    }
  }
  return out;
}

/// DBSCAN-equivalent extraction at threshold eps (neighbourhoods are closed:
/// distance <= eps). Exact against DBSCAN when eps equals the ordering's max_eps.
inline std::vector<int> extract_clusters(std::span<const int> ordering, std::span<const double> reachability,
                                         std::span<const double> core_distances, double eps, int* num_clusters = nullptr) {
  std::vector<int> labels(reachability.size(), kNoise);
  int cluster = -1;
  for (int p : ordering) {
    if (reachability[p] > eps) {
      if (core_distances[p] <= eps) {
        labels[p] = ++cluster;
      }
    } else {
      labels[p] = cluster;
    }
  }
  if (num_clusters) *num_clusters = cluster + 1;
  return labels;
}

inline std::vector<int> extract_clusters(const OpticsOrder& order, double eps, int* num_clusters = nullptr) {
  return extract_clusters(order.ordering, order.reachability, order.core_distances, eps, num_clusters);
}

/// Raises max epsilon from start_eps in fixed steps until at least one cluster
/// appears. All-noise with used_eps = cap when the cap is reached first.
inline ClusterResult adaptive_cluster(std::span<const Eigen::Vector2d> points, const AdaptiveSchedule& schedule,
                                      int min_samples) {
  if (points.empty()) throw DataError("adaptive_cluster: empty input");
  if (!(schedule.start_eps > 0) || !(schedule.step > 0) || schedule.cap < schedule.start_eps) {
    throw ConfigError("adaptive_cluster: invalid epsilon schedule");
  }
  ClusterResult res;
  for (int k = 0;; ++k) {
    const double eps = schedule.start_eps + k * schedule.step;
    if (eps > schedule.cap * (1 + 1e-12)) break;
    OpticsOrder order = optics_order(points, {min_samples, eps});
    int count = 0;
    auto labels = extract_clusters(order, eps, &count);
    res.ordering = std::move(order.ordering);
    res.reachability = std::move(order.reachability);
    if (count > 0) {
      res.labels = std::move(labels);
      res.num_clusters = count;
      res.used_eps = eps;
      return res;
    }
  }
  res.labels.assign(points.size(), kNoise);
  res.num_clusters = 0;
  res.used_eps = schedule.cap;
  return res;
}

}  // namespace ecseg::clustering
