#pragma once

// Segmentation metrics: framewise accuracy, segmental edit score and F1@k,
// plus aggregation over tracklets with an optional minimum-length filter.

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ecseg/errors.hpp"

namespace ecseg::metrics {

using Labels = std::span<const std::uint8_t>;

struct Segment {
  int label = 0;
  std::int64_t start = 0;
  std::int64_t end = 0;  // inclusive
  std::int64_t length() const { return end - start + 1; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

inline constexpr std::array<double, 3> kOverlaps{0.10, 0.25, 0.50};

inline std::vector<Segment> segment(Labels labels) {
  if (labels.empty()) throw DataError("segment: empty label sequence");
  std::vector<Segment> out;
  std::int64_t start = 0;
  const auto n = static_cast<std::int64_t>(labels.size());
  for (std::int64_t i = 1; i <= n; ++i) {
    if (i == n || labels[i] != labels[start]) {
      out.push_back({labels[start], start, i - 1});
      start = i;
    }
  }
  return out;
}

inline std::vector<std::uint8_t> reconstruct(std::span<const Segment> segments) {
  std::vector<std::uint8_t> out;
  for (const auto& s : segments) out.insert(out.end(), static_cast<std::size_t>(s.length()), static_cast<std::uint8_t>(s.label));
  return out;
}

namespace detail {
inline void require_equal_length(Labels a, Labels b, const char* what) {
  if (a.size() != b.size()) throw DataError(std::string(what) + ": length mismatch");
  if (a.empty()) throw DataError(std::string(what) + ": empty input");
}
}  // namespace detail

inline double framewise_accuracy(Labels pred, Labels gt) {
  detail::require_equal_length(pred, gt, "framewise_accuracy");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == gt[i];
  return 100.0 * static_cast<double>(hits) / static_cast<double>(pred.size());
}

/// Unit-cost Levenshtein distance between two label strings.
inline std::size_t levenshtein(std::span<const int> a, std::span<const int> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline std::vector<int> segment_labels(Labels labels) {
  std::vector<int> out;
  for (const auto& s : segment(labels)) out.push_back(s.label);
  return out;
}

inline double edit_score(Labels pred, Labels gt) {
  detail::require_equal_length(pred, gt, "edit_score");
  const auto p = segment_labels(pred);
  const auto g = segment_labels(gt);
  const double dist = static_cast<double>(levenshtein(p, g));
  const double norm = static_cast<double>(std::max(p.size(), g.size()));
  return std::max(0.0, (1.0 - dist / norm) * 100.0);
}

struct SegmentCounts {
  std::size_t tp = 0, fp = 0, fn = 0;
  SegmentCounts& operator+=(const SegmentCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
};

inline double segment_iou(const Segment& a, const Segment& b) {
  const auto inter = std::max<std::int64_t>(0, std::min(a.end, b.end) - std::max(a.start, b.start) + 1);
  const auto uni = a.length() + b.length() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

/// Segment matching at overlap k: a predicted segment is a true positive when
/// its IoU with the best still-unmatched gt segment of the same label exceeds k.
inline SegmentCounts segment_counts(Labels pred, Labels gt, double k) {
  detail::require_equal_length(pred, gt, "f1_at");
  const auto ps = segment(pred);
  const auto gs = segment(gt);
  std::vector<char> matched(gs.size(), 0);
  SegmentCounts c;
  for (const auto& p : ps) {
    double best = -1;
    std::size_t best_idx = 0;
    for (std::size_t g = 0; g < gs.size(); ++g) {
      if (matched[g] || gs[g].label != p.label) continue;
      const double iou = segment_iou(p, gs[g]);
      if (iou > best) {
        best = iou;
        best_idx = g;
      }
    }
    if (best > k) {
      ++c.tp;
      matched[best_idx] = 1;
    } else {
      ++c.fp;
    }
  }
  c.fn = gs.size() - static_cast<std::size_t>(std::count(matched.begin(), matched.end(), 1));
  return c;
}

inline double f1_from_counts(const SegmentCounts& c) {
  const double tp = static_cast<double>(c.tp);
  if (c.tp == 0) return 0.0;
  const double precision = tp / static_cast<double>(c.tp + c.fp);
  const double recall = tp / static_cast<double>(c.tp + c.fn);
  return 100.0 * 2.0 * precision * recall / (precision + recall);
}

inline double f1_at(Labels pred, Labels gt, double k) { return f1_from_counts(segment_counts(pred, gt, k)); }

// ---------------------------------------------------------------------------
// Aggregate report

struct SequencePair {
  std::string id;
  std::span<const std::uint8_t> pred;
  std::span<const std::uint8_t> gt;
};

struct MetricsReport {
  bool empty = true;
  std::size_t sequences = 0;
  std::size_t frames = 0;
  double accuracy = 0;                 // framewise over all frames
  double edit = 0;                     // mean over sequences
  std::array<double, 3> f1{0, 0, 0};   // micro over pooled segment counts, at kOverlaps
  std::optional<double> min_length_s;  // filter applied (sequences strictly longer)
};

inline MetricsReport report(std::span<const SequencePair> pairs, double fps, std::optional<double> min_length_s = {}) {
  MetricsReport r;
  r.min_length_s = min_length_s;
  std::size_t hits = 0;
  double edit_sum = 0;
  std::array<SegmentCounts, 3> counts{};
  for (const auto& p : pairs) {
    detail::require_equal_length(p.pred, p.gt, "report");
    if (min_length_s && !(static_cast<double>(p.gt.size()) / fps > *min_length_s)) continue;
    ++r.sequences;
    r.frames += p.gt.size();
    for (std::size_t i = 0; i < p.gt.size(); ++i) hits += p.pred[i] == p.gt[i];
    edit_sum += edit_score(p.pred, p.gt);
    for (std::size_t k = 0; k < kOverlaps.size(); ++k) counts[k] += segment_counts(p.pred, p.gt, kOverlaps[k]);
  }
  if (r.sequences == 0) return r;
  r.empty = false;
  r.accuracy = 100.0 * static_cast<double>(hits) / static_cast<double>(r.frames);
  r.edit = edit_sum / static_cast<double>(r.sequences);
  for (std::size_t k = 0; k < kOverlaps.size(); ++k) r.f1[k] = f1_from_counts(counts[k]);
  return r;
}

}  // namespace ecseg::metrics
