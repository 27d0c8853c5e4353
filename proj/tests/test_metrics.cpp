#include <gtest/gtest.h>

#include <random>

#include "ecseg/metrics.hpp"
#include "oracles.hpp"

using namespace ecseg;
using namespace ecseg::metrics;
using L = std::vector<std::uint8_t>;

namespace {

L random_labels(std::mt19937_64& rng, int n, double switch_p) {
  std::bernoulli_distribution sw(switch_p);
  std::uniform_int_distribution<int> bit(0, 1);
  L x{static_cast<std::uint8_t>(bit(rng))};
  for (int i = 1; i < n; ++i) x.push_back(sw(rng) ? 1 - x.back() : x.back());
  return x;
}

L span_labels(int n, int from, int to) {
  L x(n, 0);
  for (int i = from; i <= to; ++i) x[i] = 1;
  return x;
}

}  // namespace

TEST(Segments, Examples) {
  EXPECT_EQ(segment(L{1, 1, 0, 1}).size(), 3u);
  EXPECT_EQ(segment(L{0, 0, 0}).size(), 1u);
  EXPECT_THROW(segment(L{}), DataError);
}

TEST(Segments, ReconstructRoundTrip) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const auto x = random_labels(rng, 1 + i % 97, 0.2);
    const auto s = segment(x);
    EXPECT_EQ(reconstruct(s), x);
  }
}

TEST(Accuracy, Examples) {
  EXPECT_DOUBLE_EQ(framewise_accuracy(L{1, 0, 1}, L{1, 0, 1}), 100);
  EXPECT_DOUBLE_EQ(framewise_accuracy(L{1, 0, 1}, L{0, 1, 0}), 0);
  EXPECT_DOUBLE_EQ(framewise_accuracy(L{1, 0, 1, 1}, L{1, 1, 1, 0}), 50);
  EXPECT_THROW(framewise_accuracy(L{1}, L{1, 0}), DataError);
}

TEST(Edit, Examples) {
  EXPECT_DOUBLE_EQ(edit_score(L{0, 1, 1, 0}, L{0, 1, 1, 0}), 100);
  // gt segments [1,0,1], pred segments [1,0]
  EXPECT_NEAR(edit_score(L{1, 1, 0, 0, 0}, L{1, 0, 0, 0, 1}), 100.0 * 2 / 3, 1e-9);
  // 100 segments against 1: distance 99 over a normaliser of 100.
  L alt(100), single(100, 1);
  for (int i = 0; i < 100; ++i) alt[i] = i % 2;
  EXPECT_NEAR(edit_score(alt, single), 1.0, 1e-9);
  EXPECT_NEAR(edit_score(alt, single), oracle::edit_score_oracle(alt, single), 1e-9);
}

TEST(Edit, MatchesRecursiveLevenshtein) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> len(1, 60);
  for (int i = 0; i < 1000; ++i) {
    const int n = len(rng);
    // Segment strings stay short so the exponential oracle remains cheap.
    const auto a = random_labels(rng, n, 0.12);
    const auto b = random_labels(rng, n, 0.12);
    if (oracle::runs(a).size() > 9 || oracle::runs(b).size() > 9) continue;
    EXPECT_NEAR(edit_score(a, b), oracle::edit_score_oracle(a, b), 1e-9) << i;
  }
}

TEST(Edit, Symmetric) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto a = random_labels(rng, 50, 0.1), b = random_labels(rng, 50, 0.1);
    EXPECT_DOUBLE_EQ(edit_score(a, b), edit_score(b, a));
  }
}

TEST(F1, IdenticalIsHundredAtAllOverlaps) {
  const L x{0, 0, 1, 1, 1, 0, 1};
  for (double k : kOverlaps) EXPECT_DOUBLE_EQ(f1_at(x, x, k), 100);
}

TEST(F1, IouNineThirteenths) {
  const auto gt = span_labels(40, 10, 20);
  const auto pred = span_labels(40, 12, 22);
  const auto segs_p = segment(pred), segs_g = segment(gt);
  EXPECT_NEAR(segment_iou(segs_p[1], segs_g[1]), 9.0 / 13.0, 1e-12);
  for (double k : {0.25, 0.5}) {
    const auto c = segment_counts(pred, gt, k);
    // background 0..11 vs 0..9 (IoU 10/12), 1-segment, tail 23..39 vs 21..39 (17/19): all TP
    EXPECT_EQ(c.tp, 3u) << k;
    EXPECT_EQ(c.fp, 0u);
    EXPECT_EQ(c.fn, 0u);
  }
  const auto c = segment_counts(pred, gt, 0.75);
  EXPECT_EQ(c.tp, 2u);
  EXPECT_EQ(c.fp, 1u);
  EXPECT_EQ(c.fn, 1u);
}

TEST(F1, HandCountedFragments) {
  // gt: one positive segment 0..9 in 20 frames; pred splits it in two.
  const auto gt = span_labels(20, 0, 9);
  L pred = gt;
  pred[5] = 0;
  // pred segments: 1[0..4] 0[5] 1[6..9] 0[10..19]
  const auto c = segment_counts(pred, gt, 0.1);
  EXPECT_EQ(c.tp, 2u);  // 1[0..4] (IoU .5) and 0[10..19]
  EXPECT_EQ(c.fp, 2u);  // 0[5] overlaps nothing of label 0 after the tail is taken; 1[6..9] finds gt taken
  EXPECT_EQ(c.fn, 0u);
  EXPECT_NEAR(f1_at(pred, gt, 0.1), 100.0 * 2 * 0.5 * 1.0 / 1.5, 1e-9);
}

TEST(F1, MonotoneInOverlap) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 300; ++i) {
    const auto a = random_labels(rng, 80, 0.08), b = random_labels(rng, 80, 0.08);
    EXPECT_GE(f1_at(a, b, 0.1), f1_at(a, b, 0.25));
    EXPECT_GE(f1_at(a, b, 0.25), f1_at(a, b, 0.5));
  }
}

TEST(Report, FrameWeightedAccuracyAndFilter) {
  std::mt19937_64 rng(5);
  std::vector<L> preds, gts;
  for (int n : {50, 100, 200, 1600, 2000}) {
    preds.push_back(random_labels(rng, n, 0.05));
    gts.push_back(random_labels(rng, n, 0.05));
  }
  std::vector<SequencePair> pairs;
  double hits = 0, frames = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    pairs.push_back({"s" + std::to_string(i), preds[i], gts[i]});
    hits += framewise_accuracy(preds[i], gts[i]) * preds[i].size() / 100.0;
    frames += preds[i].size();
  }
  const auto all = report(pairs, 25);
  EXPECT_FALSE(all.empty);
  EXPECT_EQ(all.sequences, 5u);
  EXPECT_NEAR(all.accuracy, 100 * hits / frames, 1e-9);
  const auto long_only = report(pairs, 25, 60.0);  // > 60 s = > 1500 frames
  EXPECT_EQ(long_only.sequences, 2u);
  EXPECT_EQ(long_only.frames, 3600u);
  const auto none = report(pairs, 25, 1000.0);
  EXPECT_TRUE(none.empty);
  EXPECT_EQ(none.sequences, 0u);
}

TEST(Report, IdenticalIsHundred) {
  std::mt19937_64 rng(6);
  const auto x = random_labels(rng, 300, 0.03);
  std::vector<SequencePair> pairs{{"a", x, x}};
  const auto r = report(pairs, 25);
  EXPECT_DOUBLE_EQ(r.accuracy, 100);
  EXPECT_DOUBLE_EQ(r.edit, 100);
  for (double f : r.f1) EXPECT_DOUBLE_EQ(f, 100);
}
