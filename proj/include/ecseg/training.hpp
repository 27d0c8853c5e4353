#pragma once

// Supervised training of the segmentation network on tracklet labels, the
// iterative relabel-and-retrain loop, and linear SVM frame classifiers.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ecseg/errors.hpp"
#include "ecseg/metrics.hpp"
#include "ecseg/random.hpp"
#include "ecseg/tcnnet.hpp"

namespace ecseg::training {

using tcn::Matrix;
using LabelVec = std::vector<std::uint8_t>;

struct TrainConfig {
  double lr = 0.0005;
  int epochs_per_iteration = 50;
  int iterations = 4;
  double val_fraction = 0.2;
  int batch_size = 1;  // tracklets per optimiser step
  std::uint64_t seed = 0;
  double collapse_fraction = 0.95;

  void validate() const {
    if (iterations < 1) throw ConfigError("train: iterations must be >= 1");
    if (!(val_fraction > 0 && val_fraction < 1)) throw ConfigError("train: val_fraction must be in (0, 1)");
    if (epochs_per_iteration < 1 || batch_size != 1) throw ConfigError("train: epochs >= 1 and batch_size == 1 required");
    if (!(lr > 0)) throw ConfigError("train: lr must be positive");
  }
};

/// One tracklet: features (D_f x I), its training labels and optional ground truth.
struct Sample {
  std::string id;
  Matrix features;
  LabelVec labels;
  std::optional<LabelVec> gt;
};

struct EpochRecord {
  int iteration = 1;
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_accuracy = 0;  // against the labels being trained on
  std::optional<double> val_gt_accuracy;
  std::optional<double> val_gt_edit;
};

struct Split {
  std::vector<std::size_t> train, val;
};

struct TrainResult {
  tcn::TcnParameters params;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  Split split;
};

/// Seeded shuffle of sample indices into disjoint train/val sets covering all samples.
inline Split split_samples(std::size_t n, double val_fraction, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, "train/split"));
  std::shuffle(idx.begin(), idx.end(), rng);
  std::size_t n_val = n >= 2 ? static_cast<std::size_t>(std::lround(val_fraction * static_cast<double>(n))) : 0;
  if (n >= 2) n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  Split s;
  s.val.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

namespace detail {

inline void check_samples(std::span<const Sample> samples, const tcn::NetConfig& net) {
  if (samples.empty()) throw DataError("train: empty dataset");
  for (const auto& s : samples) {
    if (s.features.rows() != net.input_dim) throw DataError("train: feature dimension mismatch in '" + s.id + "'");
    if (static_cast<std::size_t>(s.features.cols()) != s.labels.size() || s.labels.empty()) {
      throw DataError("train: features and labels differ in length for '" + s.id + "'");
    }
    if (s.gt && s.gt->size() != s.labels.size()) throw DataError("train: ground truth length mismatch in '" + s.id + "'");
  }
}

}  // namespace detail

/// Trains a freshly initialised network for one iteration; returns the
/// parameters of the epoch with the best validation framewise accuracy.
inline TrainResult train_once(std::span<const Sample> samples, const tcn::NetConfig& net, const TrainConfig& cfg,
                              int iteration = 1, const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  detail::check_samples(samples, net);
  TrainResult res;
  res.split = split_samples(samples.size(), cfg.val_fraction, cfg.seed);
  const std::string iter_tag = "iter" + std::to_string(iteration);
  tcn::TcnParameters params = tcn::init(net, derive_seed(cfg.seed, "train/init/" + iter_tag));
  tcn::AdamState adam;
  std::mt19937_64 order_rng(derive_seed(cfg.seed, "train/order/" + iter_tag));
  const tcn::AdamOptions adam_opt{cfg.lr};

  // With a single sample there is nothing to validate on; select on training data.
  const auto& eval_set = res.split.val.empty() ? res.split.train : res.split.val;
  double best_acc = -1;
  std::vector<std::size_t> order = res.split.train;
  for (int epoch = 1; epoch <= cfg.epochs_per_iteration; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double train_loss = 0;
    for (std::size_t i : order) {
      auto lg = tcn::loss_and_gradients(params, samples[i].features, samples[i].labels);
      train_loss += lg.loss.total;
      tcn::adam_step(params, lg.gradients, adam, adam_opt);
    }
    EpochRecord rec;
    rec.iteration = iteration;
    rec.epoch = epoch;
    rec.train_loss = train_loss / static_cast<double>(order.size());
    std::size_t hits = 0, frames = 0, gt_hits = 0, gt_frames = 0;
    double edit_sum = 0;
    std::size_t gt_count = 0;
    for (std::size_t i : eval_set) {
      const auto fwd = tcn::forward(params, samples[i].features);
      rec.val_loss += tcn::loss(fwd.logits, samples[i].labels, net).total;
      const auto pred = tcn::predict(params, samples[i].features);
      for (std::size_t t = 0; t < pred.size(); ++t) hits += pred[t] == samples[i].labels[t];
      frames += pred.size();
      if (samples[i].gt) {
        for (std::size_t t = 0; t < pred.size(); ++t) gt_hits += pred[t] == (*samples[i].gt)[t];
        gt_frames += pred.size();
        edit_sum += metrics::edit_score(pred, *samples[i].gt);
        ++gt_count;
      }
    }
    rec.val_loss /= static_cast<double>(eval_set.size());
    rec.val_accuracy = 100.0 * static_cast<double>(hits) / static_cast<double>(frames);
    if (gt_count > 0) {
      rec.val_gt_accuracy = 100.0 * static_cast<double>(gt_hits) / static_cast<double>(gt_frames);
      rec.val_gt_edit = edit_sum / static_cast<double>(gt_count);
    }
    if (rec.val_accuracy > best_acc) {
      best_acc = rec.val_accuracy;
      res.best_epoch = epoch;
      res.params = params;
    }
    if (on_epoch) on_epoch(rec);
    res.history.push_back(rec);
  }
  return res;
}

struct IterationOutcome {
  TrainResult result;
  std::vector<LabelVec> labels;  // labels the iteration was trained on, per sample
};

struct IterativeResult {
  tcn::TcnParameters final_params;
  std::vector<IterationOutcome> iterations;
};

inline double majority_fraction(std::span<const LabelVec> labels) {
  std::size_t ones = 0, total = 0;
  for (const auto& l : labels) {
    ones += static_cast<std::size_t>(std::count(l.begin(), l.end(), 1));
    total += l.size();
  }
  if (total == 0) return 1.0;
  const double pos = static_cast<double>(ones) / static_cast<double>(total);
  return std::max(pos, 1.0 - pos);
}

/// Iteration 1 trains on the given labels; iteration q > 1 trains a fresh
/// network on the previous model's predictions for every sample.
inline IterativeResult iterative_train(std::vector<Sample> samples, const tcn::NetConfig& net, const TrainConfig& cfg,
                                       const std::function<void(int, const IterationOutcome&)>& on_iteration = {},
                                       const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  IterativeResult out;
  for (int q = 1; q <= cfg.iterations; ++q) {
    if (q > 1) {
      for (auto& s : samples) s.labels = tcn::predict(out.final_params, s.features);
      std::vector<LabelVec> current;
      for (const auto& s : samples) current.push_back(s.labels);
      const double major = majority_fraction(current);
      if (major > cfg.collapse_fraction) {
        throw CollapseError("iteration " + std::to_string(q) + ": pseudo-labels collapsed to one class on " +
                            std::to_string(100.0 * major) + "% of frames");
      }
    }
    IterationOutcome it;
    for (const auto& s : samples) it.labels.push_back(s.labels);
    it.result = train_once(samples, net, cfg, q, on_epoch);
    out.final_params = it.result.params;
    if (on_iteration) on_iteration(q, it);
    out.iterations.push_back(std::move(it));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear SVM baseline

struct SvmModel {
  Eigen::VectorXd w;
  double b = 0;

  double decision(const Eigen::VectorXd& x) const { return w.dot(x) + b; }
  std::uint8_t predict(const Eigen::VectorXd& x) const { return decision(x) > 0 ? 1 : 0; }
};

struct SvmConfig {
  double lambda = 1e-4;  // L2 weight
  double eta0 = 0.1;     // initial step
  int epochs = 20;
  std::uint64_t seed = 0;
};

/// Regularised hinge objective: lambda/2 |w|^2 + mean max(0, 1 - y (w.x + b)), y in {-1, +1}.
inline double svm_objective(const SvmModel& m, const Matrix& X, std::span<const std::uint8_t> labels, double lambda) {
  double loss = 0;
  for (Eigen::Index i = 0; i < X.cols(); ++i) {
    const double y = labels[static_cast<std::size_t>(i)] ? 1.0 : -1.0;
    loss += std::max(0.0, 1.0 - y * m.decision(X.col(i)));
  }
  return 0.5 * lambda * m.w.squaredNorm() + loss / static_cast<double>(X.cols());
}

/// A subgradient of svm_objective: (d/dw, d/db).
inline std::pair<Eigen::VectorXd, double> svm_subgradient(const SvmModel& m, const Matrix& X,
                                                          std::span<const std::uint8_t> labels, double lambda) {
  Eigen::VectorXd gw = lambda * m.w;
  double gb = 0;
  const double n = static_cast<double>(X.cols());
  for (Eigen::Index i = 0; i < X.cols(); ++i) {
    const double y = labels[static_cast<std::size_t>(i)] ? 1.0 : -1.0;
    if (y * m.decision(X.col(i)) < 1.0) {
      gw -= y * X.col(i) / n;
      gb -= y / n;
    }
  }
  return {gw, gb};
}

/// Online SGD on the hinge objective, one sample per step, step eta0 / (1 + lambda eta0 t).
inline SvmModel train_svm(const Matrix& X, std::span<const std::uint8_t> labels, const SvmConfig& cfg) {
  if (X.cols() == 0) throw DataError("train_svm: empty input");
  if (static_cast<std::size_t>(X.cols()) != labels.size()) throw DataError("train_svm: label length mismatch");
  SvmModel m{Eigen::VectorXd::Zero(X.rows()), 0.0};
  std::vector<Eigen::Index> order(static_cast<std::size_t>(X.cols()));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(cfg.seed, "svm/order"));
  std::int64_t t = 0;
  for (int e = 0; e < cfg.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index i : order) {
      const double eta = cfg.eta0 / (1.0 + cfg.lambda * cfg.eta0 * static_cast<double>(t++));
      const double y = labels[static_cast<std::size_t>(i)] ? 1.0 : -1.0;
      const bool violated = y * m.decision(X.col(i)) < 1.0;
      m.w *= (1.0 - eta * cfg.lambda);
      if (violated) {
        m.w += eta * y * X.col(i);
        m.b += eta * y;
      }
    }
  }
  return m;
}

inline LabelVec svm_predict(const SvmModel& m, const Matrix& X) {
  LabelVec out(static_cast<std::size_t>(X.cols()));
  for (Eigen::Index i = 0; i < X.cols(); ++i) out[static_cast<std::size_t>(i)] = m.predict(X.col(i));
  return out;
}

}  // namespace ecseg::training
