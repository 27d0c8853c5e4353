#pragma once

// Command-line front end. Each subcommand is a stage function over files;
// `pipeline` chains the stages with the same functions, so artifacts match
// running the stages one by one.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ecseg/config.hpp"
#include "ecseg/datamodel.hpp"
#include "ecseg/labeling.hpp"
#include "ecseg/metrics.hpp"
#include "ecseg/simulator.hpp"
#include "ecseg/tcnnet.hpp"
#include "ecseg/training.hpp"

namespace ecseg::cli {

namespace fs = std::filesystem;

struct Context {
  PipelineConfig config;
  int jobs = 1;
  bool quiet = false;
  std::ostream* out = &std::cout;  // tables
  std::ostream* log = &std::cerr;  // progress and resolved config

  Json producer(const std::string& command) const {
    return Json{{"command", "ecseg " + command}, {"config_hash", config_hash(config)}, {"seed", config.seed}};
  }
  void info(const std::string& msg) const {
    if (!quiet) *log << "[ecseg] " << msg << '\n';
  }
};

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception by
/// index is rethrown so failures do not depend on scheduling.
template <class Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  const auto workers = static_cast<std::size_t>(std::clamp<long long>(jobs, 1, static_cast<long long>(std::max<std::size_t>(n, 1))));
  std::vector<std::exception_ptr> errors(n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---------------------------------------------------------------------------
// Shared helpers

/// Held-out videos: a seeded shuffle of the sorted ids; at least one video on
/// each side when there are two or more.
inline std::set<std::string> test_videos(std::vector<std::string> ids, double fraction, std::uint64_t seed) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() < 2) return {};
  std::mt19937_64 rng(derive_seed(seed, "split/test"));
  std::shuffle(ids.begin(), ids.end(), rng);
  auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(ids.size())));
  k = std::clamp<std::size_t>(k, 1, ids.size() - 1);
  return {ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k)};
}

inline std::vector<std::string> video_ids(const FrameSet& fs) {
  std::vector<std::string> ids;
  for (const auto& v : split_by_video(fs.frames)) ids.push_back(v.video_id);
  return ids;
}

inline std::map<std::string, LabelSequence> by_id(std::vector<LabelSequence> labels) {
  std::map<std::string, LabelSequence> out;
  for (auto& l : labels) {
    const auto id = l.id;
    if (!out.emplace(id, std::move(l)).second) throw DataError("duplicate label record for '" + id + "'");
  }
  return out;
}

inline tcn::Matrix tracklet_features(const VideoFrames& video, const Tracklet& t, int feature_dim) {
  if (t.end_idx >= static_cast<std::int64_t>(video.frames.size())) {
    throw DataError("tracklet '" + t.tracklet_id + "' exceeds video '" + video.video_id + "'");
  }
  tcn::Matrix x(feature_dim, t.frame_count);
  for (std::int64_t j = 0; j < t.frame_count; ++j) {
    const auto& f = video.frames[static_cast<std::size_t>(t.start_idx + j)];
    if (!f.feature) throw DataError("frame " + std::to_string(f.frame_idx) + " of '" + video.video_id + "' has no feature");
    x.col(j) = *f.feature;
  }
  return x;
}

inline std::vector<std::uint8_t> slice(const LabelSequence& video_labels, const Tracklet& t) {
  if (t.end_idx >= static_cast<std::int64_t>(video_labels.labels.size())) {
    throw DataError("tracklet '" + t.tracklet_id + "' out of range of labels for '" + video_labels.id + "'");
  }
  return {video_labels.labels.begin() + t.start_idx, video_labels.labels.begin() + t.end_idx + 1};
}

/// Training samples for tracklets of the selected videos. Labels come from
/// video-level label sets; ground truth is attached when available.
inline std::vector<training::Sample> build_samples(const FrameSet& fs, std::span<const Tracklet> tracklets,
                                                   const std::map<std::string, LabelSequence>& labels,
                                                   const std::map<std::string, LabelSequence>* gt,
                                                   const std::function<bool(const std::string&)>& keep_video) {
  std::map<std::string, VideoFrames> videos;
  for (const auto& v : split_by_video(fs.frames)) videos.emplace(v.video_id, v);
  std::vector<training::Sample> out;
  for (const auto& t : tracklets) {
    if (!keep_video(t.video_id)) continue;
    auto v = videos.find(t.video_id);
    if (v == videos.end()) throw DataError("tracklet '" + t.tracklet_id + "' refers to unknown video '" + t.video_id + "'");
    training::Sample s;
    s.id = t.tracklet_id;
    s.features = tracklet_features(v->second, t, fs.header.feature_dim);
    if (auto l = labels.find(t.video_id); l != labels.end()) {
      s.labels = slice(l->second, t);
    } else {
      s.labels.assign(static_cast<std::size_t>(t.frame_count), 0);
    }
    if (gt) {
      if (auto g = gt->find(t.video_id); g != gt->end()) s.gt = slice(g->second, t);
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline void log_config(const Context& ctx) {
  if (ctx.quiet) return;
  *ctx.log << "[ecseg] resolved config (hash " << config_hash(ctx.config) << "):\n";
  for (const auto& line : config_lines(ctx.config)) *ctx.log << "[ecseg]   " << line << '\n';
}

// ---------------------------------------------------------------------------
// Stages

inline void stage_simulate(const Context& ctx, const fs::path& out_dir) {
  auto d = ctx.config.sim;
  std::vector<simulator::DatasetVideo> videos(static_cast<std::size_t>(d.n_videos));
  parallel_for(videos.size(), ctx.jobs,
               [&](std::size_t i) { videos[i] = simulator::dataset_video(d, static_cast<int>(i)); });
  simulator::Dataset ds{simulator::header_for(d.base), std::move(videos)};
  simulator::write_dataset(ds, out_dir, ctx.producer("simulate"));
  ctx.info("simulate: wrote " + std::to_string(ds.videos.size()) + " videos to " + out_dir.string());
}

inline labeling::Geometry parse_geometry(const std::string& g) {
  if (g == "cylinder") return labeling::Geometry::cylinder;
  if (g == "camera") return labeling::Geometry::camera_plane;
  throw ConfigError("unknown geometry '" + g + "' (expected cylinder or camera)");
}

inline void stage_discover(const Context& ctx, const std::string& frames_path, labeling::Geometry geometry,
                           const std::string& out_path) {
  const auto fs = load_frames(frames_path);
  const auto videos = split_by_video(fs.frames);
  auto cfg = ctx.config.discovery;
  cfg.geometry = geometry;
  std::vector<LabelSequence> labels(videos.size());
  std::vector<double> used_eps(videos.size());
  parallel_for(videos.size(), ctx.jobs, [&](std::size_t i) {
    auto r = labeling::discover_targets(videos[i], fs.header, cfg);
    used_eps[i] = r.cluster.used_eps;
    labels[i] = std::move(r.pseudo_labels);
  });
  write_labels(labels, out_path, ctx.producer("discover"));
  std::size_t pos = 0, total = 0;
  for (const auto& l : labels) {
    pos += static_cast<std::size_t>(std::count(l.labels.begin(), l.labels.end(), 1));
    total += l.labels.size();
  }
  std::ostringstream msg;
  msg << "discover: " << videos.size() << " videos, positive rate "
      << (total ? 100.0 * static_cast<double>(pos) / static_cast<double>(total) : 0.0) << "%";
  ctx.info(msg.str());
}

inline void stage_tracklets(const Context& ctx, const std::string& frames_path, const std::string& refs_path,
                            const std::string& out_path) {
  const auto fs = load_frames(frames_path);
  const auto videos = split_by_video(fs.frames);
  std::map<std::string, std::vector<Eigen::VectorXd>> refs;
  for (auto& [id, r] : simulator::load_references(refs_path)) refs[id] = std::move(r);
  std::vector<std::vector<Tracklet>> per_video(videos.size());
  parallel_for(videos.size(), ctx.jobs, [&](std::size_t i) {
    auto it = refs.find(videos[i].video_id);
    if (it == refs.end()) throw DataError("no reference embeddings for video '" + videos[i].video_id + "'");
    per_video[i] = labeling::extract_tracklets(videos[i], it->second, ctx.config.tracklet);
  });
  std::vector<Tracklet> all;
  for (auto& v : per_video) all.insert(all.end(), v.begin(), v.end());
  write_tracklets(all, out_path, ctx.producer("tracklets"));
  ctx.info("tracklets: " + std::to_string(all.size()) + " tracklets");
}

inline Json epoch_json(const training::EpochRecord& e) {
  Json j{{"iteration", e.iteration}, {"epoch", e.epoch},           {"train_loss", e.train_loss},
         {"val_loss", e.val_loss},   {"val_accuracy", e.val_accuracy}};
  if (e.val_gt_accuracy) j["val_gt_accuracy"] = *e.val_gt_accuracy;
  if (e.val_gt_edit) j["val_gt_edit"] = *e.val_gt_edit;
  return j;
}

inline fs::path checkpoint_path(const fs::path& dir, int q) { return dir / ("model_iter" + std::to_string(q) + ".ckpt"); }

/// Iterative TCN training on the tracklets of the training videos.
inline void stage_train(const Context& ctx, const std::string& frames_path, const std::string& tracklets_path,
                        const std::string& labels_path, const std::optional<std::string>& gt_path,
                        const fs::path& out_dir) {
  const auto fs = load_frames(frames_path);
  const auto tracklets = load_tracklets(tracklets_path);
  const auto labels = by_id(load_labels(labels_path));
  std::optional<std::map<std::string, LabelSequence>> gt;
  if (gt_path) gt = by_id(load_labels(*gt_path));
  const auto held_out = test_videos(video_ids(fs), ctx.config.test_fraction, ctx.config.seed);
  auto samples = build_samples(fs, tracklets, labels, gt ? &*gt : nullptr,
                               [&](const std::string& v) { return !held_out.count(v); });
  if (samples.empty()) throw DataError("train: no training tracklets");

  auto net = ctx.config.net;
  net.input_dim = fs.header.feature_dim;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());
  const auto producer = ctx.producer("train");

  auto history = ecseg::detail::open_out((out_dir / "history.jsonl").string());
  ecseg::detail::write_line(history, Json{{"format_version", kFormatVersion}, {"kind", "history"}, {"producer", producer}});

  ctx.info("train: " + std::to_string(samples.size()) + " tracklets from " +
           std::to_string(video_ids(fs).size() - held_out.size()) + " videos, " +
           std::to_string(ctx.config.train.iterations) + " iterations x " +
           std::to_string(ctx.config.train.epochs_per_iteration) + " epochs");
  auto on_epoch = [&](const training::EpochRecord& e) {
    ecseg::detail::write_line(history, epoch_json(e));
    history.flush();
    std::ostringstream msg;
    msg << "train: iter " << e.iteration << " epoch " << e.epoch << " loss " << e.train_loss << " val_acc "
        << e.val_accuracy;
    ctx.info(msg.str());
  };
  auto on_iteration = [&](int q, const training::IterationOutcome& it) {
    ecseg::detail::write_line(history, Json{{"iteration", q},
                                            {"selected_epoch", it.result.best_epoch},
                                            {"train_tracklets", it.result.split.train.size()},
                                            {"val_tracklets", it.result.split.val.size()}});
    Json meta{{"producer", producer}, {"selected_epoch", it.result.best_epoch}};
    tcn::save_checkpoint(it.result.params, checkpoint_path(out_dir, q).string(), q, meta);
    std::vector<LabelSequence> predicted;
    for (const auto& s : samples) {
      predicted.push_back({s.id, LabelOwner::tracklet, LabelSource::model_iter, q, tcn::predict(it.result.params, s.features)});
    }
    write_labels(predicted, (out_dir / ("labels_iter" + std::to_string(q) + ".jsonl")).string(), producer);
  };
  auto train_cfg = ctx.config.train;
  training::iterative_train(std::move(samples), net, train_cfg, on_iteration, on_epoch);
  if (!history) throw IoError("write failure on history.jsonl");
}

/// Predictions for tracklets of the held-out videos (or all videos).
inline void stage_predict(const Context& ctx, const std::string& frames_path, const std::string& tracklets_path,
                          const std::string& checkpoint, bool all_videos, const std::string& out_path) {
  const auto fs = load_frames(frames_path);
  const auto tracklets = load_tracklets(tracklets_path);
  auto expected = ctx.config.net;
  expected.input_dim = fs.header.feature_dim;
  const auto ck = tcn::load_checkpoint(checkpoint, expected);
  const auto held_out = test_videos(video_ids(fs), ctx.config.test_fraction, ctx.config.seed);
  const auto samples = build_samples(fs, tracklets, {}, nullptr,
                                     [&](const std::string& v) { return all_videos || held_out.count(v) > 0; });
  std::vector<LabelSequence> preds(samples.size());
  parallel_for(samples.size(), ctx.jobs, [&](std::size_t i) {
    preds[i] = {samples[i].id, LabelOwner::tracklet, LabelSource::model_iter, ck.iteration,
                tcn::predict(ck.params, samples[i].features)};
  });
  write_labels(preds, out_path, ctx.producer("predict"));
  ctx.info("predict: " + std::to_string(preds.size()) + " tracklets");
}

enum class BaselineKind { svm_dependent, svm_generic };

inline BaselineKind parse_baseline(const std::string& k) {
  if (k == "svm-dependent") return BaselineKind::svm_dependent;
  if (k == "svm-generic") return BaselineKind::svm_generic;
  throw ConfigError("unknown baseline '" + k + "' (expected svm-dependent or svm-generic)");
}

inline tcn::Matrix stack_columns(std::span<const training::Sample> samples, std::vector<std::uint8_t>& labels) {
  Eigen::Index cols = 0;
  for (const auto& s : samples) cols += s.features.cols();
  tcn::Matrix x(samples.empty() ? 0 : samples.front().features.rows(), cols);
  Eigen::Index c = 0;
  for (const auto& s : samples) {
    x.middleCols(c, s.features.cols()) = s.features;
    c += s.features.cols();
    labels.insert(labels.end(), s.labels.begin(), s.labels.end());
  }
  return x;
}

/// Framewise SVM detectors. Generic: one model on the training videos.
/// Dependent: one model per video on that video's own pseudo-labels.
inline void stage_baseline(const Context& ctx, BaselineKind kind, const std::string& frames_path,
                           const std::string& tracklets_path, const std::string& labels_path,
                           const std::string& out_path) {
  const auto fs = load_frames(frames_path);
  const auto tracklets = load_tracklets(tracklets_path);
  const auto labels = by_id(load_labels(labels_path));
  const auto held_out = test_videos(video_ids(fs), ctx.config.test_fraction, ctx.config.seed);
  const auto test = build_samples(fs, tracklets, labels, nullptr, [&](const std::string& v) { return held_out.count(v) > 0; });
  std::vector<LabelSequence> preds(test.size());
  if (kind == BaselineKind::svm_generic) {
    const auto train = build_samples(fs, tracklets, labels, nullptr, [&](const std::string& v) { return !held_out.count(v); });
    std::vector<std::uint8_t> y;
    const auto x = stack_columns(train, y);
    const auto model = training::train_svm(x, y, ctx.config.svm);
    for (std::size_t i = 0; i < test.size(); ++i) {
      preds[i] = {test[i].id, LabelOwner::tracklet, LabelSource::baseline, 0, training::svm_predict(model, test[i].features)};
    }
  } else {
    std::vector<std::string> vids(held_out.begin(), held_out.end());
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < test.size(); ++i) index[test[i].id] = i;
    parallel_for(vids.size(), ctx.jobs, [&](std::size_t k) {
      std::vector<training::Sample> own;
      for (const auto& t : tracklets) {
        if (t.video_id == vids[k] && index.count(t.tracklet_id)) own.push_back(test[index[t.tracklet_id]]);
      }
      if (own.empty()) return;
      std::vector<std::uint8_t> y;
      const auto x = stack_columns(own, y);
      auto cfg = ctx.config.svm;
      cfg.seed = derive_seed(cfg.seed, vids[k]);
      const auto model = training::train_svm(x, y, cfg);
      for (const auto& s : own) {
        preds[index.at(s.id)] = {s.id, LabelOwner::tracklet, LabelSource::baseline, 0, training::svm_predict(model, s.features)};
      }
    });
  }
  write_labels(preds, out_path, ctx.producer("baseline"));
  ctx.info("baseline: " + std::to_string(preds.size()) + " tracklets");
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalRow {
  std::optional<double> min_length_s;
  metrics::MetricsReport report;
};

inline std::string format_table(std::span<const EvalRow> rows) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-12s %6s %8s %9s %7s %7s %8s %7s\n", "subset", "seqs", "frames", "Accuracy", "Edit",
                "F1@0.1", "F1@0.25", "F1@0.5");
  os << buf;
  for (const auto& r : rows) {
    std::string name = "all";
    if (r.min_length_s) {
      std::snprintf(buf, sizeof buf, "> %g s", *r.min_length_s);
      name = buf;
    }
    if (r.report.empty) {
      std::snprintf(buf, sizeof buf, "%-12s %6d %8d %9s\n", name.c_str(), 0, 0, "(empty)");
    } else {
      std::snprintf(buf, sizeof buf, "%-12s %6zu %8zu %9.2f %7.2f %7.2f %8.2f %7.2f\n", name.c_str(), r.report.sequences,
                    r.report.frames, r.report.accuracy, r.report.edit, r.report.f1[0], r.report.f1[1], r.report.f1[2]);
    }
    os << buf;
  }
  return os.str();
}

inline Json row_json(const EvalRow& r) {
  Json j{{"min_length_s", r.min_length_s ? Json(*r.min_length_s) : Json(nullptr)}, {"empty", r.report.empty}};
  if (!r.report.empty) {
    j["sequences"] = r.report.sequences;
    j["frames"] = r.report.frames;
    j["accuracy"] = r.report.accuracy;
    j["edit"] = r.report.edit;
    j["f1@0.10"] = r.report.f1[0];
    j["f1@0.25"] = r.report.f1[1];
    j["f1@0.50"] = r.report.f1[2];
  }
  return j;
}

/// Compares predictions to ground truth. Tracklet-level predictions are
/// matched to the gt slice of their tracklet; video-level ones to the video.
inline std::vector<EvalRow> evaluate(const std::vector<LabelSequence>& pred, const std::vector<LabelSequence>& gt_list,
                                     const std::vector<Tracklet>* tracklets, double fps,
                                     std::span<const double> min_lengths) {
  const auto gt = by_id(gt_list);
  std::map<std::string, Tracklet> tr;
  if (tracklets) {
    for (const auto& t : *tracklets) tr.emplace(t.tracklet_id, t);
  }
  std::vector<std::vector<std::uint8_t>> gt_slices;
  gt_slices.reserve(pred.size());
  for (const auto& p : pred) {
    if (p.owner == LabelOwner::video) {
      auto g = gt.find(p.id);
      if (g == gt.end()) throw DataError("eval: no ground truth for video '" + p.id + "'");
      gt_slices.push_back(g->second.labels);
    } else {
      if (!tracklets) throw ConfigError("eval: tracklet-level predictions need --tracklets");
      auto t = tr.find(p.id);
      if (t == tr.end()) throw DataError("eval: unknown tracklet '" + p.id + "'");
      auto g = gt.find(t->second.video_id);
      if (g == gt.end()) throw DataError("eval: no ground truth for video '" + t->second.video_id + "'");
      gt_slices.push_back(slice(g->second, t->second));
    }
    if (gt_slices.back().size() != p.labels.size()) throw DataError("eval: length mismatch for '" + p.id + "'");
  }
  std::vector<metrics::SequencePair> pairs;
  for (std::size_t i = 0; i < pred.size(); ++i) pairs.push_back({pred[i].id, pred[i].labels, gt_slices[i]});
  std::vector<EvalRow> rows;
  rows.push_back({std::nullopt, metrics::report(pairs, fps)});
  for (double m : min_lengths) rows.push_back({m, metrics::report(pairs, fps, m)});
  return rows;
}

inline fs::path table_path(const fs::path& report) {
  fs::path p = report;
  p.replace_extension(".txt");
  return p;
}

inline std::vector<EvalRow> stage_eval(const Context& ctx, const std::string& pred_path, const std::string& gt_path,
                                       const std::optional<std::string>& tracklets_path, double fps,
                                       const std::vector<double>& min_lengths, const std::optional<std::string>& out_path) {
  const auto pred = load_labels(pred_path);
  const auto gt = load_labels(gt_path);
  std::optional<std::vector<Tracklet>> tracklets;
  if (tracklets_path) tracklets = load_tracklets(*tracklets_path);
  const auto rows = evaluate(pred, gt, tracklets ? &*tracklets : nullptr, fps, min_lengths);
  const auto table = format_table(rows);
  *ctx.out << table;
  if (out_path) {
    auto out = ecseg::detail::open_out(*out_path);
    ecseg::detail::write_line(out, Json{{"format_version", kFormatVersion},
                                        {"kind", "report"},
                                        {"accuracy", "framewise over all frames"},
                                        {"edit", "mean over sequences"},
                                        {"f1", "micro over pooled segments"},
                                        {"producer", ctx.producer("eval")}});
    for (const auto& r : rows) ecseg::detail::write_line(out, row_json(r));
    if (!out) throw IoError("write failure on '" + *out_path + "'");
    auto txt = ecseg::detail::open_out(table_path(*out_path).string());
    txt << table;
    if (!txt) throw IoError("write failure on '" + table_path(*out_path).string() + "'");
  }
  return rows;
}

/// Reads the fps from a frames file header.
inline double frames_fps(const std::string& frames_path) {
  auto in = ecseg::detail::open_in(frames_path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(frames_path + ": empty file");
  try {
    return header_from_json(Json::parse(line)).fps;
  } catch (const Json::exception& e) {
    throw DataError(frames_path + ":1: " + e.what());
  }
}

struct PipelinePaths {
  fs::path root;
  fs::path data() const { return root / "data"; }
  fs::path frames() const { return data() / "frames.jsonl"; }
  fs::path gt() const { return data() / "gt.jsonl"; }
  fs::path references() const { return data() / "references.jsonl"; }
  fs::path pseudo() const { return root / "pseudo_labels.jsonl"; }
  fs::path tracklets() const { return root / "tracklets.jsonl"; }
  fs::path train() const { return root / "train"; }
  fs::path predictions() const { return root / "predictions.jsonl"; }
  fs::path report() const { return root / "report.jsonl"; }
};

inline const std::vector<double> kDefaultMinLengths{4, 10, 30};

inline void stage_pipeline(const Context& ctx, const fs::path& root) {
  const PipelinePaths p{root};
  stage_simulate(ctx, p.data());
  stage_discover(ctx, p.frames().string(), labeling::Geometry::cylinder, p.pseudo().string());
  stage_tracklets(ctx, p.frames().string(), p.references().string(), p.tracklets().string());
  stage_train(ctx, p.frames().string(), p.tracklets().string(), p.pseudo().string(), p.gt().string(), p.train());
  stage_predict(ctx, p.frames().string(), p.tracklets().string(),
                checkpoint_path(p.train(), ctx.config.train.iterations).string(), false, p.predictions().string());
  stage_eval(ctx, p.predictions().string(), p.gt().string(), p.tracklets().string(), ctx.config.sim.base.fps,
             kDefaultMinLengths, p.report().string());
}

// ---------------------------------------------------------------------------
// Entry point

/// Exit codes: 0 ok, 2 config, 3 data, 4 training collapse, 5 I/O.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& log = std::cerr) {
  CLI::App app{"Unsupervised eye-contact segmentation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_help_all_flag("--help-all");

  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  bool quiet = false;
  app.add_option("--config", config_file, "key=value configuration file");
  app.add_option("--set", overrides, "override one config key (key=value); repeatable")->take_all();
  app.add_option("--seed", seed, "root seed (same as --set seed=N)");
  app.add_option("--jobs", jobs, "parallel workers across videos")->check(CLI::PositiveNumber);
  app.add_flag("--quiet", quiet, "suppress progress logging");

  std::string out_path, frames, refs, labels, tracklets, checkpoint, gt, pred, geometry = "cylinder", kind;
  std::optional<int> videos, iterations;
  std::vector<double> min_lengths;
  bool all_videos = false;

  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset directory");
  sim->add_option("--out", out_path, "output directory")->required();
  sim->add_option("--videos", videos, "number of videos");

  auto* disc = app.add_subcommand("discover", "per-video gaze target discovery (pseudo-labels)");
  disc->add_option("--frames", frames)->required();
  disc->add_option("--geometry", geometry)->check(CLI::IsMember({"cylinder", "camera"}));
  disc->add_option("--out", out_path)->required();

  auto* trk = app.add_subcommand("tracklets", "extract tracklets");
  trk->add_option("--frames", frames)->required();
  trk->add_option("--references", refs)->required();
  trk->add_option("--out", out_path)->required();

  auto* trn = app.add_subcommand("train", "iterative TCN training on pseudo-labels");
  trn->add_option("--frames", frames)->required();
  trn->add_option("--tracklets", tracklets)->required();
  trn->add_option("--labels", labels, "video-level pseudo-labels")->required();
  trn->add_option("--gt", gt, "optional ground truth for validation diagnostics");
  trn->add_option("--iterations", iterations);
  trn->add_option("--out", out_path, "output directory")->required();

  auto* prd = app.add_subcommand("predict", "predict tracklet labels with a checkpoint");
  prd->add_option("--frames", frames)->required();
  prd->add_option("--tracklets", tracklets)->required();
  prd->add_option("--checkpoint", checkpoint)->required();
  prd->add_flag("--all-videos", all_videos, "predict every video instead of the held-out ones");
  prd->add_option("--out", out_path)->required();

  auto* base = app.add_subcommand("baseline", "framewise SVM baselines");
  base->add_option("--kind", kind)->required()->check(CLI::IsMember({"svm-dependent", "svm-generic"}));
  base->add_option("--frames", frames)->required();
  base->add_option("--tracklets", tracklets)->required();
  base->add_option("--labels", labels)->required();
  base->add_option("--out", out_path)->required();

  auto* ev = app.add_subcommand("eval", "score predictions against ground truth");
  ev->add_option("--pred", pred)->required();
  ev->add_option("--gt", gt)->required();
  ev->add_option("--tracklets", tracklets);
  ev->add_option("--frames", frames, "frames file (for fps; default 25)");
  ev->add_option("--min-length", min_lengths, "report subsets longer than S seconds; repeatable")->take_all();
  ev->add_option("--out", out_path, "report file (a .txt table is written alongside)");

  auto* pipe = app.add_subcommand("pipeline", "simulate, discover, tracklets, train, predict and eval");
  pipe->add_option("--out", out_path, "output directory")->required();
  pipe->add_option("--videos", videos);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, log);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::config);
  }

  Context ctx;
  ctx.jobs = jobs;
  ctx.quiet = quiet;
  ctx.out = &out;
  ctx.log = &log;
  try {
    if (!config_file.empty()) apply_config_file(ctx.config, config_file);
    for (const auto& o : overrides) apply_assignment(ctx.config, o, "--set");
    if (seed) ctx.config.seed = *seed;
    if (videos) ctx.config.sim.n_videos = *videos;
    if (iterations) ctx.config.train.iterations = *iterations;
    propagate_seed(ctx.config);
    validate(ctx.config);
    log_config(ctx);

    if (sim->parsed()) {
      stage_simulate(ctx, out_path);
    } else if (disc->parsed()) {
      stage_discover(ctx, frames, parse_geometry(geometry), out_path);
    } else if (trk->parsed()) {
      stage_tracklets(ctx, frames, refs, out_path);
    } else if (trn->parsed()) {
      stage_train(ctx, frames, tracklets, labels, gt.empty() ? std::nullopt : std::optional(gt), out_path);
    } else if (prd->parsed()) {
      stage_predict(ctx, frames, tracklets, checkpoint, all_videos, out_path);
    } else if (base->parsed()) {
      stage_baseline(ctx, parse_baseline(kind), frames, tracklets, labels, out_path);
    } else if (ev->parsed()) {
      const double fps = frames.empty() ? 25.0 : frames_fps(frames);
      stage_eval(ctx, pred, gt, tracklets.empty() ? std::nullopt : std::optional(tracklets), fps, min_lengths,
                 out_path.empty() ? std::nullopt : std::optional(out_path));
    } else if (pipe->parsed()) {
      stage_pipeline(ctx, out_path);
    }
  } catch (const Error& e) {
    log << "ecseg: " << e.what() << '\n';
    return e.exit_code();
  } catch (const Json::exception& e) {
    log << "ecseg: malformed record: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::data);
  } catch (const std::filesystem::filesystem_error& e) {
    log << "ecseg: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::io);
  }
  return 0;
}

}  // namespace ecseg::cli
