#pragma once

// Per-video gaze target discovery (pseudo-labels), tracklet extraction and
// label assignment to tracklets.

#include <Eigen/Core>
#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ecseg/bodypose.hpp"
#include "ecseg/clustering.hpp"
#include "ecseg/datamodel.hpp"
#include "ecseg/gazegeom.hpp"

namespace ecseg::labeling {

enum class Geometry { cylinder, camera_plane };

struct DiscoveryConfig {
  Geometry geometry = Geometry::cylinder;
  bodypose::BodyModelParams body;
  bodypose::P6POptions p6p;
  double cylinder_radius_mm = 1000;
  clustering::AdaptiveSchedule schedule;
  double plane_scale = 0.1;  // plane mm -> clustering units
  int min_samples_floor = 5;
  double min_samples_fraction = 0.005;
};

struct DiscoveryResult {
  std::string video_id;
  std::vector<std::optional<gazegeom::PlanePoint2D>> plane_points;  // per frame
  clustering::ClusterResult cluster;                               // over frames that have a plane point
  LabelSequence pseudo_labels;
};

inline bodypose::CameraIntrinsics intrinsics_of(const FramesHeader& h) { return {h.focal(), h.principal()}; }

/// Body pose of one frame from its neck/shoulder keypoints, or nullopt when
/// keypoints are missing or the fit fails.
inline std::optional<bodypose::PoseEstimate> frame_pose(const FrameObservation& f, const bodypose::BodyModel3D& model,
                                                        const bodypose::CameraIntrinsics& K,
                                                        const bodypose::P6POptions& opt) {
  if (!f.keypoints_2d) return std::nullopt;
  try {
    const auto kp = bodypose::complete_keypoints(f.keypoints_2d->neck, f.keypoints_2d->l_shoulder,
                                                 f.keypoints_2d->r_shoulder, model.nose_ratio);
    return bodypose::solve_p6p(model, kp, K, opt);
  } catch (const DataError&) {
    return std::nullopt;
  }
}

inline DiscoveryResult discover_targets(const VideoFrames& video, const FramesHeader& header,
                                        const DiscoveryConfig& cfg) {
  const auto n = video.frames.size();
  DiscoveryResult res;
  res.video_id = video.video_id;
  res.plane_points.resize(n);
  res.pseudo_labels = {video.video_id, LabelOwner::video, LabelSource::cluster_pseudo, 0,
                       std::vector<std::uint8_t>(n, 0)};

  if (cfg.geometry == Geometry::cylinder) {
    const bool any_keypoints =
        std::any_of(video.frames.begin(), video.frames.end(), [](const auto& f) { return f.keypoints_2d.has_value(); });
    if (!any_keypoints) throw DataError("discover_targets: no frame of video '" + video.video_id + "' has keypoints");
    const auto model = bodypose::canonical_body_model(cfg.body);
    const auto K = intrinsics_of(header);
    for (std::size_t j = 0; j < n; ++j) {
      const auto& f = video.frames[j];
      if (auto pose = frame_pose(f, model, K, cfg.p6p)) {
        res.plane_points[j] = gazegeom::cylinder_plane_point(f.gaze_dir_cam, f.face_center_cam, *pose, cfg.cylinder_radius_mm);
      }
    }
  } else {
    for (std::size_t j = 0; j < n; ++j) {
      const auto& f = video.frames[j];
      res.plane_points[j] = gazegeom::camera_plane_point(f.gaze_dir_cam, f.face_center_cam);
    }
  }

  std::vector<Eigen::Vector2d> pts;
  std::vector<std::size_t> frame_of;
  for (std::size_t j = 0; j < n; ++j) {
    if (!res.plane_points[j]) continue;
    pts.emplace_back(res.plane_points[j]->u * cfg.plane_scale, res.plane_points[j]->v * cfg.plane_scale);
    frame_of.push_back(j);
  }
  if (pts.empty()) {
    res.cluster.used_eps = cfg.schedule.cap;
    return res;
  }
  const int min_samples = clustering::min_samples_for(pts.size(), cfg.min_samples_floor, cfg.min_samples_fraction);
  res.cluster = clustering::adaptive_cluster(pts, cfg.schedule, min_samples);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (res.cluster.labels[i] != clustering::kNoise) res.pseudo_labels.labels[frame_of[i]] = 1;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Tracklets

struct TrackletParams {
  double iou_threshold = 0.4;
  double cos_threshold = 0.4;
  std::int64_t min_frames = 100;  // tracklets must strictly exceed this
};

inline double box_iou(const Eigen::Vector4d& a, const Eigen::Vector4d& b) {
  const double x0 = std::max(a[0], b[0]);
  const double y0 = std::max(a[1], b[1]);
  const double x1 = std::min(a[0] + a[2], b[0] + b[2]);
  const double y1 = std::min(a[1] + a[3], b[1] + b[3]);
  const double inter = std::max(0.0, x1 - x0) * std::max(0.0, y1 - y0);
  const double uni = a[2] * a[3] + b[2] * b[3] - inter;
  return uni > 0 ? inter / uni : 0.0;
}

inline double max_cosine(const Eigen::VectorXd& e, std::span<const Eigen::VectorXd> refs) {
  double best = -1;
  for (const auto& r : refs) {
    if (r.size() == e.size()) best = std::max(best, e.dot(r) / (e.norm() * r.norm()));
  }
  return best;
}

inline std::vector<Tracklet> extract_tracklets(const VideoFrames& video, std::span<const Eigen::VectorXd> references,
                                               const TrackletParams& params) {
  if (references.empty()) throw DataError("extract_tracklets: empty reference set");
  const auto n = static_cast<std::int64_t>(video.frames.size());
  auto admissible = [&](std::int64_t j) {
    const auto& f = video.frames[j];
    return f.keypoints_2d.has_value() && max_cosine(f.identity_embedding, references) > params.cos_threshold;
  };

  std::vector<Tracklet> out;
  auto close = [&](std::int64_t start, std::int64_t end) {
    const std::int64_t count = end - start + 1;
    if (count <= params.min_frames) return;
    out.push_back({video.video_id + "_t" + std::to_string(out.size()), video.video_id, start, end, count});
  };

  std::int64_t start = -1;
  for (std::int64_t j = 0; j < n; ++j) {
    const bool ok = admissible(j);
    if (start >= 0 && ok && box_iou(video.frames[j - 1].face_box, video.frames[j].face_box) > params.iou_threshold) {
      continue;
    }
    if (start >= 0) close(start, j - 1);
    start = ok ? j : -1;
  }
  if (start >= 0) close(start, n - 1);
  return out;
}

inline std::vector<std::pair<Tracklet, LabelSequence>> assign_labels(std::span<const Tracklet> tracklets,
                                                                     const LabelSequence& video_labels) {
  std::vector<std::pair<Tracklet, LabelSequence>> out;
  for (const auto& t : tracklets) {
    if (t.start_idx < 0 || t.end_idx < t.start_idx ||
        t.end_idx >= static_cast<std::int64_t>(video_labels.labels.size())) {
      throw DataError("assign_labels: tracklet '" + t.tracklet_id + "' out of range");
    }
    LabelSequence l{t.tracklet_id, LabelOwner::tracklet, video_labels.source, video_labels.iteration,
                    {video_labels.labels.begin() + t.start_idx, video_labels.labels.begin() + t.end_idx + 1}};
    out.emplace_back(t, std::move(l));
  }
  return out;
}

}  // namespace ecseg::labeling
