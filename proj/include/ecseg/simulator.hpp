#pragma once

// Deterministic synthetic scenes: a static person with fixed gaze targets in
// the body frame, filmed by a camera that may jitter or cut between views.
// Emits FrameObservation streams plus framewise ground truth.

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ecseg/bodypose.hpp"
#include "ecseg/datamodel.hpp"
#include "ecseg/random.hpp"

namespace ecseg::simulator {

inline constexpr double kDeg = std::numbers::pi / 180.0;

/// Body -> camera placement. Angles in degrees, translation in mm.
struct CameraView {
  double yaw_deg = 0;
  double pitch_deg = 0;
  double roll_deg = 0;
  Eigen::Vector3d t{0, 0, 2500};

  bodypose::PoseEstimate pose() const {
    bodypose::PoseEstimate p;
    p.R = bodypose::rotation_ypr(yaw_deg * kDeg, pitch_deg * kDeg, roll_deg * kDeg);
    p.t = t;
    return p;
  }
};

/// Ranges from which camera views are drawn (initial view and after each cut).
struct ViewRange {
  double max_abs_yaw_deg = 10;  // yaw is weakly observable from completed keypoints
  double max_abs_pitch_deg = 5;
  double max_abs_roll_deg = 3;
  double min_distance_mm = 1500;
  double max_distance_mm = 3500;
  double max_lateral_fraction = 0.2;  // |t_x| <= fraction * distance
};

struct FeatureSpec {
  bool gaze_dir = true;
  bool face_center = true;  // normalised to unit length
  int noise_dims = 2;

  int dim() const { return (gaze_dir ? 3 : 0) + (face_center ? 3 : 0) + noise_dims; }
};

struct SceneConfig {
  std::string video_id = "vid0000";
  double duration_s = 60;
  double fps = 25;
  std::vector<Eigen::Vector3d> targets;  // body frame, mm
  double on_target_fraction = 0.48;
  double fixation_mean_s = 2.5;
  double fixation_min_s = 0.8;
  double fixation_max_s = 8;
  double away_step_deg = 40;  // away gaze wanders: per-frame random-walk step in yaw and pitch
  double away_exclusion_deg = 15;
  double away_max_yaw_deg = 120;  // head turn plus eye rotation
  double away_max_pitch_deg = 60;
  double gaze_noise_deg = 3;
  double gaze_failure_rate = 0.05;  // per-frame chance the gaze estimate fails for a short run
  int gaze_failure_max_frames = 8;
  // Head turned towards profile: face recognition fails for an episode and gaze
  // estimates degrade. profile_share in [0, 1] sets how often this happens.
  double profile_share = 0;
  double profile_episode_rate = 0.01;  // per-frame episode start chance at share 1
  double profile_episode_min_s = 0.5;
  double profile_episode_max_s = 2;
  double profile_failure_gain = 3;  // gaze failure rate scales by 1 + gain * share
  // The head turns gradually: frames this close to an episode are still tracked
  // but near-profile, and each loses its gaze estimate with this probability.
  double profile_turn_s = 1;
  double profile_turn_failure = 0.5;
  double keypoint_noise_px = 1;
  double keypoint_dropout_rate = 0;  // per-frame chance a dropout run starts
  int keypoint_dropout_max_frames = 20;
  std::optional<CameraView> camera;  // drawn from view_range when absent
  ViewRange view_range;
  double jitter_deg = 0;
  double jitter_mm = 0;
  double jump_cut_every_s = 0;  // 0 = no cuts
  Eigen::Vector3d face_offset{0, -180, -40};
  bodypose::BodyModelParams body;
  int image_width = 1920;
  int image_height = 1080;
  int embedding_dim = 16;
  double embedding_noise = 0.05;
  FeatureSpec feature_spec;
  double face_size_mm = 220;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(fps > 0) || !(duration_s > 0)) throw ConfigError("simulator: fps and duration must be positive");
    if (targets.empty()) throw ConfigError("simulator: at least one target required");
    if (!(on_target_fraction >= 0 && on_target_fraction <= 1)) throw ConfigError("simulator: fraction outside [0, 1]");
    if (!(fixation_min_s > 0) || fixation_max_s < fixation_min_s) throw ConfigError("simulator: bad fixation durations");
    for (const auto& t : targets) {
      if ((t - face_offset).norm() < 100) throw ConfigError("simulator: target closer than 100 mm to the face centre");
    }
    if (embedding_dim < 2 || !(away_step_deg >= 0)) throw ConfigError("simulator: invalid configuration");
    if (!(gaze_failure_rate >= 0 && gaze_failure_rate <= 1) || gaze_failure_max_frames < 1) {
      throw ConfigError("simulator: invalid gaze failure parameters");
    }
    if (!(profile_share >= 0 && profile_share <= 1) || !(profile_episode_rate >= 0) || !(profile_failure_gain >= 0) ||
        !(profile_turn_s >= 0) || !(profile_turn_failure >= 0 && profile_turn_failure <= 1) ||
        !(profile_episode_min_s > 0) || profile_episode_max_s < profile_episode_min_s) {
      throw ConfigError("simulator: invalid profile parameters");
    }
  }
};

struct SimulatedVideo {
  std::vector<FrameObservation> frames;
  LabelSequence gt;
  std::vector<bodypose::PoseEstimate> true_poses;  // body -> camera per frame
  std::vector<int> target_of_frame;                // target index, -1 when away
  Eigen::VectorXd identity;
};

inline FramesHeader header_for(const SceneConfig& c) {
  FramesHeader h;
  h.feature_dim = c.feature_spec.dim();
  h.embedding_dim = c.embedding_dim;
  h.fps = c.fps;
  h.image_width = c.image_width;
  h.image_height = c.image_height;
  return h;
}

namespace detail {

inline Eigen::Vector3d random_unit(std::mt19937_64& rng, int) {
  std::normal_distribution<double> N(0, 1);
  Eigen::Vector3d v(N(rng), N(rng), N(rng));
  return v.normalized();
}

inline Eigen::VectorXd random_unit(std::mt19937_64& rng, Eigen::Index dim) {
  std::normal_distribution<double> N(0, 1);
  Eigen::VectorXd v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v(i) = N(rng);
  return v.normalized();
}

// Rotates v by |N(0, sigma)| about a uniformly drawn axis perpendicular to v.
inline Eigen::Vector3d perturb_direction(const Eigen::Vector3d& v, double sigma_rad, std::mt19937_64& rng) {
  if (sigma_rad <= 0) return v;
  std::normal_distribution<double> N(0, 1);
  std::uniform_real_distribution<double> U(0, 2 * std::numbers::pi);
  const Eigen::Vector3d a = v.unitOrthogonal();
  const Eigen::Vector3d b = v.cross(a);
  const double phi = U(rng);
  const Eigen::Vector3d axis = std::cos(phi) * a + std::sin(phi) * b;
  const double angle = std::abs(N(rng)) * sigma_rad;
  return (Eigen::AngleAxisd(angle, axis) * v).normalized();
}

inline double angle_between(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  return std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0));
}

// Folds x back into [-limit, limit] (mirror at the bounds).
inline double reflect(double x, double limit) {
  if (limit <= 0) return 0;
  const double period = 4 * limit;
  double m = std::fmod(x + limit, period);
  if (m < 0) m += period;
  return m <= 2 * limit ? m - limit : 3 * limit - m;
}

inline CameraView draw_view(const ViewRange& r, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1, 1);
  std::uniform_real_distribution<double> D(r.min_distance_mm, r.max_distance_mm);
  CameraView v;
  v.yaw_deg = r.max_abs_yaw_deg * U(rng);
  v.pitch_deg = r.max_abs_pitch_deg * U(rng);
  v.roll_deg = r.max_abs_roll_deg * U(rng);
  const double dist = D(rng);
  v.t = {r.max_lateral_fraction * dist * U(rng), 0.05 * dist * U(rng), dist};
  return v;
}

// Alternating on/away segments; away durations are the on-target draw scaled
// by (1 - f) / f so the expected on-target fraction is f.
inline std::vector<int> fixation_schedule(const SceneConfig& c, std::int64_t n, std::mt19937_64& rng) {
  std::vector<int> on(static_cast<std::size_t>(n), 0);
  const double f = c.on_target_fraction;
  if (f <= 0) return on;
  if (f >= 1) return std::vector<int>(static_cast<std::size_t>(n), 1);
  std::exponential_distribution<double> E(1.0 / c.fixation_mean_s);
  std::uniform_real_distribution<double> U(0, 1);
  auto draw = [&] { return std::clamp(E(rng), c.fixation_min_s, c.fixation_max_s); };
  bool state = U(rng) < f;
  std::int64_t i = 0;
  while (i < n) {
    const double dur_s = state ? draw() : draw() * (1 - f) / f;
    const auto len = std::max<std::int64_t>(1, std::llround(dur_s * c.fps));
    for (std::int64_t k = 0; k < len && i < n; ++k, ++i) on[static_cast<std::size_t>(i)] = state ? 1 : 0;
    state = !state;
  }
  return on;
}

}  // namespace detail

inline SimulatedVideo simulate_video(const SceneConfig& c) {
  c.validate();
  std::mt19937_64 rng(derive_seed(c.seed, "scene/" + c.video_id));
  std::uniform_real_distribution<double> U01(0, 1);
  std::normal_distribution<double> N01(0, 1);

  const auto n = static_cast<std::int64_t>(std::llround(c.duration_s * c.fps));
  const auto model = bodypose::canonical_body_model(c.body);
  const bodypose::CameraIntrinsics K{static_cast<double>(c.image_width),
                                     {c.image_width / 2.0, c.image_height / 2.0}};

  SimulatedVideo out;
  out.identity = detail::random_unit(rng, static_cast<Eigen::Index>(c.embedding_dim));
  const auto schedule = detail::fixation_schedule(c, n, rng);

  // Target per on-target segment; away gaze wanders outside the exclusion cones.
  std::vector<Eigen::Vector3d> target_dirs;
  for (const auto& t : c.targets) target_dirs.push_back((t - c.face_offset).normalized());
  auto direction = [](double yaw, double pitch) {
    return Eigen::Vector3d(std::sin(yaw) * std::cos(pitch), std::sin(pitch), -std::cos(yaw) * std::cos(pitch));
  };
  auto clear_of_targets = [&](const Eigen::Vector3d& d) {
    for (const auto& td : target_dirs) {
      if (detail::angle_between(d, td) < c.away_exclusion_deg * kDeg) return false;
    }
    return true;
  };
  const double max_yaw = c.away_max_yaw_deg * kDeg;
  const double max_pitch = c.away_max_pitch_deg * kDeg;
  double away_yaw = 0, away_pitch = 0;
  auto fresh_away = [&]() {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      away_yaw = max_yaw * (2 * U01(rng) - 1);
      away_pitch = max_pitch * (2 * U01(rng) - 1);
      if (clear_of_targets(direction(away_yaw, away_pitch))) return;
    }
    throw ConfigError("simulator: cannot place away gaze outside the exclusion cones");
  };
  auto wander = [&]() {
    const double step = c.away_step_deg * kDeg;
    for (int attempt = 0; attempt < 20; ++attempt) {
      const double y = detail::reflect(away_yaw + step * N01(rng), max_yaw);
      const double p = detail::reflect(away_pitch + step * N01(rng), max_pitch);
      if (clear_of_targets(direction(y, p))) {
        away_yaw = y;
        away_pitch = p;
        return;
      }
    }
    fresh_away();
  };

  CameraView view = c.camera ? *c.camera : detail::draw_view(c.view_range, rng);
  const auto cut_every = c.jump_cut_every_s > 0 ? std::max<std::int64_t>(1, std::llround(c.jump_cut_every_s * c.fps)) : 0;
  const double jitter_phase_r = 2 * std::numbers::pi * U01(rng);
  const double jitter_phase_t = 2 * std::numbers::pi * U01(rng);

  int current_target = -1;
  bool was_away = false;
  int dropout_left = 0;
  int failure_left = 0;
  // Profile episodes come from their own stream so the other draws do not depend on them.
  std::vector<char> profile(static_cast<std::size_t>(n), 0), near_profile(static_cast<std::size_t>(n), 0);
  if (c.profile_share > 0) {
    std::mt19937_64 prng(derive_seed(c.seed, "profile"));
    const auto turn = static_cast<std::int64_t>(std::llround(c.profile_turn_s * c.fps));
    for (std::int64_t i = 0; i < n; ++i) {
      if (U01(prng) >= c.profile_share * c.profile_episode_rate) continue;
      const double len_s = c.profile_episode_min_s + (c.profile_episode_max_s - c.profile_episode_min_s) * U01(prng);
      const auto end = std::min(n, i + std::max<std::int64_t>(1, std::llround(len_s * c.fps)));
      for (auto j = std::max<std::int64_t>(0, i - turn); j < std::min(n, end + turn); ++j) {
        near_profile[static_cast<std::size_t>(j)] = 1;
      }
      for (auto j = i; j < end; ++j) profile[static_cast<std::size_t>(j)] = 1;
      i = end - 1;
    }
  }
  const double failure_rate = std::min(1.0, c.gaze_failure_rate * (1 + c.profile_failure_gain * c.profile_share));

  for (std::int64_t i = 0; i < n; ++i) {
    if (cut_every > 0 && i > 0 && i % cut_every == 0) view = detail::draw_view(c.view_range, rng);
    bodypose::PoseEstimate pose = view.pose();
    if (c.jitter_deg > 0 || c.jitter_mm > 0) {
      const double time = static_cast<double>(i) / c.fps;
      const Eigen::Vector3d w(std::sin(0.7 * time + jitter_phase_r), std::sin(0.45 * time + 2 * jitter_phase_r),
                              std::sin(0.3 * time + 3 * jitter_phase_r));
      const Eigen::Vector3d dt(std::sin(0.5 * time + jitter_phase_t), std::sin(0.35 * time + 2 * jitter_phase_t),
                               std::sin(0.25 * time + 3 * jitter_phase_t));
      pose.R = bodypose::rotation_exp(c.jitter_deg * kDeg * w) * pose.R;
      pose.t += c.jitter_mm * dt;
    }

    const bool on = schedule[static_cast<std::size_t>(i)] == 1;
    Eigen::Vector3d dir_body;
    if (on) {
      if (current_target < 0) current_target = static_cast<int>(U01(rng) * static_cast<double>(c.targets.size())) %
                                               static_cast<int>(c.targets.size());
      dir_body = target_dirs[static_cast<std::size_t>(current_target)];
      was_away = false;
    } else {
      current_target = -1;
      if (was_away) {
        wander();
      } else {
        fresh_away();
      }
      was_away = true;
      dir_body = direction(away_yaw, away_pitch);
    }
    dir_body = detail::perturb_direction(dir_body, c.gaze_noise_deg * kDeg, rng);
    // Estimator failure (blink, motion blur): the measured gaze is arbitrary, the true state is unchanged.
    if (failure_left <= 0 && failure_rate > 0 && U01(rng) < failure_rate) {
      failure_left = 1 + static_cast<int>(U01(rng) * c.gaze_failure_max_frames) % c.gaze_failure_max_frames;
    }
    const bool turning = near_profile[static_cast<std::size_t>(i)] && !profile[static_cast<std::size_t>(i)] &&
                         U01(rng) < c.profile_turn_failure;
    if (failure_left > 0 || turning) {
      failure_left = std::max(0, failure_left - 1);
      dir_body = direction(max_yaw * (2 * U01(rng) - 1), max_pitch * (2 * U01(rng) - 1));
    }

    FrameObservation f;
    f.video_id = c.video_id;
    f.frame_idx = i;
    f.gaze_dir_cam = (pose.R * dir_body).normalized();
    f.face_center_cam = pose.to_camera(c.face_offset);
    const Eigen::Vector2d fc = bodypose::project_point(f.face_center_cam, K);
    const double size = K.focal_px * c.face_size_mm / f.face_center_cam.z();
    f.face_box = {fc.x() - size / 2, fc.y() - size / 2, size, size};
    Eigen::VectorXd emb = out.identity;
    if (profile[static_cast<std::size_t>(i)]) emb = detail::random_unit(rng, emb.size());
    for (Eigen::Index k = 0; k < emb.size(); ++k) emb(k) += c.embedding_noise * N01(rng);
    f.identity_embedding = emb.normalized();

    if (dropout_left <= 0 && c.keypoint_dropout_rate > 0 && U01(rng) < c.keypoint_dropout_rate) {
      dropout_left = 1 + static_cast<int>(U01(rng) * c.keypoint_dropout_max_frames) % c.keypoint_dropout_max_frames;
    }
    if (dropout_left > 0) {
      --dropout_left;
    } else {
      auto noisy = [&](int idx) {
        Eigen::Vector2d p = bodypose::project_point(pose.to_camera(model.points[idx]), K);
        return Eigen::Vector2d(p.x() + c.keypoint_noise_px * N01(rng), p.y() + c.keypoint_noise_px * N01(rng));
      };
      f.keypoints_2d = NeckShoulders{noisy(bodypose::neck), noisy(bodypose::l_shoulder), noisy(bodypose::r_shoulder)};
    }

    Eigen::VectorXd feat(c.feature_spec.dim());
    Eigen::Index k = 0;
    if (c.feature_spec.gaze_dir) {
      feat.segment<3>(k) = f.gaze_dir_cam;
      k += 3;
    }
    if (c.feature_spec.face_center) {
      feat.segment<3>(k) = f.face_center_cam.normalized();
      k += 3;
    }
    for (int d = 0; d < c.feature_spec.noise_dims; ++d) feat(k++) = N01(rng);
    f.feature = feat;
    f.gt_label = on ? 1 : 0;

    out.frames.push_back(std::move(f));
    out.true_poses.push_back(pose);
    out.target_of_frame.push_back(on ? current_target : -1);
  }
  out.gt = {c.video_id, LabelOwner::video, LabelSource::ground_truth, 0,
            std::vector<std::uint8_t>(schedule.begin(), schedule.end())};
  return out;
}

/// Reference embeddings for tracklet identity gating: perturbed copies of the identity.
inline std::vector<Eigen::VectorXd> reference_embeddings(const Eigen::VectorXd& identity, int count, double noise,
                                                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0, 1);
  std::vector<Eigen::VectorXd> refs;
  for (int r = 0; r < count; ++r) {
    Eigen::VectorXd v = identity;
    for (Eigen::Index k = 0; k < v.size(); ++k) v(k) += noise * N(rng);
    refs.push_back(v.normalized());
  }
  return refs;
}

// ---------------------------------------------------------------------------
// Datasets

struct DatasetConfig {
  int n_videos = 20;
  std::uint64_t seed = 0;
  double time_scale = 0.1;  // real-world 2-12 minute durations are scaled by this
  double min_minutes = 2;
  double max_minutes = 12;
  double jump_cut_fraction = 0.5;  // videos with jump cuts
  double jitter_fraction = 0.5;    // of the remaining videos, share with handheld jitter
  double max_profile_share = 1;    // per-video profile share drawn uniformly in [0, max]
  double min_cut_interval_s = 6;
  double max_cut_interval_s = 15;
  int min_targets = 1;
  int max_targets = 3;  // several eye contact targets may coexist
  double target_radius_min_mm = 900;
  double target_radius_max_mm = 1100;
  double target_min_azimuth_deg = 20;
  double target_max_azimuth_deg = 100;
  SceneConfig base;  // shared scene parameters (noise levels, fractions, fps, ...)
};

struct DatasetVideo {
  SceneConfig scene;
  SimulatedVideo video;
  std::vector<Eigen::VectorXd> references;
};

struct Dataset {
  FramesHeader header;
  std::vector<DatasetVideo> videos;
};

inline std::string video_name(int i) {
  std::string s = std::to_string(i);
  return "vid" + std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
}

/// Scene parameters of video i, drawn from the dataset ranges.
inline SceneConfig scene_for(const DatasetConfig& d, int i) {
  if (d.n_videos < 1) throw ConfigError("simulate: need at least one video");
  const std::uint64_t vseed = derive_seed(d.seed, "simulate/video/" + std::to_string(i));
  std::mt19937_64 rng(derive_seed(vseed, "layout"));
  std::uniform_real_distribution<double> U(0, 1);
  SceneConfig s = d.base;
  s.video_id = video_name(i);
  s.seed = vseed;
  s.duration_s = 60.0 * (d.min_minutes + (d.max_minutes - d.min_minutes) * U(rng)) * d.time_scale;
  const int n_targets = d.min_targets + static_cast<int>(U(rng) * (d.max_targets - d.min_targets + 1)) %
                                            (d.max_targets - d.min_targets + 1);
  s.targets.clear();
  // Targets on opposite sides or well apart in azimuth so they stay distinguishable.
  for (int k = 0; k < n_targets; ++k) {
    Eigen::Vector3d t;
    for (int attempt = 0; attempt < 100; ++attempt) {
      const double az = (d.target_min_azimuth_deg + (d.target_max_azimuth_deg - d.target_min_azimuth_deg) * U(rng)) *
                        (U(rng) < 0.5 ? -1.0 : 1.0) * kDeg;
      const double radius = d.target_radius_min_mm + (d.target_radius_max_mm - d.target_radius_min_mm) * U(rng);
      const double height = -400 + 350 * U(rng);
      t = {radius * std::sin(az), height, -radius * std::cos(az)};
      bool separated = true;
      for (const auto& o : s.targets) {
        separated = separated && detail::angle_between(t - s.face_offset, o - s.face_offset) > 3 * s.away_exclusion_deg * kDeg;
      }
      if (separated) break;
    }
    s.targets.push_back(t);
  }
  s.camera.reset();
  s.jump_cut_every_s = 0;
  s.jitter_deg = 0;
  s.jitter_mm = 0;
  if (U(rng) < d.jump_cut_fraction) {
    s.jump_cut_every_s = d.min_cut_interval_s + (d.max_cut_interval_s - d.min_cut_interval_s) * U(rng);
  } else if (U(rng) < d.jitter_fraction) {
    s.jitter_deg = 1.5;
    s.jitter_mm = 20;
  }
  s.profile_share = d.max_profile_share * U(rng);
  return s;
}

/// Video i of the dataset; independent of every other video.
inline DatasetVideo dataset_video(const DatasetConfig& d, int i) {
  DatasetVideo v;
  v.scene = scene_for(d, i);
  v.video = simulate_video(v.scene);
  v.references = reference_embeddings(v.video.identity, 3, 0.1, derive_seed(v.scene.seed, "references"));
  return v;
}

inline Dataset simulate_dataset(const DatasetConfig& d) {
  Dataset ds;
  ds.header = header_for(d.base);
  for (int i = 0; i < d.n_videos; ++i) ds.videos.push_back(dataset_video(d, i));
  return ds;
}

inline Json references_to_json(const std::string& video_id, const std::vector<Eigen::VectorXd>& refs) {
  Json arr = Json::array();
  for (const auto& r : refs) arr.push_back(ecseg::detail::to_json_array(r));
  return Json{{"video_id", video_id}, {"embeddings", arr}};
}

inline std::vector<std::pair<std::string, std::vector<Eigen::VectorXd>>> load_references(const std::string& path) {
  std::vector<std::pair<std::string, std::vector<Eigen::VectorXd>>> out;
  ecseg::detail::for_each_record(path, [&](const Json& j, std::size_t) {
    if (j.contains("format_version")) return;
    std::vector<Eigen::VectorXd> refs;
    for (const auto& e : ecseg::detail::require(j, "embeddings")) {
      refs.push_back(ecseg::detail::vector_from_json(e, "embeddings"));
      ecseg::detail::check_unit(refs.back(), "embeddings");
    }
    out.emplace_back(ecseg::detail::require(j, "video_id").get<std::string>(), std::move(refs));
  });
  return out;
}

/// Writes frames.jsonl, gt.jsonl, references.jsonl and manifest.jsonl into dir.
inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir, const Json& producer = {}) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  FrameSet fs;
  fs.header = ds.header;
  fs.header.producer = producer.is_null() ? Json::object() : producer;
  std::vector<LabelSequence> gts;
  for (const auto& v : ds.videos) {
    fs.frames.insert(fs.frames.end(), v.video.frames.begin(), v.video.frames.end());
    gts.push_back(v.video.gt);
  }
  write_frames(fs, (dir / "frames.jsonl").string());
  write_labels(gts, (dir / "gt.jsonl").string(), producer);

  auto refs = ecseg::detail::open_out((dir / "references.jsonl").string());
  Json header{{"format_version", kFormatVersion}, {"kind", "references"}};
  if (!producer.is_null() && !producer.empty()) header["producer"] = producer;
  ecseg::detail::write_line(refs, header);
  for (const auto& v : ds.videos) ecseg::detail::write_line(refs, references_to_json(v.scene.video_id, v.references));

  auto man = ecseg::detail::open_out((dir / "manifest.jsonl").string());
  Json mheader{{"format_version", kFormatVersion}, {"kind", "manifest"}, {"videos", ds.videos.size()}};
  if (!producer.is_null() && !producer.empty()) mheader["producer"] = producer;
  ecseg::detail::write_line(man, mheader);
  for (const auto& v : ds.videos) {
    Json targets = Json::array();
    for (const auto& t : v.scene.targets) targets.push_back(ecseg::detail::to_json_array(t));
    ecseg::detail::write_line(man, Json{{"video_id", v.scene.video_id},
                                        {"num_frames", v.video.frames.size()},
                                        {"duration_s", v.scene.duration_s},
                                        {"jump_cut_every_s", v.scene.jump_cut_every_s},
                                        {"jitter_deg", v.scene.jitter_deg},
                                        {"profile_share", v.scene.profile_share},
                                        {"targets_body_mm", targets},
                                        {"face_offset_body_mm", ecseg::detail::to_json_array(v.scene.face_offset)},
                                        {"seed", v.scene.seed}});
  }
  if (!refs || !man) throw IoError("write failure in '" + dir.string() + "'");
}

}  // namespace ecseg::simulator
