#pragma once

// Pipeline configuration: every tunable in one place, loaded from a plain
// key=value file and overridden from the command line (CLI > file > defaults).

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ecseg/errors.hpp"
#include "ecseg/labeling.hpp"
#include "ecseg/simulator.hpp"
#include "ecseg/tcnnet.hpp"
#include "ecseg/training.hpp"

namespace ecseg {

struct PipelineConfig {
  std::uint64_t seed = 0;
  simulator::DatasetConfig sim;
  labeling::DiscoveryConfig discovery;
  labeling::TrackletParams tracklet;
  tcn::NetConfig net;
  training::TrainConfig train;
  training::SvmConfig svm;
  double test_fraction = 0.25;  // share of videos held out for evaluation
};

namespace config_detail {

struct Binding {
  std::function<void(std::string_view)> set;
  std::function<std::string()> get;
};

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(std::string_view key, std::string_view text) {
  T v{};
  const auto s = trim(text);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError("config: invalid value '" + s + "' for key '" + std::string(key) + "'");
  }
  return v;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
Binding bind_number(const std::string& key, T& field) {
  return {[key, &field](std::string_view v) { field = parse_number<T>(key, v); },
          [&field] {
            if constexpr (std::is_floating_point_v<T>) {
              return format_double(field);
            } else {
              return std::to_string(field);
            }
          }};
}

}  // namespace config_detail

/// Key -> accessor table over one PipelineConfig instance.
inline std::map<std::string, config_detail::Binding> config_bindings(PipelineConfig& c) {
  using config_detail::bind_number;
  std::map<std::string, config_detail::Binding> b;
  auto num = [&](const std::string& key, auto& field) { b.emplace(key, bind_number(key, field)); };

  num("seed", c.seed);

  num("sim.n_videos", c.sim.n_videos);
  num("sim.time_scale", c.sim.time_scale);
  num("sim.min_minutes", c.sim.min_minutes);
  num("sim.max_minutes", c.sim.max_minutes);
  num("sim.jump_cut_fraction", c.sim.jump_cut_fraction);
  num("sim.jitter_fraction", c.sim.jitter_fraction);
  num("sim.min_cut_interval_s", c.sim.min_cut_interval_s);
  num("sim.max_cut_interval_s", c.sim.max_cut_interval_s);
  num("sim.min_targets", c.sim.min_targets);
  num("sim.max_targets", c.sim.max_targets);
  num("sim.fps", c.sim.base.fps);
  num("sim.on_target_fraction", c.sim.base.on_target_fraction);
  num("sim.fixation_mean_s", c.sim.base.fixation_mean_s);
  num("sim.fixation_min_s", c.sim.base.fixation_min_s);
  num("sim.fixation_max_s", c.sim.base.fixation_max_s);
  num("sim.gaze_noise_deg", c.sim.base.gaze_noise_deg);
  num("sim.gaze_failure_rate", c.sim.base.gaze_failure_rate);
  num("sim.gaze_failure_max_frames", c.sim.base.gaze_failure_max_frames);
  num("sim.max_profile_share", c.sim.max_profile_share);
  num("sim.profile_episode_rate", c.sim.base.profile_episode_rate);
  num("sim.profile_failure_gain", c.sim.base.profile_failure_gain);
  num("sim.profile_turn_s", c.sim.base.profile_turn_s);
  num("sim.profile_turn_failure", c.sim.base.profile_turn_failure);
  num("sim.keypoint_noise_px", c.sim.base.keypoint_noise_px);
  num("sim.keypoint_dropout_rate", c.sim.base.keypoint_dropout_rate);
  num("sim.away_step_deg", c.sim.base.away_step_deg);
  num("sim.away_exclusion_deg", c.sim.base.away_exclusion_deg);
  num("sim.max_abs_yaw_deg", c.sim.base.view_range.max_abs_yaw_deg);
  num("sim.max_abs_pitch_deg", c.sim.base.view_range.max_abs_pitch_deg);
  num("sim.max_abs_roll_deg", c.sim.base.view_range.max_abs_roll_deg);
  num("sim.min_distance_mm", c.sim.base.view_range.min_distance_mm);
  num("sim.max_distance_mm", c.sim.base.view_range.max_distance_mm);
  num("sim.noise_feature_dims", c.sim.base.feature_spec.noise_dims);

  num("body.shoulder_width_mm", c.discovery.body.shoulder_width_mm);
  num("body.asym_offset_mm", c.discovery.body.asym_offset_mm);
  num("body.nose_ratio", c.discovery.body.nose_ratio);
  num("pose.max_iterations", c.discovery.p6p.max_iterations);
  num("pose.max_rmse_px", c.discovery.p6p.max_rmse_px);
  num("cylinder.radius_mm", c.discovery.cylinder_radius_mm);
  num("cluster.start_eps", c.discovery.schedule.start_eps);
  num("cluster.step", c.discovery.schedule.step);
  num("cluster.cap", c.discovery.schedule.cap);
  num("cluster.plane_scale", c.discovery.plane_scale);
  num("cluster.min_samples_floor", c.discovery.min_samples_floor);
  num("cluster.min_samples_fraction", c.discovery.min_samples_fraction);

  num("tracklet.iou_threshold", c.tracklet.iou_threshold);
  num("tracklet.cos_threshold", c.tracklet.cos_threshold);
  num("tracklet.min_frames", c.tracklet.min_frames);

  num("net.num_filters", c.net.num_filters);
  num("net.prediction_layers", c.net.prediction_layers);
  num("net.refinement_layers", c.net.refinement_layers);
  num("net.refinement_stages", c.net.refinement_stages);
  num("net.kernel_size", c.net.kernel_size);
  num("net.lambda", c.net.lambda);
  num("net.tau", c.net.tau_trunc);
  b.emplace("net.dilation_schedule",
            config_detail::Binding{[&c](std::string_view v) { c.net.schedule = tcn::parse_schedule(config_detail::trim(v)); },
                                   [&c] { return tcn::schedule_name(c.net.schedule); }});

  num("train.lr", c.train.lr);
  num("train.epochs", c.train.epochs_per_iteration);
  num("train.iterations", c.train.iterations);
  num("train.val_fraction", c.train.val_fraction);
  num("train.batch_size", c.train.batch_size);
  num("train.collapse_fraction", c.train.collapse_fraction);

  num("svm.lambda", c.svm.lambda);
  num("svm.eta0", c.svm.eta0);
  num("svm.epochs", c.svm.epochs);

  num("eval.test_fraction", c.test_fraction);
  return b;
}

inline void set_config_value(PipelineConfig& c, const std::string& key, std::string_view value) {
  auto b = config_bindings(c);
  auto it = b.find(key);
  if (it == b.end()) throw ConfigError("config: unknown key '" + key + "'");
  it->second.set(value);
}

/// Parses "key=value"; used for both file lines and --set overrides.
inline void apply_assignment(PipelineConfig& c, std::string_view line, const std::string& where) {
  const auto eq = line.find('=');
  if (eq == std::string_view::npos) throw ConfigError(where + ": expected key=value, got '" + std::string(line) + "'");
  const auto key = config_detail::trim(line.substr(0, eq));
  try {
    set_config_value(c, key, line.substr(eq + 1));
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

/// Config file: key=value lines; '#' starts a comment; blank lines ignored.
inline void apply_config_file(PipelineConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (config_detail::trim(line).empty()) continue;
    apply_assignment(c, line, path + ":" + std::to_string(lineno));
  }
}

inline void validate(const PipelineConfig& c) {
  c.net.validate();
  c.train.validate();
  if (!(c.test_fraction > 0 && c.test_fraction < 1)) throw ConfigError("eval.test_fraction must be in (0, 1)");
  if (c.sim.n_videos < 1) throw ConfigError("sim.n_videos must be >= 1");
  if (c.sim.min_targets < 1 || c.sim.max_targets < c.sim.min_targets) throw ConfigError("sim target count range invalid");
  if (!(c.discovery.cylinder_radius_mm > 0)) throw ConfigError("cylinder.radius_mm must be positive");
  const auto& s = c.discovery.schedule;
  if (!(s.start_eps > 0) || !(s.step > 0) || s.cap < s.start_eps) throw ConfigError("cluster schedule invalid");
  if (!(c.discovery.plane_scale > 0) || c.discovery.min_samples_floor < 2) throw ConfigError("cluster parameters invalid");
  if (c.tracklet.min_frames < 0) throw ConfigError("tracklet.min_frames must be >= 0");
  if (c.svm.epochs < 1 || !(c.svm.lambda > 0) || !(c.svm.eta0 > 0)) throw ConfigError("svm parameters invalid");
}

/// Canonical "key=value" lines in key order.
inline std::vector<std::string> config_lines(const PipelineConfig& c) {
  PipelineConfig copy = c;
  std::vector<std::string> out;
  for (const auto& [key, b] : config_bindings(copy)) out.push_back(key + "=" + b.get());
  return out;
}

inline std::string config_hash(const PipelineConfig& c) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& line : config_lines(c)) {
    for (unsigned char ch : line + "\n") {
      h ^= ch;
      h *= 1099511628211ULL;
    }
  }
  return tcn::detail::hex64(h);
}

/// Copies the root seed into every component that draws randomness.
inline void propagate_seed(PipelineConfig& c) {
  c.sim.seed = derive_seed(c.seed, "simulate");
  c.train.seed = derive_seed(c.seed, "train");
  c.svm.seed = derive_seed(c.seed, "svm");
}

}  // namespace ecseg
