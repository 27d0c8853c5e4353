#pragma once

// Core record types and their line-delimited JSON file formats.
//
// Every file starts with a header record carrying "format_version"; the
// remaining lines hold one record each. Units: mm for 3D quantities, px for
// image quantities.

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ecseg/errors.hpp"

namespace ecseg {

using Json = nlohmann::json;

inline constexpr int kFormatVersion = 1;
inline constexpr double kUnitTolerance = 1e-6;

struct NeckShoulders {
  Eigen::Vector2d neck = Eigen::Vector2d::Zero();
  Eigen::Vector2d l_shoulder = Eigen::Vector2d::Zero();
  Eigen::Vector2d r_shoulder = Eigen::Vector2d::Zero();
};

struct FrameObservation {
  std::string video_id;
  std::int64_t frame_idx = 0;
  Eigen::Vector3d gaze_dir_cam = Eigen::Vector3d::UnitZ();
  Eigen::Vector3d face_center_cam = Eigen::Vector3d::Zero();
  Eigen::Vector4d face_box = Eigen::Vector4d::Zero();  // x, y, w, h
  Eigen::VectorXd identity_embedding;
  std::optional<NeckShoulders> keypoints_2d;  // absent when not detected
  std::optional<Eigen::VectorXd> feature;
  std::optional<int> gt_label;
};

/// Dataset-level constants declared in the first line of a frames file.
struct FramesHeader {
  int feature_dim = 0;
  int embedding_dim = 0;
  double fps = 25.0;
  int image_width = 1920;
  int image_height = 1080;
  // Virtual intrinsics default to focal = frame width, principal point = centre.
  std::optional<double> focal_px;
  std::optional<Eigen::Vector2d> principal_point;
  Json producer = Json::object();

  double focal() const { return focal_px.value_or(static_cast<double>(image_width)); }
  Eigen::Vector2d principal() const {
    return principal_point.value_or(Eigen::Vector2d(image_width / 2.0, image_height / 2.0));
  }
};

struct FrameSet {
  FramesHeader header;
  std::vector<FrameObservation> frames;
};

/// Contiguous slice of one video's frames. start/end are frame positions
/// within the video (equal to frame_idx for contiguous recordings).
struct Tracklet {
  std::string tracklet_id;
  std::string video_id;
  std::int64_t start_idx = 0;
  std::int64_t end_idx = 0;  // inclusive
  std::int64_t frame_count = 0;

  friend bool operator==(const Tracklet&, const Tracklet&) = default;
};

enum class LabelSource { ground_truth, cluster_pseudo, model_iter, baseline };
enum class LabelOwner { video, tracklet };

struct LabelSequence {
  std::string id;
  LabelOwner owner = LabelOwner::video;
  LabelSource source = LabelSource::ground_truth;
  int iteration = 0;  // meaningful for model_iter only
  std::vector<std::uint8_t> labels;

  friend bool operator==(const LabelSequence&, const LabelSequence&) = default;
};

/// One video's frames as a view into a FrameSet.
struct VideoFrames {
  std::string video_id;
  std::span<const FrameObservation> frames;
};

// ---------------------------------------------------------------------------
// JSON helpers

namespace detail {

template <class Derived>
Json to_json_array(const Eigen::MatrixBase<Derived>& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Eigen::VectorXd vector_from_json(const Json& j, const char* field, std::optional<Eigen::Index> size = {}) {
  if (!j.is_array()) throw DataError(std::string("field '") + field + "' must be an array");
  if (size && static_cast<Eigen::Index>(j.size()) != *size) {
    throw DataError(std::string("field '") + field + "' must have " + std::to_string(*size) + " entries");
  }
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw DataError(std::string("field '") + field + "' has a non-numeric entry");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline const Json& require(const Json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end()) throw DataError(std::string("missing field '") + field + "'");
  return *it;
}

inline void check_unit(const Eigen::VectorXd& v, const char* field) {
  if (std::abs(v.norm() - 1.0) > kUnitTolerance) {
    throw DataError(std::string("non-unit vector in field '") + field + "' (norm " + std::to_string(v.norm()) + ")");
  }
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return in;
}

inline void write_line(std::ofstream& out, const Json& j) { out << j.dump() << '\n'; }

// Reads one JSON object per non-empty line; errors carry the 1-based line number.
template <class Fn>
void for_each_record(const std::string& path, Fn&& fn) {
  auto in = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": parse error: " + e.what());
    }
    if (!j.is_object()) throw DataError(path + ":" + std::to_string(lineno) + ": record is not an object");
    try {
      fn(j, lineno);
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (in.bad()) throw IoError("read failure on '" + path + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Frames

inline Json header_to_json(const FramesHeader& h) {
  Json j{{"format_version", kFormatVersion},
         {"feature_dim", h.feature_dim},
         {"embedding_dim", h.embedding_dim},
         {"fps", h.fps},
         {"image_width", h.image_width},
         {"image_height", h.image_height}};
  if (h.focal_px) j["focal_px"] = *h.focal_px;
  if (h.principal_point) j["principal_point"] = detail::to_json_array(*h.principal_point);
  if (!h.producer.empty()) j["producer"] = h.producer;
  return j;
}

inline FramesHeader header_from_json(const Json& j) {
  if (j.at("format_version").get<int>() != kFormatVersion) throw DataError("unsupported format_version");
  FramesHeader h;
  h.feature_dim = j.at("feature_dim").get<int>();
  h.embedding_dim = j.at("embedding_dim").get<int>();
  h.fps = j.value("fps", 25.0);
  h.image_width = j.value("image_width", 1920);
  h.image_height = j.value("image_height", 1080);
  if (j.contains("focal_px")) h.focal_px = j["focal_px"].get<double>();
  if (j.contains("principal_point")) h.principal_point = detail::vector_from_json(j["principal_point"], "principal_point", 2);
  if (h.feature_dim < 0 || h.embedding_dim <= 0 || h.fps <= 0) throw DataError("invalid frames header");
  h.producer = j.value("producer", Json::object());
  return h;
}

inline Json frame_to_json(const FrameObservation& f) {
  Json j{{"video_id", f.video_id},
         {"frame_idx", f.frame_idx},
         {"gaze_dir_cam", detail::to_json_array(f.gaze_dir_cam)},
         {"face_center_cam", detail::to_json_array(f.face_center_cam)},
         {"face_box", detail::to_json_array(f.face_box)},
         {"identity_embedding", detail::to_json_array(f.identity_embedding)}};
  if (f.keypoints_2d) {
    j["keypoints_2d"] = Json{{"neck", detail::to_json_array(f.keypoints_2d->neck)},
                             {"l_shoulder", detail::to_json_array(f.keypoints_2d->l_shoulder)},
                             {"r_shoulder", detail::to_json_array(f.keypoints_2d->r_shoulder)}};
  }
  if (f.feature) j["feature"] = detail::to_json_array(*f.feature);
  if (f.gt_label) j["gt_label"] = *f.gt_label;
  return j;
}

inline FrameObservation frame_from_json(const Json& j, const FramesHeader& h) {
  using detail::require;
  using detail::vector_from_json;
  FrameObservation f;
  f.video_id = require(j, "video_id").get<std::string>();
  f.frame_idx = require(j, "frame_idx").get<std::int64_t>();
  if (f.frame_idx < 0) throw DataError("negative frame_idx");
  f.gaze_dir_cam = vector_from_json(require(j, "gaze_dir_cam"), "gaze_dir_cam", 3);
  detail::check_unit(f.gaze_dir_cam, "gaze_dir_cam");
  f.face_center_cam = vector_from_json(require(j, "face_center_cam"), "face_center_cam", 3);
  f.face_box = vector_from_json(require(j, "face_box"), "face_box", 4);
  if (!(f.face_box[2] > 0 && f.face_box[3] > 0)) throw DataError("face_box must have positive width and height");
  f.identity_embedding = vector_from_json(require(j, "identity_embedding"), "identity_embedding", h.embedding_dim);
  detail::check_unit(f.identity_embedding, "identity_embedding");
  if (auto it = j.find("keypoints_2d"); it != j.end() && !it->is_null()) {
    NeckShoulders k;
    k.neck = vector_from_json(require(*it, "neck"), "keypoints_2d.neck", 2);
    k.l_shoulder = vector_from_json(require(*it, "l_shoulder"), "keypoints_2d.l_shoulder", 2);
    k.r_shoulder = vector_from_json(require(*it, "r_shoulder"), "keypoints_2d.r_shoulder", 2);
    f.keypoints_2d = k;
  }
  if (auto it = j.find("feature"); it != j.end() && !it->is_null()) {
    f.feature = vector_from_json(*it, "feature", h.feature_dim);
  }
  if (auto it = j.find("gt_label"); it != j.end() && !it->is_null()) {
    int g = it->get<int>();
    if (g != 0 && g != 1) throw DataError("gt_label must be 0 or 1");
    f.gt_label = g;
  }
  return f;
}

inline void write_frames(const FrameSet& set, const std::string& path) {
  auto out = detail::open_out(path);
  detail::write_line(out, header_to_json(set.header));
  for (const auto& f : set.frames) detail::write_line(out, frame_to_json(f));
  if (!out) throw IoError("write failure on '" + path + "'");
}

/// Loads a frames file. Records must be grouped by video and strictly
/// increasing in frame_idx within each video; nothing is reordered.
inline FrameSet load_frames(const std::string& path) {
  FrameSet set;
  bool have_header = false;
  std::unordered_map<std::string, std::int64_t> last_idx;
  std::string current_video;
  detail::for_each_record(path, [&](const Json& j, std::size_t) {
    if (!have_header) {
      if (!j.contains("format_version")) throw DataError("missing header record");
      set.header = header_from_json(j);
      have_header = true;
      return;
    }
    FrameObservation f = frame_from_json(j, set.header);
    auto it = last_idx.find(f.video_id);
    if (it != last_idx.end()) {
      if (f.frame_idx == it->second) {
        throw DataError("duplicate frame (" + f.video_id + ", " + std::to_string(f.frame_idx) + ")");
      }
      if (f.video_id != current_video) throw DataError("records of video '" + f.video_id + "' are not contiguous");
      if (f.frame_idx < it->second) throw DataError("frame_idx not increasing in video '" + f.video_id + "'");
    }
    last_idx[f.video_id] = f.frame_idx;
    current_video = f.video_id;
    set.frames.push_back(std::move(f));
  });
  if (!have_header) throw DataError(path + ": empty frames file");
  return set;
}

/// Splits a frame list into per-video views, in file order.
inline std::vector<VideoFrames> split_by_video(std::span<const FrameObservation> frames) {
  std::vector<VideoFrames> out;
  std::size_t begin = 0;
  for (std::size_t i = 1; i <= frames.size(); ++i) {
    if (i == frames.size() || frames[i].video_id != frames[begin].video_id) {
      if (i > begin) out.push_back({frames[begin].video_id, frames.subspan(begin, i - begin)});
      begin = i;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Labels

inline std::string source_name(LabelSource s, int iteration) {
  switch (s) {
    case LabelSource::ground_truth: return "ground_truth";
    case LabelSource::cluster_pseudo: return "cluster_pseudo";
    case LabelSource::model_iter: return "model_iter_" + std::to_string(iteration);
    case LabelSource::baseline: return "baseline";
  }
  return "unknown";
}

inline std::pair<LabelSource, int> parse_source(const std::string& s) {
  if (s == "ground_truth") return {LabelSource::ground_truth, 0};
  if (s == "cluster_pseudo") return {LabelSource::cluster_pseudo, 0};
  if (s == "baseline") return {LabelSource::baseline, 0};
  const std::string prefix = "model_iter_";
  if (s.rfind(prefix, 0) == 0 && s.size() > prefix.size()) {
    try {
      return {LabelSource::model_iter, std::stoi(s.substr(prefix.size()))};
    } catch (const std::exception&) {
    }
  }
  throw DataError("unknown label source '" + s + "'");
}

inline Json labels_to_json(const LabelSequence& l) {
  Json arr = Json::array();
  for (auto v : l.labels) arr.push_back(static_cast<int>(v));
  return Json{{l.owner == LabelOwner::video ? "video_id" : "tracklet_id", l.id},
              {"source", source_name(l.source, l.iteration)},
              {"labels", std::move(arr)}};
}

inline LabelSequence labels_from_json(const Json& j) {
  LabelSequence l;
  if (j.contains("video_id")) {
    l.id = j["video_id"].get<std::string>();
    l.owner = LabelOwner::video;
  } else if (j.contains("tracklet_id")) {
    l.id = j["tracklet_id"].get<std::string>();
    l.owner = LabelOwner::tracklet;
  } else {
    throw DataError("label record needs 'video_id' or 'tracklet_id'");
  }
  std::tie(l.source, l.iteration) = parse_source(detail::require(j, "source").get<std::string>());
  for (const auto& v : detail::require(j, "labels")) {
    int x = v.get<int>();
    if (x != 0 && x != 1) throw DataError("labels must be 0 or 1");
    l.labels.push_back(static_cast<std::uint8_t>(x));
  }
  return l;
}

inline void write_labels(std::span<const LabelSequence> labels, const std::string& path, const Json& producer = {}) {
  auto out = detail::open_out(path);
  Json header{{"format_version", kFormatVersion}, {"kind", "labels"}};
  if (!producer.is_null() && !producer.empty()) header["producer"] = producer;
  detail::write_line(out, header);
  for (const auto& l : labels) detail::write_line(out, labels_to_json(l));
  if (!out) throw IoError("write failure on '" + path + "'");
}

inline std::vector<LabelSequence> load_labels(const std::string& path) {
  std::vector<LabelSequence> out;
  detail::for_each_record(path, [&](const Json& j, std::size_t) {
    if (j.contains("format_version")) return;
    out.push_back(labels_from_json(j));
  });
  return out;
}

inline void validate_labels(std::span<const LabelSequence> labels, std::span<const FrameObservation> frames) {
  std::map<std::string, std::size_t> lengths;
  for (const auto& v : split_by_video(frames)) lengths[v.video_id] = v.frames.size();
  for (const auto& l : labels) {
    if (l.owner != LabelOwner::video) continue;
    auto it = lengths.find(l.id);
    if (it == lengths.end()) throw DataError("labels for unknown video '" + l.id + "'");
    if (it->second != l.labels.size()) {
      throw DataError("length mismatch for video '" + l.id + "': " + std::to_string(l.labels.size()) +
                      " labels vs " + std::to_string(it->second) + " frames");
    }
  }
}

// ---------------------------------------------------------------------------
// Tracklets

inline Json tracklet_to_json(const Tracklet& t) {
  return Json{{"tracklet_id", t.tracklet_id},
              {"video_id", t.video_id},
              {"start_idx", t.start_idx},
              {"end_idx", t.end_idx},
              {"frame_count", t.frame_count}};
}

inline Tracklet tracklet_from_json(const Json& j) {
  Tracklet t;
  t.tracklet_id = detail::require(j, "tracklet_id").get<std::string>();
  t.video_id = detail::require(j, "video_id").get<std::string>();
  t.start_idx = detail::require(j, "start_idx").get<std::int64_t>();
  t.end_idx = detail::require(j, "end_idx").get<std::int64_t>();
  t.frame_count = detail::require(j, "frame_count").get<std::int64_t>();
  if (t.start_idx < 0 || t.end_idx < t.start_idx || t.frame_count != t.end_idx - t.start_idx + 1) {
    throw DataError("inconsistent tracklet '" + t.tracklet_id + "'");
  }
  return t;
}

inline void write_tracklets(std::span<const Tracklet> tracklets, const std::string& path, const Json& producer = {}) {
  auto out = detail::open_out(path);
  Json header{{"format_version", kFormatVersion}, {"kind", "tracklets"}};
  if (!producer.is_null() && !producer.empty()) header["producer"] = producer;
  detail::write_line(out, header);
  for (const auto& t : tracklets) detail::write_line(out, tracklet_to_json(t));
  if (!out) throw IoError("write failure on '" + path + "'");
}

inline std::vector<Tracklet> load_tracklets(const std::string& path) {
  std::vector<Tracklet> out;
  detail::for_each_record(path, [&](const Json& j, std::size_t) {
    if (j.contains("format_version")) return;
    out.push_back(tracklet_from_json(j));
  });
  return out;
}

}  // namespace ecseg
