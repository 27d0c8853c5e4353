#pragma once

// Gaze-ray geometry: camera -> body frame transform, body-centred cylinder
// intersection and unrolling, and the camera-plane projection baseline.

#include <Eigen/Core>
#include <cmath>
#include <numbers>
#include <optional>

#include "ecseg/bodypose.hpp"

namespace ecseg::gazegeom {

struct GazeRayBody {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();     // mm
  Eigen::Vector3d direction = Eigen::Vector3d::UnitZ();  // unit
};

struct CylinderPoint3D {
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  double ray_param = 0;  // beta, mm along the ray
};

enum class PlaneKind { cylinder, camera };

struct PlanePoint2D {
  double u = 0;  // arc coordinate (cylinder) or x (camera), mm
  double v = 0;  // height (cylinder) or y (camera), mm
  PlaneKind kind = PlaneKind::cylinder;
};

inline GazeRayBody to_body_frame(const Eigen::Vector3d& gaze_cam, const Eigen::Vector3d& origin_cam,
                                 const bodypose::PoseEstimate& pose) {
  // R is orthonormal, so R^-1 = R^T.
  return {pose.R.transpose() * (origin_cam - pose.t), pose.R.transpose() * gaze_cam};
}

inline GazeRayBody to_camera_frame(const GazeRayBody& ray, const bodypose::PoseEstimate& pose) {
  return {pose.R * ray.origin + pose.t, pose.R * ray.direction};
}

/// Nearest forward intersection with the infinite cylinder x^2 + z^2 = r^2.
inline std::optional<CylinderPoint3D> intersect_cylinder(const GazeRayBody& ray, double r) {
  const Eigen::Vector3d& o = ray.origin;
  const Eigen::Vector3d& g = ray.direction;
  const double a = g.x() * g.x() + g.z() * g.z();
  const double b = 2.0 * (o.x() * g.x() + o.z() * g.z());
  const double c = o.x() * o.x() + o.z() * o.z() - r * r;
  if (a <= 1e-15) return std::nullopt;  // parallel to the axis
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0) return std::nullopt;
  const double sq = std::sqrt(disc);
  // Numerically stable pair of roots.
  const double q = -0.5 * (b + std::copysign(sq, b));
  double r1 = q / a;
  double r2 = q != 0 ? c / q : r1;
  if (r1 > r2) std::swap(r1, r2);
  double beta;
  if (r1 > 0) {
    beta = r1;
  } else if (r2 > 0) {
    beta = r2;
  } else {
    return std::nullopt;
  }
  return CylinderPoint3D{o + beta * g, beta};
}

/// Cuts the cylinder along (0, y, r): the chest front (0, y, -r) maps to
/// u = 0 and the cut to u = +-pi r.
inline PlanePoint2D unroll(const CylinderPoint3D& p, double r) {
  double phi = std::atan2(p.point.x(), -p.point.z());
  if (phi <= -std::numbers::pi) phi = std::numbers::pi;
  return {r * phi, p.point.y(), PlaneKind::cylinder};
}

/// Inverse of unroll.
inline Eigen::Vector3d roll(const PlanePoint2D& p, double r) {
  const double phi = p.u / r;
  return {r * std::sin(phi), p.v, -r * std::cos(phi)};
}

/// Intersection of the camera-frame gaze ray with the plane z = 0.
inline std::optional<PlanePoint2D> camera_plane_point(const Eigen::Vector3d& gaze_cam, const Eigen::Vector3d& origin_cam) {
  if (gaze_cam.z() >= 0) return std::nullopt;
  const double beta = -origin_cam.z() / gaze_cam.z();
  if (beta <= 0) return std::nullopt;
  const Eigen::Vector3d x = origin_cam + beta * gaze_cam;
  return PlanePoint2D{x.x(), x.y(), PlaneKind::camera};
}

/// Full cylinder route for one frame's ray.
inline std::optional<PlanePoint2D> cylinder_plane_point(const Eigen::Vector3d& gaze_cam, const Eigen::Vector3d& origin_cam,
                                                        const bodypose::PoseEstimate& pose, double r) {
  const auto hit = intersect_cylinder(to_body_frame(gaze_cam, origin_cam, pose), r);
  if (!hit) return std::nullopt;
  return unroll(*hit, r);
}

}  // namespace ecseg::gazegeom
