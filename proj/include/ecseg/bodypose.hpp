#pragma once

// Six-point body model, keypoint completion from neck + shoulders, and
// perspective-6-point pose fitting by damped least squares.
//
// Body frame: origin at the neck, +y down, chest facing -z (right-handed).
// Camera frame: +z away from the camera, +y down.

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>
#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include "ecseg/errors.hpp"

namespace ecseg::bodypose {

enum BodyPoint : int { nose = 0, neck, l_shoulder, r_shoulder, l_waist, r_waist, kNumPoints };

using Points3 = std::array<Eigen::Vector3d, kNumPoints>;
using Points2 = std::array<Eigen::Vector2d, kNumPoints>;

struct BodyModel3D {
  Points3 points;
  double shoulder_width = 0;  // W, mm
  double asym_offset = 0;     // delta, mm
  double nose_ratio = 0;      // alpha
};

struct Keypoints2D {
  Points2 points;
  double shoulder_len = 0;  // d, px
};

struct PoseEstimate {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();  // body -> camera
  Eigen::Vector3d t = Eigen::Vector3d::Zero();      // mm
  double reproj_rmse = 0;                           // px

  Eigen::Vector3d to_camera(const Eigen::Vector3d& p) const { return R * p + t; }
};

struct CameraIntrinsics {
  double focal_px = 1920;
  Eigen::Vector2d principal_point{960, 540};
};

struct BodyModelParams {
  double shoulder_width_mm = 400;
  double asym_offset_mm = 15;
  double nose_ratio = 1.632;
};

inline BodyModel3D canonical_body_model(double W, double delta, double alpha) {
  if (!(W > 0)) throw ConfigError("body model: shoulder width must be positive");
  if (delta == 0) throw ConfigError("body model: asymmetry offset must be non-zero");
  BodyModel3D m;
  m.shoulder_width = W;
  m.asym_offset = delta;
  m.nose_ratio = alpha;
  m.points[nose] = {0, -alpha * W, 0};
  m.points[neck] = {0, 0, 0};
  m.points[l_shoulder] = {-W / 2, 0, delta};
  m.points[r_shoulder] = {W / 2, 0, 0};
  m.points[l_waist] = {-W / 2, W, 0};
  m.points[r_waist] = {W / 2, W, 0};
  return m;
}

inline BodyModel3D canonical_body_model(const BodyModelParams& p = {}) {
  return canonical_body_model(p.shoulder_width_mm, p.asym_offset_mm, p.nose_ratio);
}

/// Completes waists and nose from neck and shoulders assuming an upright person.
inline Keypoints2D complete_keypoints(const Eigen::Vector2d& n, const Eigen::Vector2d& sl, const Eigen::Vector2d& sr,
                                      double alpha) {
  const double d = (sr - sl).norm();
  if (!(d > 0) || !std::isfinite(d)) throw DataError("complete_keypoints: coincident or invalid shoulders");
  Keypoints2D k;
  k.shoulder_len = d;
  k.points[neck] = n;
  k.points[l_shoulder] = sl;
  k.points[r_shoulder] = sr;
  k.points[l_waist] = sl + Eigen::Vector2d(0, d);
  k.points[r_waist] = sr + Eigen::Vector2d(0, d);
  k.points[nose] = n - Eigen::Vector2d(0, alpha * d);
  return k;
}

inline Eigen::Vector2d project_point(const Eigen::Vector3d& X, const CameraIntrinsics& K) {
  if (!(X.z() > 0)) throw DataError("project: point behind camera");
  return {K.focal_px * X.x() / X.z() + K.principal_point.x(), K.focal_px * X.y() / X.z() + K.principal_point.y()};
}

inline Points2 project(const BodyModel3D& model, const PoseEstimate& pose, const CameraIntrinsics& K) {
  Points2 out;
  for (int i = 0; i < kNumPoints; ++i) out[i] = project_point(pose.to_camera(model.points[i]), K);
  return out;
}

inline Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d S;
  S << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return S;
}

inline Eigen::Matrix3d rotation_exp(const Eigen::Vector3d& w) {
  const double angle = w.norm();
  if (angle < 1e-15) return Eigen::Matrix3d::Identity() + skew(w);
  return Eigen::AngleAxisd(angle, w / angle).toRotationMatrix();
}

/// Angle in radians of the relative rotation A^T B.
inline double rotation_angle_between(const Eigen::Matrix3d& A, const Eigen::Matrix3d& B) {
  const double c = std::clamp(((A.transpose() * B).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

/// Body rotation from yaw (about body y), pitch (about x), roll (about z), radians.
inline Eigen::Matrix3d rotation_ypr(double yaw, double pitch, double roll) {
  return (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitY()) * Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitX()) *
          Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitZ()))
      .toRotationMatrix();
}

struct P6POptions {
  int max_iterations = 100;
  double step_tolerance = 1e-8;
  double max_rmse_px = 25;  // fits above this are reported as non-converged
};

namespace detail {

struct FitResult {
  Eigen::Matrix3d R;
  Eigen::Vector3d t;
  double sq_error = std::numeric_limits<double>::infinity();
  bool feasible = false;
};

inline bool all_in_front(const Points3& pts, const Eigen::Matrix3d& R, const Eigen::Vector3d& t) {
  for (const auto& p : pts) {
    if (!((R * p + t).z() > 0)) return false;
  }
  return true;
}

inline double squared_error(const Points3& pts, const Points2& obs, const Eigen::Matrix3d& R, const Eigen::Vector3d& t,
                            const CameraIntrinsics& K) {
  double s = 0;
  for (int i = 0; i < kNumPoints; ++i) {
    const Eigen::Vector3d X = R * pts[i] + t;
    const Eigen::Vector2d u(K.focal_px * X.x() / X.z() + K.principal_point.x(),
                            K.focal_px * X.y() / X.z() + K.principal_point.y());
    s += (u - obs[i]).squaredNorm();
  }
  return s;
}

// Levenberg-Marquardt on a left-multiplied axis-angle increment and a translation increment.
inline FitResult refine(const Points3& pts, const Points2& obs, Eigen::Matrix3d R, Eigen::Vector3d t,
                        const CameraIntrinsics& K, const P6POptions& opt) {
  FitResult res;
  if (!all_in_front(pts, R, t)) return res;
  double err = squared_error(pts, obs, R, t, K);
  double damping = 1e-3;
  for (int it = 0; it < opt.max_iterations; ++it) {
    Eigen::Matrix<double, 6, 6> H = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
    for (int i = 0; i < kNumPoints; ++i) {
      const Eigen::Vector3d Rp = R * pts[i];
      const Eigen::Vector3d X = Rp + t;
      const double iz = 1.0 / X.z();
      Eigen::Matrix<double, 2, 3> dpi;
      dpi << K.focal_px * iz, 0, -K.focal_px * X.x() * iz * iz, 0, K.focal_px * iz, -K.focal_px * X.y() * iz * iz;
      Eigen::Matrix<double, 3, 6> dX;
      dX.leftCols<3>() = -skew(Rp);
      dX.rightCols<3>() = Eigen::Matrix3d::Identity();
      const Eigen::Matrix<double, 2, 6> J = dpi * dX;
      const Eigen::Vector2d r(K.focal_px * X.x() * iz + K.principal_point.x() - obs[i].x(),
                              K.focal_px * X.y() * iz + K.principal_point.y() - obs[i].y());
      H.noalias() += J.transpose() * J;
      g.noalias() += J.transpose() * r;
    }
    bool accepted = false;
    Eigen::Matrix<double, 6, 1> step;
    for (int tries = 0; tries < 12 && !accepted; ++tries) {
      Eigen::Matrix<double, 6, 6> A = H;
      A.diagonal() += damping * (H.diagonal().array() + 1e-9).matrix();
      step = -A.ldlt().solve(g);
      const Eigen::Matrix3d Rn = rotation_exp(step.head<3>()) * R;
      const Eigen::Vector3d tn = t + step.tail<3>();
      if (all_in_front(pts, Rn, tn)) {
        const double en = squared_error(pts, obs, Rn, tn, K);
        if (en <= err) {
          R = Rn;
          t = tn;
          err = en;
          damping = std::max(damping * 0.3, 1e-12);
          accepted = true;
          break;
        }
      }
      damping *= 10;
    }
    if (!accepted) break;
    // Scale the translation part so the tolerance is comparable to radians.
    const double step_norm = std::sqrt(step.head<3>().squaredNorm() + (step.tail<3>() / std::max(t.norm(), 1.0)).squaredNorm());
    if (step_norm < opt.step_tolerance) break;
  }
  // Re-orthonormalise to remove drift from repeated products.
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
  R = svd.matrixU() * svd.matrixV().transpose();
  res.R = R;
  res.t = t;
  res.sq_error = squared_error(pts, obs, R, t, K);
  res.feasible = t.z() > 0 && all_in_front(pts, R, t);
  return res;
}

}  // namespace detail

/// Fits (R, t) minimising squared reprojection error. Multi-start over body
/// yaw {0, 90, -90, 180} degrees; returns the feasible fit with lowest error.
inline PoseEstimate solve_p6p(const BodyModel3D& model, const Keypoints2D& kp, const CameraIntrinsics& K,
                              const P6POptions& opt = {}) {
  for (const auto& p : kp.points) {
    if (!p.allFinite()) throw DataError("solve_p6p: non-finite keypoint");
  }
  const double d = (kp.points[r_shoulder] - kp.points[l_shoulder]).norm();
  if (!(d > 1e-9)) throw DataError("solve_p6p: degenerate keypoints (zero shoulder length)");

  // Depth from the apparent shoulder width; x, y from back-projecting the neck.
  const double z0 = model.shoulder_width * K.focal_px / d;
  const Eigen::Vector2d nc = kp.points[neck] - K.principal_point;
  const Eigen::Vector3d t0(nc.x() * z0 / K.focal_px, nc.y() * z0 / K.focal_px, z0);

  constexpr double deg = std::numbers::pi / 180.0;
  detail::FitResult best;
  for (double yaw : {0.0, 90.0, -90.0, 180.0}) {
    auto fit = detail::refine(model.points, kp.points, rotation_ypr(yaw * deg, 0, 0), t0, K, opt);
    if (fit.feasible && fit.sq_error < best.sq_error) best = fit;
  }
  if (!best.feasible) throw DataError("solve_p6p: no feasible pose");
  PoseEstimate pose;
  pose.R = best.R;
  pose.t = best.t;
  pose.reproj_rmse = std::sqrt(best.sq_error / static_cast<double>(kNumPoints));
  if (!(pose.reproj_rmse <= opt.max_rmse_px)) {
    throw DataError("solve_p6p: no convergence (rmse " + std::to_string(pose.reproj_rmse) + " px)");
  }
  return pose;
}

}  // namespace ecseg::bodypose
