#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ecseg/gazegeom.hpp"
#include "oracles.hpp"

using namespace ecseg;
using namespace ecseg::gazegeom;
using bodypose::PoseEstimate;

namespace {
constexpr double kPi = std::numbers::pi;

PoseEstimate pose_of(const Eigen::Matrix3d& R, const Eigen::Vector3d& t) {
  PoseEstimate p;
  p.R = R;
  p.t = t;
  return p;
}

PoseEstimate random_rigid(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1, 1);
  return pose_of(bodypose::rotation_ypr(kPi * U(rng), 0.5 * kPi * U(rng), kPi * U(rng)),
                 {1000 * U(rng), 1000 * U(rng), 3000 + 1000 * U(rng)});
}

}  // namespace

TEST(BodyFrame, IdentityPose) {
  const Eigen::Vector3d g = Eigen::Vector3d(1, 2, 3).normalized(), o(4, 5, 6);
  const auto ray = to_body_frame(g, o, pose_of(Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero()));
  EXPECT_EQ(ray.direction, g);
  EXPECT_EQ(ray.origin, o);
}

TEST(BodyFrame, QuarterTurnAboutY) {
  const Eigen::Matrix3d R = Eigen::AngleAxisd(kPi / 2, Eigen::Vector3d::UnitY()).toRotationMatrix();
  const auto ray = to_body_frame({1, 0, 0}, {0, 0, 0}, pose_of(R, Eigen::Vector3d::Zero()));
  EXPECT_LT((ray.direction - Eigen::Vector3d(0, 0, 1)).norm(), 1e-12);
}

TEST(BodyFrame, OriginAtTranslationMapsToZero) {
  std::mt19937_64 rng(1);
  const auto p = random_rigid(rng);
  EXPECT_LT(to_body_frame({0, 0, 1}, p.t, p).origin.norm(), 1e-9);
}

TEST(BodyFrame, CompositionIdentity) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> N(0, 1);
  for (int i = 0; i < 200; ++i) {
    const auto p = random_rigid(rng);
    GazeRayBody ray{{N(rng) * 300, N(rng) * 300, N(rng) * 300}, Eigen::Vector3d(N(rng), N(rng), N(rng)).normalized()};
    const auto cam = to_camera_frame(ray, p);
    const auto back = to_body_frame(cam.direction, cam.origin, p);
    EXPECT_LT((back.origin - ray.origin).norm(), 1e-9);
    EXPECT_LT((back.direction - ray.direction).norm(), 1e-9);
    EXPECT_NEAR(back.direction.norm(), 1.0, 1e-12);
  }
}

TEST(Cylinder, AxialFrontRay) {
  const auto hit = intersect_cylinder({{0, 0, 0}, {0, 0, -1}}, 1000);
  ASSERT_TRUE(hit);
  EXPECT_LT((hit->point - Eigen::Vector3d(0, 0, -1000)).norm(), 1e-9);
  EXPECT_NEAR(hit->ray_param, 1000, 1e-9);
}

TEST(Cylinder, DiagonalRay) {
  const auto hit = intersect_cylinder({{0, 0, 0}, Eigen::Vector3d(1, 0, -1).normalized()}, 1000);
  ASSERT_TRUE(hit);
  EXPECT_NEAR(hit->ray_param, 1000, 1e-9);
  EXPECT_NEAR(hit->point.x(), 1000 / std::sqrt(2.0), 1e-9);
  EXPECT_NEAR(hit->point.z(), -1000 / std::sqrt(2.0), 1e-9);
}

TEST(Cylinder, RayAlongAxisMisses) { EXPECT_FALSE(intersect_cylinder({{0, 0, 0}, {0, 1, 0}}, 1000)); }

TEST(Cylinder, OutsideRayPointingAwayMisses) {
  EXPECT_FALSE(intersect_cylinder({{0, 0, -2000}, {0, 0, -1}}, 1000));
}

TEST(Cylinder, HitsLieOnSurfaceWithPositiveParameter) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> N(0, 1);
  for (int i = 0; i < 500; ++i) {
    GazeRayBody ray{{N(rng) * 200, N(rng) * 200, N(rng) * 200}, Eigen::Vector3d(N(rng), N(rng), N(rng)).normalized()};
    const auto hit = intersect_cylinder(ray, 1000);
    ASSERT_TRUE(hit);  // origin inside the cylinder: every non-axial ray leaves it
    const double rr = hit->point.x() * hit->point.x() + hit->point.z() * hit->point.z();
    EXPECT_LT(std::abs(rr - 1e6), 1e-3 * 1e6);
    EXPECT_GT(hit->ray_param, 0);
  }
}

TEST(Unroll, Examples) {
  auto u0 = unroll({{0, 0, -1000}, 1}, 1000);
  EXPECT_NEAR(u0.u, 0, 1e-12);
  EXPECT_NEAR(u0.v, 0, 1e-12);
  EXPECT_EQ(u0.kind, PlaneKind::cylinder);
  auto u1 = unroll({{707.1, 0, -707.1}, 1}, 1000);
  EXPECT_NEAR(u1.u, 1000 * kPi / 4, 1e-9);
  EXPECT_NEAR(u1.u, 785.40, 5e-3);
  auto u2 = unroll({{0, 250, 1000}, 1}, 1000);
  EXPECT_NEAR(u2.u, 1000 * kPi, 1e-9);
  EXPECT_NEAR(u2.v, 250, 1e-12);
}

TEST(Unroll, RoundTripAndRange) {
  const double r = 1000;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> phi(-kPi, kPi), y(-2000, 2000);
  for (int i = 0; i < 10000; ++i) {
    const double a = phi(rng);
    const Eigen::Vector3d p(r * std::sin(a), y(rng), -r * std::cos(a));
    const auto q = unroll({p, 1}, r);
    EXPECT_GT(q.u, -kPi * r);
    EXPECT_LE(q.u, kPi * r);
    EXPECT_LT((roll(q, r) - p).norm(), 1e-6 * r);
  }
}

TEST(CameraPlane, Examples) {
  auto a = camera_plane_point({0, 0, -1}, {0, 0, 1000});
  ASSERT_TRUE(a);
  EXPECT_NEAR(a->u, 0, 1e-12);
  EXPECT_NEAR(a->v, 0, 1e-12);
  EXPECT_EQ(a->kind, PlaneKind::camera);
  auto b = camera_plane_point({0, 0, -1}, {100, 0, 1000});
  ASSERT_TRUE(b);
  EXPECT_NEAR(b->u, 100, 1e-12);
  auto c = camera_plane_point(Eigen::Vector3d(1, 0, -1).normalized(), {0, 0, 1000});
  ASSERT_TRUE(c);
  EXPECT_NEAR(c->u, 1000, 1e-9);
  EXPECT_NEAR(c->v, 0, 1e-9);
  EXPECT_FALSE(camera_plane_point({0, 0, 1}, {0, 0, 1000}));
}

TEST(CylinderPlane, InvariantUnderRigidCameraMotion) {
  // Fixed body-frame scene; each camera placement sees it differently but the
  // unrolled gaze point must not move.
  std::mt19937_64 rng(6);
  std::normal_distribution<double> N(0, 1);
  const double r = 1000;
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector3d o_body(N(rng) * 100, -180 + N(rng) * 50, -40 + N(rng) * 50);
    const Eigen::Vector3d g_body = Eigen::Vector3d(N(rng), N(rng), N(rng)).normalized();
    std::optional<PlanePoint2D> first;
    for (int k = 0; k < 5; ++k) {
      const auto cam = random_rigid(rng);
      const auto pt = cylinder_plane_point(cam.R * g_body, cam.R * o_body + cam.t, cam, r);
      ASSERT_TRUE(pt);
      if (!first) {
        first = pt;
      } else {
        EXPECT_LT(std::hypot(pt->u - first->u, pt->v - first->v), 1e-6 * r);
      }
    }
  }
}
