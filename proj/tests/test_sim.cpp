#include <gtest/gtest.h>

#include <random>

#include "planeslam/sim.hpp"

using namespace planeslam;

namespace {

const CameraIntrinsics kK;

Trajectory circle(int n, double radius) {
  Trajectory t;
  for (int i = 0; i < n; ++i) {
    const double a = 2 * kPi * i / n;
    t.push_back({0.1 * i, RigidTransform(Mat3::Identity(), Vec3(radius * std::cos(a), radius * std::sin(a), 0.3 * a))});
  }
  return t;
}

}  // namespace

TEST(Scene, PresetsAndUnknownName) {
  const SceneSpec desk = scenePreset("ambiguous-desk");
  EXPECT_EQ(desk.objects.size(), 5u);
  const Scene s = generateScene(desk);
  // Table plus four structured tops.
  EXPECT_EQ(s.planes.size(), 5u);
  EXPECT_EQ(generateScene(scenePreset("book-stack")).planes.size(), 6u);
  try {
    scenePreset("kitchen");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidSpec);
  }
}

TEST(Scene, MapPointsLieOnTheirPlanes) {
  const Scene s = generateScene(scenePreset("ambiguous-desk"));
  ASSERT_FALSE(s.map_points.empty());
  for (const SceneMapPoint& p : s.map_points) {
    EXPECT_NEAR(s.planes[static_cast<std::size_t>(p.plane)].plane.signedDistance(p.p_w), 0.0, 1e-12);
  }
  for (const ScenePlane& p : s.planes) {
    for (const Vec3& v : p.vertices) EXPECT_NEAR(p.plane.signedDistance(v), 0.0, 1e-12);
  }
}

TEST(Scene, SameSeedSameScene) {
  SceneSpec spec = scenePreset("ambiguous-desk");
  spec.rng_seed = 9;
  const Scene a = generateScene(spec);
  const Scene b = generateScene(spec);
  ASSERT_EQ(a.map_points.size(), b.map_points.size());
  for (std::size_t i = 0; i < a.map_points.size(); ++i) EXPECT_EQ(a.map_points[i].p_w, b.map_points[i].p_w);
}

TEST(Trajectory, OrbitLooksAtTarget) {
  TrajectorySpec spec;
  spec.frames = 12;
  const std::vector<RigidTransform> poses = generateTrajectory(spec);
  ASSERT_EQ(poses.size(), 12u);
  for (const RigidTransform& t : poses) {
    const Vec3 target_c = t * spec.look_at;
    EXPECT_NEAR(target_c.x(), 0.0, 1e-9);
    EXPECT_NEAR(target_c.y(), 0.0, 1e-9);
    EXPECT_NEAR(target_c.z(), std::hypot(spec.radius, spec.height), 1e-9);
    EXPECT_NEAR(t.inverse().translation().z(), spec.height, 1e-12);
  }
  spec.frames = 0;
  EXPECT_TRUE(generateTrajectory(spec).empty());
  spec.frames = -1;
  EXPECT_THROW(generateTrajectory(spec), Error);
}

TEST(Trajectory, KindNames) {
  EXPECT_EQ(trajectoryKindFromString("arc"), TrajectoryKind::kArc);
  EXPECT_THROW(trajectoryKindFromString("spiral"), Error);
}

TEST(Render, NoiselessObservationsAreExact) {
  const Scene s = generateScene(scenePreset("ambiguous-desk"));
  TrajectorySpec spec;
  spec.frames = 8;
  const RigidTransform t = generateTrajectory(spec)[3];
  const SimulatedFrame f = renderFrame(s, t, kK, NoiseSpec{}, 1);
  ASSERT_FALSE(f.frame.observations.empty());
  ASSERT_EQ(f.truth.plane_labels.size(), f.frame.observations.size());
  for (std::size_t i = 0; i < f.frame.observations.size(); ++i) {
    const Plane truth = transformPlane(s.planes[static_cast<std::size_t>(f.truth.plane_labels[i])].plane, t);
    const Plane& seen = f.frame.observations[i].plane;
    EXPECT_NEAR(std::abs(seen.normal().dot(truth.normal())), 1.0, 1e-12);
    EXPECT_NEAR(seen.offset(), truth.offset(), 1e-9);
  }
  for (std::size_t i = 0; i < f.frame.point_observations.size(); ++i) {
    const PointObservation& p = f.frame.point_observations[i];
    EXPECT_NEAR((projectPoint(t * p.p_w, kK) - p.pixel).norm(), 0.0, 1e-9);
  }
  EXPECT_FALSE(f.frame.boxes.empty());
  for (bool w : f.withhold) EXPECT_FALSE(w);
}

TEST(Render, SeedControlsNoise) {
  const Scene s = generateScene(scenePreset("ambiguous-desk"));
  const RigidTransform t = lookAt(Vec3(1.2, 0.5, 1.2), Vec3::Zero());
  NoiseSpec noise;
  noise.pixel_sigma = 0.5;
  noise.depth_sigma = 0.002;
  const SimulatedFrame a = renderFrame(s, t, kK, noise, 3);
  const SimulatedFrame b = renderFrame(s, t, kK, noise, 3);
  const SimulatedFrame c = renderFrame(s, t, kK, noise, 4);
  ASSERT_FALSE(a.frame.point_observations.empty());
  EXPECT_EQ(a.frame.point_observations[0].pixel, b.frame.point_observations[0].pixel);
  EXPECT_NE(a.frame.point_observations[0].pixel, c.frame.point_observations[0].pixel);
}

TEST(Render, NothingVisible) {
  const Scene s = generateScene(scenePreset("ambiguous-desk"));
  const RigidTransform away = lookAt(Vec3(0, 0, 1), Vec3(0, 0, 3));
  try {
    renderFrame(s, away, kK, NoiseSpec{}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNothingVisible);
  }
}

TEST(Occlusion, BookHidesTablePointBeneath) {
  const Scene s = generateScene(scenePreset("ambiguous-desk"));
  const ObjectSpec& book = s.spec.objects[0];
  const Vec3 below(book.position.x(), book.position.y(), 0.0);
  EXPECT_TRUE(occluded(s, Vec3(book.position.x(), book.position.y(), 1.0), below));
  EXPECT_FALSE(occluded(s, Vec3(0, 0.45, 1.0), Vec3(0, 0.45, 0.0)));
}

TEST(Ate, IdenticalAndRigidlyMovedGiveZero) {
  const Trajectory gt = circle(50, 1.0);
  EXPECT_NEAR(evaluateAte(gt, gt).rmse, 0.0, 1e-12);

  const RigidTransform g(Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()).toRotationMatrix(), Vec3(4, -2, 1));
  Trajectory moved = gt;
  for (StampedPose& p : moved) p.T_wc = g * p.T_wc;
  const AteResult r = evaluateAte(moved, gt);
  EXPECT_NEAR(r.rmse, 0.0, 1e-9);
  EXPECT_EQ(r.errors.size(), gt.size());
}

TEST(Ate, KnownOffsetsGiveKnownRmse) {
  // Alternating +-e along z about a planar circle: alignment cannot remove it.
  Trajectory gt;
  Trajectory est;
  for (int i = 0; i < 40; ++i) {
    const double a = 2 * kPi * i / 40;
    const Vec3 p(std::cos(a), std::sin(a), 0);
    gt.push_back({double(i), RigidTransform(Mat3::Identity(), p)});
    est.push_back({double(i), RigidTransform(Mat3::Identity(), p + Vec3(0, 0, i % 2 ? 0.01 : -0.01))});
  }
  const AteResult r = evaluateAte(est, gt);
  EXPECT_NEAR(r.rmse, 0.01, 1e-9);
  EXPECT_NEAR(r.stddev, 0.0, 1e-9);
}

TEST(Ate, TimestampMatching) {
  const Trajectory gt = circle(10, 1.0);
  Trajectory est = gt;
  for (StampedPose& p : est) p.timestamp += 0.01;
  EXPECT_EQ(evaluateAte(est, gt, 0.02).errors.size(), gt.size());
  try {
    evaluateAte(est, gt, 0.005);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoMatches);
  }
}

TEST(NoiseSpec, Validation) {
  NoiseSpec n;
  n.detection_dropout = 1.5;
  EXPECT_THROW(n.validate(), Error);
  n = NoiseSpec{};
  n.depth_sigma = -1;
  EXPECT_THROW(n.validate(), Error);
}
