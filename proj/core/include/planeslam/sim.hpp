#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "planeslam/frame.hpp"
#include "planeslam/geometry.hpp"

namespace planeslam {

/// Object resting on the table: a cuboid whose base centre sits at
/// (position.x, position.y, 0), rotated by `yaw` about +z.
struct ObjectSpec {
  std::string name;
  int class_id = 0;
  Vec2 position = Vec2::Zero();
  double yaw = 0.0;
  Vec3 size = Vec3(0.3, 0.2, 0.02);  // x, y, height
  // Structured objects contribute their top face as a scene plane; the rest
  // only occlude and produce detections.
  bool structured = true;
};

struct SceneSpec {
  // Table top is the rectangle |x| <= w/2, |y| <= h/2 in z = 0, normal +z.
  Vec2 table_size = Vec2(1.6, 1.0);
  std::vector<ObjectSpec> objects;
  double map_point_density = 300.0;  // points per square metre of plane
  std::uint64_t rng_seed = 0;

  void validate() const;
};

// "ambiguous-desk" or "book-stack". Throws InvalidSpec for other names.
SceneSpec scenePreset(const std::string& name);

enum class TrajectoryKind { kOrbit, kArc, kStationary };
const char* toString(TrajectoryKind kind);
TrajectoryKind trajectoryKindFromString(const std::string& name);

struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::kOrbit;
  double radius = 1.6;
  double height = 1.2;
  int frames = 100;
  double rate_hz = 30.0;
  Vec3 look_at = Vec3::Zero();
  double start_angle = 0.0;
  double arc_span = deg2rad(90.0);  // total sweep of kArc

  void validate() const;
};

struct NoiseSpec {
  double depth_sigma = 0.0;
  double pixel_sigma = 0.0;
  double detection_dropout = 0.0;
  double association_withhold = 0.0;
  double outlier_fraction = 0.0;
  double outlier_offset_px = 50.0;

  void validate() const;
};

struct RenderSettings {
  double cloud_spacing = 0.01;
  double edge_spacing = 0.005;
  int min_cloud_points = 30;
  // Used only to report an inlier ratio for the observed plane.
  double inlier_distance = 0.01;
};

struct ScenePlane {
  int id = 0;  // ground-truth plane id
  Plane plane;
  int class_id = kNoClass;
  std::array<Vec3, 4> vertices;  // counterclockwise about +z
  int object = -1;               // index into SceneSpec::objects, -1 for the table
};

struct SceneMapPoint {
  MapPointId id = 0;
  Vec3 p_w = Vec3::Zero();
  int plane = -1;
};

struct Scene {
  SceneSpec spec;
  std::vector<ScenePlane> planes;
  std::vector<SceneMapPoint> map_points;
};

Scene generateScene(const SceneSpec& spec);

// Camera poses T_cw, looking at spec.look_at from above the table.
std::vector<RigidTransform> generateTrajectory(const TrajectorySpec& spec);

// Camera pose whose optical axis points from `eye` to `target`; the image x
// axis stays horizontal.
RigidTransform lookAt(const Vec3& eye, const Vec3& target);

/// Ground truth attached to a rendered frame. Kept apart from Frame so the
/// pipeline stages never see it.
struct FrameTruth {
  RigidTransform T_cw;
  std::vector<int> plane_labels;  // per observation: ScenePlane::id
  std::vector<int> point_labels;  // per point observation: plane id
};

struct SimulatedFrame {
  Frame frame;  // observations are raw: class, box and quality not yet assigned
  // Observations whose association the pipeline must skip.
  std::vector<bool> withhold;
  FrameTruth truth;
};

// Throws NothingVisible when no plane has enough visible points.
SimulatedFrame renderFrame(const Scene& scene, const RigidTransform& t_cw, const CameraIntrinsics& k,
                           const NoiseSpec& noise, std::uint64_t rng_seed,
                           const RenderSettings& settings = RenderSettings{});

// True if the segment from `eye` to `p` passes through an object before reaching p.
bool occluded(const Scene& scene, const Vec3& eye, const Vec3& p);

struct StampedPose {
  double timestamp = 0.0;
  RigidTransform T_wc;
};

using Trajectory = std::vector<StampedPose>;

struct AteResult {
  double rmse = 0.0;
  double stddev = 0.0;
  std::vector<double> errors;  // per matched estimated pose
};

// Rigid (scale 1) alignment of matched positions, then translational RMSE and
// population standard deviation. Throws NoMatches for fewer than 2 pairs.
AteResult evaluateAte(const Trajectory& estimated, const Trajectory& ground_truth, double max_dt = 0.02);

}  // namespace planeslam
