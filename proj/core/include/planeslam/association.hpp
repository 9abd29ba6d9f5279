#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "planeslam/geometry.hpp"
#include "planeslam/landmark.hpp"
#include "planeslam/plane_processing.hpp"

namespace planeslam {

enum class AssociationMode {
  kIntegrated,  // class ids, projection IoU and the rank test on top of geometry
  kParamsOnly,  // plane parameters and edge points only
};

// Mean of W used by the rank test.
enum class RankTestMean {
  kUStatistic,        // I*J/2
  kPaperRankSumMean,  // I*(I+J+1)/2
};

struct AssociationConfig {
  double beta_T = deg2rad(10.0);
  double d_T = 0.05;
  double d_T_prime = 0.02;
  double R_T = 0.8;
  double iou_assoc_min = 0.3;
  double alpha = 0.05;
  double z_crit = 1.959963984540054;
  int np_min_samples = 10;
  RankTestMean np_mean = RankTestMean::kUStatistic;
  AssociationMode mode = AssociationMode::kIntegrated;
  // Map point <-> frame plane distance gate.
  double point_plane_dist_max = 0.01;

  // Two-sided standard normal critical value for significance `alpha`.
  static double criticalValue(double alpha);
  void validate() const;
};

const char* toString(AssociationMode mode);
const char* toString(RankTestMean mean);

// Angle between the rotated frame normal and the map normal, in [0, pi/2].
double normalAngle(const Plane& pi_c, const Plane& pi_w, const RigidTransform& t_cw);

bool angleGate(const Plane& pi_c, const Plane& pi_w, const RigidTransform& t_cw, double beta_T);

// |t^T n_c + d_c - d_w| with (n_c, d_c) sign-aligned to n_w.
double offsetResidual(const Plane& pi_c, const Plane& pi_w, const RigidTransform& t_cw);
bool offsetGate(const Plane& pi_c, const Plane& pi_w, const RigidTransform& t_cw, double d_T);

struct EdgeGateResult {
  bool passed = false;
  double fraction = 0.0;
};

EdgeGateResult edgePointGate(std::span<const Vec3> edge_points_c, const Plane& pi_w,
                             const RigidTransform& t_cw, double d_T_prime, double R_T);

struct RankTestAxis {
  double u_c = 0.0;
  double u_w = 0.0;
  double w = 0.0;
  double mean = 0.0;
  double variance = 0.0;
  double z = 0.0;
  bool passed = true;
};

struct RankTestResult {
  bool passed = true;
  std::array<RankTestAxis, 3> axes{};
};

// Midranks of `values` (1-based, ties share the average rank).
std::vector<double> midranks(std::span<const double> values);

// One-dimensional Mann-Whitney test with tie-corrected variance.
RankTestAxis mannWhitneyAxis(std::span<const double> sample_c, std::span<const double> sample_w,
                             double z_crit, RankTestMean mean_kind = RankTestMean::kUStatistic);

// Per-axis test on x, y and z; all three must pass. Throws InsufficientSamples
// when either sample is smaller than cfg.np_min_samples.
RankTestResult mannWhitneyGate(std::span<const Vec3> m_c, std::span<const Vec3> m_w,
                               const AssociationConfig& cfg);

// Bounding box of the landmark's vertices (or edge points when it has no
// vertices), projected and clipped to the image. Throws NotVisible.
PixelBox projectLandmarkBox(const PlaneLandmark& lm, const RigidTransform& t_cw, const CameraIntrinsics& k);

bool associatePointPlane(const Vec3& p_w, const PlaneObservation& obs, const RigidTransform& t_cw,
                         const CameraIntrinsics& k, double dist_max);

enum class PairRule { kGeometric, kSemantic, kMixed };
const char* toString(PairRule rule);

struct GateTrace {
  std::size_t frame_index = 0;
  LandmarkId landmark_id = 0;
  PairRule rule = PairRule::kGeometric;
  double angle = 0.0;
  bool angle_pass = false;
  double offset = 0.0;
  bool offset_pass = false;
  double edge_fraction = 0.0;
  bool edge_pass = false;
  bool class_match = true;
  double iou = 0.0;
  bool iou_pass = false;
  bool np_applied = false;
  RankTestResult np;
  bool candidate = false;
  bool accepted = false;
  double score = 0.0;
};

struct PlaneMatch {
  std::size_t frame_index = 0;
  LandmarkId landmark_id = 0;
  double score = 0.0;
  PairRule rule = PairRule::kGeometric;
};

struct AssociationResult {
  std::vector<PlaneMatch> matches;
  std::vector<std::size_t> unmatched_frame;
  std::vector<GateTrace> traces;

  std::optional<LandmarkId> landmarkFor(std::size_t frame_index) const;
};

/// One side of a plane pair, as seen by the pair rule.
struct PlaneCandidate {
  const Plane* plane = nullptr;
  std::span<const Vec3> edge_points;
  int class_id = kNoClass;
  std::optional<PixelBox> detection_box;
  std::optional<PixelBox> projection_box;
  std::span<const Vec3> points;  // associated map point positions, world frame
};

// Evaluates the plane-pair rule. `frame` is expressed in the camera frame of
// t_cw, `map` in the world frame.
GateTrace evaluatePlanePair(const PlaneCandidate& frame, const PlaneCandidate& map,
                            const RigidTransform& t_cw, const AssociationConfig& cfg);

// Frame-to-map plane association. `frame_points[i]` and `map_points[j]` hold
// the world positions of map points tied to the i-th observation and j-th
// landmark; either span may be empty, which disables the rank test.
AssociationResult associatePlanes(std::span<const PlaneObservation> frame,
                                  std::span<const PointCloud> frame_points,
                                  std::span<const PlaneLandmark> map,
                                  std::span<const PointCloud> map_points, const RigidTransform& t_cw,
                                  const CameraIntrinsics& k, const AssociationConfig& cfg);

// One line per evaluated pair.
std::string formatTrace(const GateTrace& trace);
void writeTraceLog(std::ostream& os, const AssociationResult& result);

}  // namespace planeslam
