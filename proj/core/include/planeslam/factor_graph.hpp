#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "planeslam/frame.hpp"
#include "planeslam/geometry.hpp"
#include "planeslam/landmark.hpp"

namespace planeslam {

enum class FactorKind { kPosePoint, kPosePlane, kBoxPlane, kPointPlane, kPlaneParallel, kPlanePerpendicular };
inline constexpr int kFactorKindCount = 6;
inline constexpr std::array<FactorKind, kFactorKindCount> kAllFactorKinds = {
    FactorKind::kPosePoint,  FactorKind::kPosePlane,     FactorKind::kBoxPlane,
    FactorKind::kPointPlane, FactorKind::kPlaneParallel, FactorKind::kPlanePerpendicular};

const char* toString(FactorKind kind);
FactorKind factorKindFromString(const std::string& name);
int residualDimension(FactorKind kind);

/// One residual term on the camera pose. Only the fields used by `kind` are
/// meaningful:
///   PosePoint           u_obs, p_w
///   PosePlane           pi_c, pi_w (pi_w sign-aligned with pi_c at build time)
///   BoxPlane            box_obs, vertices_w
///   PointPlane          pi_c, p_w
///   PlaneParallel       n_c, n_w
///   PlanePerpendicular  n_c, n_w, r_perp
struct Factor {
  FactorKind kind = FactorKind::kPosePoint;
  Vec2 u_obs = Vec2::Zero();
  Vec3 p_w = Vec3::Zero();
  Vec4 pi_c = Vec4::Zero();
  Vec4 pi_w = Vec4::Zero();
  PixelBox box_obs;
  std::array<Vec3, 4> vertices_w{Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
  Vec3 n_c = Vec3::Zero();
  Vec3 n_w = Vec3::Zero();
  Mat3 r_perp = Mat3::Identity();
  double weight = 1.0;
  double huber_delta = 1.0;
  // Bookkeeping only.
  int landmark_id = -1;
  int point_id = -1;
};

using ResidualVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 4, 1>;
using FactorJacobian = Eigen::Matrix<double, Eigen::Dynamic, 6, 0, 4, 6>;

// Pose in an arbitrary scalar type; used for long double finite differences.
template <typename S>
struct PoseT {
  Eigen::Matrix<S, 3, 3> R;
  Eigen::Matrix<S, 3, 1> t;
};

template <typename S>
PoseT<S> poseCast(const RigidTransform& t_cw) {
  return {t_cw.rotation().cast<S>(), t_cw.translation().cast<S>()};
}

// exp(xi) * T with xi = (omega, v).
template <typename S>
PoseT<S> leftPerturb(const PoseT<S>& pose, const Eigen::Matrix<S, 6, 1>& xi) {
  const Eigen::Matrix<S, 3, 1> omega = xi.template head<3>();
  const Eigen::Matrix<S, 3, 3> dr = so3Exp<S>(omega);
  const Eigen::Matrix<S, 3, 1> dt = so3LeftJacobian<S>(omega) * xi.template tail<3>();
  return {dr * pose.R, dr * pose.t + dt};
}

// (azimuth, elevation) of a normal.
template <typename S>
Eigen::Matrix<S, 2, 1> normalAngles(const Eigen::Matrix<S, 3, 1>& n) {
  using std::asin;
  using std::atan2;
  const S az = (n.x() == S(0) && n.y() == S(0)) ? S(0) : atan2(n.y(), n.x());
  const S el = asin(std::clamp(n.z(), S(-1), S(1)));
  return {az, el};
}

template <typename S>
Eigen::Matrix<S, 2, 1> angleDifference(const Eigen::Matrix<S, 2, 1>& a, const Eigen::Matrix<S, 2, 1>& b) {
  return {wrapAngle<S>(a.x() - b.x()), wrapAngle<S>(a.y() - b.y())};
}

template <typename S>
Eigen::Matrix<S, 2, 1> projectT(const Eigen::Matrix<S, 3, 1>& p_c, const CameraIntrinsics& k) {
  if (!(p_c.z() > S(1e-6))) throw Error(ErrorCode::kFactorNotEvaluable, "point behind camera");
  return {S(k.fx) * p_c.x() / p_c.z() + S(k.cx), S(k.fy) * p_c.y() / p_c.z() + S(k.cy)};
}

// Residual of `f` at `pose`. Throws FactorNotEvaluable for projections with
// non-positive depth.
template <typename S>
Eigen::Matrix<S, Eigen::Dynamic, 1, 0, 4, 1> residualT(const Factor& f, const PoseT<S>& pose,
                                                        const CameraIntrinsics& k) {
  using V3 = Eigen::Matrix<S, 3, 1>;
  Eigen::Matrix<S, Eigen::Dynamic, 1, 0, 4, 1> r(residualDimension(f.kind));
  switch (f.kind) {
    case FactorKind::kPosePoint: {
      const V3 p_c = pose.R * f.p_w.cast<S>() + pose.t;
      r = f.u_obs.cast<S>() - projectT<S>(p_c, k);
      break;
    }
    case FactorKind::kPosePlane: {
      const V3 n_p = pose.R * f.pi_w.head<3>().cast<S>();
      const S d_p = S(f.pi_w[3]) - n_p.dot(pose.t);
      const V3 n_c = f.pi_c.head<3>().cast<S>();
      r.template head<2>() = angleDifference<S>(normalAngles<S>(n_c), normalAngles<S>(n_p));
      r[2] = S(f.pi_c[3]) - d_p;
      break;
    }
    case FactorKind::kBoxPlane: {
      S u_min = 0, v_min = 0, u_max = 0, v_max = 0;
      for (std::size_t i = 0; i < 4; ++i) {
        const Eigen::Matrix<S, 2, 1> uv = projectT<S>(pose.R * f.vertices_w[i].cast<S>() + pose.t, k);
        if (i == 0 || uv.x() < u_min) u_min = uv.x();
        if (i == 0 || uv.y() < v_min) v_min = uv.y();
        if (i == 0 || uv.x() > u_max) u_max = uv.x();
        if (i == 0 || uv.y() > v_max) v_max = uv.y();
      }
      r[0] = S(f.box_obs.x_min) - u_min;
      r[1] = S(f.box_obs.y_min) - v_min;
      r[2] = S(f.box_obs.x_max) - u_max;
      r[3] = S(f.box_obs.y_max) - v_max;
      break;
    }
    case FactorKind::kPointPlane: {
      const V3 p_c = pose.R * f.p_w.cast<S>() + pose.t;
      r[0] = f.pi_c.head<3>().cast<S>().dot(p_c) + S(f.pi_c[3]);
      break;
    }
    case FactorKind::kPlaneParallel: {
      const V3 n_p = pose.R * f.n_w.cast<S>();
      r = angleDifference<S>(normalAngles<S>(V3(f.n_c.cast<S>())), normalAngles<S>(n_p));
      break;
    }
    case FactorKind::kPlanePerpendicular: {
      const V3 n_p = pose.R * f.n_w.cast<S>();
      const V3 n_rot = f.r_perp.cast<S>() * f.n_c.cast<S>();
      r = angleDifference<S>(normalAngles<S>(n_rot), normalAngles<S>(n_p));
      break;
    }
  }
  return r;
}

ResidualVec residual(const Factor& f, const RigidTransform& t_cw, const CameraIntrinsics& k);

// Analytic derivative of the residual with respect to a left tangent
// perturbation of the pose.
FactorJacobian jacobian(const Factor& f, const RigidTransform& t_cw, const CameraIntrinsics& k);

// H_delta applied to a squared norm: s for s <= delta^2, 2 delta sqrt(s) - delta^2 above.
double huberCost(double squared_norm, double delta);

struct SolverSettings {
  int max_iterations = 30;
  double lambda_init = 1e-4;
  double lambda_scale = 10.0;
  double convergence_tol = 1e-10;
  // Robust re-weighting rounds that drop PosePoint factors whose weighted
  // squared residual exceeds outlier_chi2; 0 disables.
  int outlier_rounds = 0;
  double outlier_chi2 = 5.991;
};

struct PoseProblem {
  RigidTransform T_cw;
  std::vector<Factor> factors;
  SolverSettings solver;
};

struct IterationLog {
  int iteration = 0;
  int round = 0;
  double lambda = 0.0;
  double cost = 0.0;
  double step_norm = 0.0;
  bool accepted = false;
};

struct OptimizeResult {
  RigidTransform T_cw;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
  // Cost after every accepted step, starting with the initial cost.
  std::vector<double> accepted_costs;
  std::vector<IterationLog> log;
  // Factors skipped at the final pose because they were not evaluable.
  int skipped_factors = 0;
  // Per factor: excluded by the outlier rounds.
  std::vector<bool> outlier;
};

// Sum of w * H(|r|^2) over the evaluable, non-excluded factors.
double problemCost(std::span<const Factor> factors, const RigidTransform& t_cw, const CameraIntrinsics& k,
                   const std::vector<bool>* excluded = nullptr, int* skipped = nullptr);

// Levenberg-Marquardt with IRLS Huber weights. Throws NoFactors.
OptimizeResult optimize(const PoseProblem& problem, const CameraIntrinsics& k);

void writeSolveLog(std::ostream& os, const OptimizeResult& result);

struct FactorWeights {
  double pose_point = 1.0;
  double pose_plane = 100.0;
  double box_plane = 0.01;
  double point_plane = 400.0;
  double plane_parallel = 50.0;
  double plane_perpendicular = 50.0;
};

struct HuberDeltas {
  double pose_point = 2.0;
  double pose_plane = 0.02;
  double box_plane = 2.0;
  double point_plane = 0.02;
  double plane_parallel = 0.02;
  double plane_perpendicular = 0.02;
};

struct FactorConfig {
  FactorWeights weights;
  HuberDeltas deltas;
  double angle_struct_tol = deg2rad(5.0);

  void validate() const;
};

// Factors for one frame at its initial pose frame.T_cw, using frame.matches
// against `map`. BoxPlane factors are only built when the landmark's vertices
// project inside the image, since detection boxes are clipped to it.
PoseProblem buildProblem(const Frame& frame, std::span<const PlaneLandmark> map, const CameraIntrinsics& k,
                         const FactorConfig& cfg, const SolverSettings& solver);

}  // namespace planeslam
