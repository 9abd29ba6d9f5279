#include "planeslam/factor_graph.hpp"

#include <Eigen/Cholesky>

#include <cstdio>
#include <map>
#include <ostream>

namespace planeslam {
namespace {

using Mat26 = Eigen::Matrix<double, 2, 6>;
using Mat36 = Eigen::Matrix<double, 3, 6>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

// d(azimuth, elevation)/dn.
Eigen::Matrix<double, 2, 3> anglesJacobian(const Vec3& n) {
  Eigen::Matrix<double, 2, 3> a = Eigen::Matrix<double, 2, 3>::Zero();
  const double rho2 = n.x() * n.x() + n.y() * n.y();
  if (rho2 > 0.0) {
    a(0, 0) = -n.y() / rho2;
    a(0, 1) = n.x() / rho2;
  }
  const double c2 = 1.0 - n.z() * n.z();
  if (c2 > 0.0) a(1, 2) = 1.0 / std::sqrt(c2);
  return a;
}

// d(R p + t)/dxi for the left perturbation.
Mat36 pointJacobian(const Vec3& p_c) {
  Mat36 j;
  j.leftCols<3>() = -skew(p_c);
  j.rightCols<3>() = Mat3::Identity();
  return j;
}

Eigen::Matrix<double, 2, 3> projectionJacobian(const Vec3& p_c, const CameraIntrinsics& k) {
  if (!(p_c.z() > 1e-6)) throw Error(ErrorCode::kFactorNotEvaluable, "point behind camera");
  const double iz = 1.0 / p_c.z();
  Eigen::Matrix<double, 2, 3> d;
  d << k.fx * iz, 0.0, -k.fx * p_c.x() * iz * iz, 0.0, k.fy * iz, -k.fy * p_c.y() * iz * iz;
  return d;
}

// Residual rows of a rotated-normal angle difference q(const) - q(R n_w).
Mat26 rotatedNormalJacobian(const Vec3& n_p) {
  Mat26 j = Mat26::Zero();
  j.leftCols<3>() = anglesJacobian(n_p) * skew(n_p);
  return j;
}

double robustWeight(double squared_norm, double delta) {
  if (squared_norm <= delta * delta) return 1.0;
  return delta / std::sqrt(squared_norm);
}

struct LmState {
  RigidTransform pose;
  double cost = 0.0;
};

void runLevenbergMarquardt(std::span<const Factor> factors, const std::vector<bool>& excluded,
                           const CameraIntrinsics& k, const SolverSettings& s, int round, LmState& state,
                           OptimizeResult& out) {
  state.cost = problemCost(factors, state.pose, k, &excluded);
  out.accepted_costs.assign(1, state.cost);
  double lambda = s.lambda_init;
  out.converged = false;

  for (int it = 0; it < s.max_iterations; ++it) {
    Mat6 h = Mat6::Zero();
    Vec6 g = Vec6::Zero();
    for (std::size_t i = 0; i < factors.size(); ++i) {
      if (excluded[i]) continue;
      const Factor& f = factors[i];
      try {
        const ResidualVec r = residual(f, state.pose, k);
        const FactorJacobian j = jacobian(f, state.pose, k);
        const double w = f.weight * robustWeight(r.squaredNorm(), f.huber_delta);
        h.noalias() += w * j.transpose() * j;
        g.noalias() += w * j.transpose() * r;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kFactorNotEvaluable) throw;
      }
    }
    if (g.lpNorm<Eigen::Infinity>() == 0.0) {
      out.converged = true;
      break;
    }

    Mat6 a = h;
    for (int d = 0; d < 6; ++d) a(d, d) += lambda * std::max(h(d, d), 1e-9);
    const Vec6 step = -a.ldlt().solve(g);
    const RigidTransform candidate = state.pose.leftPerturbed(step);
    const double cost = problemCost(factors, candidate, k, &excluded);
    ++out.iterations;

    IterationLog entry;
    entry.iteration = out.iterations;
    entry.round = round;
    entry.lambda = lambda;
    entry.step_norm = step.norm();

    if (cost < state.cost) {
      const double relative = (state.cost - cost) / state.cost;
      state.pose = candidate;
      state.cost = cost;
      out.accepted_costs.push_back(cost);
      lambda = std::max(lambda / s.lambda_scale, 1e-12);
      entry.cost = cost;
      entry.accepted = true;
      out.log.push_back(entry);
      if (relative < s.convergence_tol) {
        out.converged = true;
        break;
      }
    } else {
      entry.cost = state.cost;
      out.log.push_back(entry);
      // No descent left at machine precision.
      if (step.norm() < 1e-12 || lambda > 1e12) {
        out.converged = true;
        break;
      }
      lambda *= s.lambda_scale;
    }
  }
}

}  // namespace

const char* toString(FactorKind kind) {
  switch (kind) {
    case FactorKind::kPosePoint: return "PosePoint";
    case FactorKind::kPosePlane: return "PosePlane";
    case FactorKind::kBoxPlane: return "BoxPlane";
    case FactorKind::kPointPlane: return "PointPlane";
    case FactorKind::kPlaneParallel: return "PlaneParallel";
    case FactorKind::kPlanePerpendicular: return "PlanePerpendicular";
  }
  return "Unknown";
}

FactorKind factorKindFromString(const std::string& name) {
  for (FactorKind kind : kAllFactorKinds) {
    if (name == toString(kind)) return kind;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown factor kind '" + name + "'");
}

int residualDimension(FactorKind kind) {
  switch (kind) {
    case FactorKind::kPosePoint: return 2;
    case FactorKind::kPosePlane: return 3;
    case FactorKind::kBoxPlane: return 4;
    case FactorKind::kPointPlane: return 1;
    case FactorKind::kPlaneParallel: return 2;
    case FactorKind::kPlanePerpendicular: return 2;
  }
  return 0;
}

ResidualVec residual(const Factor& f, const RigidTransform& t_cw, const CameraIntrinsics& k) {
  return residualT<double>(f, poseCast<double>(t_cw), k);
}

FactorJacobian jacobian(const Factor& f, const RigidTransform& t_cw, const CameraIntrinsics& k) {
  const Mat3& r = t_cw.rotation();
  const Vec3& t = t_cw.translation();
  FactorJacobian j(residualDimension(f.kind), 6);
  switch (f.kind) {
    case FactorKind::kPosePoint: {
      const Vec3 p_c = r * f.p_w + t;
      j = -projectionJacobian(p_c, k) * pointJacobian(p_c);
      break;
    }
    case FactorKind::kPosePlane: {
      const Vec3 n_p = r * f.pi_w.head<3>();
      j.topRows<2>() = rotatedNormalJacobian(n_p);
      // d(d_p) = -n_p . dv; the rotational part cancels.
      j.row(2).setZero();
      j.block<1, 3>(2, 3) = n_p.transpose();
      break;
    }
    case FactorKind::kBoxPlane: {
      std::array<Vec3, 4> p_c;
      std::array<Vec2, 4> uv;
      for (std::size_t i = 0; i < 4; ++i) {
        p_c[i] = r * f.vertices_w[i] + t;
        uv[i] = projectPoint(p_c[i], k);
      }
      // Active vertex per edge; ties keep the lowest index.
      std::size_t active[4] = {0, 0, 0, 0};
      for (std::size_t i = 1; i < 4; ++i) {
        if (uv[i].x() < uv[active[0]].x()) active[0] = i;
        if (uv[i].y() < uv[active[1]].y()) active[1] = i;
        if (uv[i].x() > uv[active[2]].x()) active[2] = i;
        if (uv[i].y() > uv[active[3]].y()) active[3] = i;
      }
      for (int e = 0; e < 4; ++e) {
        const std::size_t v = active[e];
        const Mat26 dv = projectionJacobian(p_c[v], k) * pointJacobian(p_c[v]);
        j.row(e) = -dv.row(e % 2);
      }
      break;
    }
    case FactorKind::kPointPlane: {
      const Vec3 p_c = r * f.p_w + t;
      j = f.pi_c.head<3>().transpose() * pointJacobian(p_c);
      break;
    }
    case FactorKind::kPlaneParallel:
    case FactorKind::kPlanePerpendicular: {
      j = rotatedNormalJacobian(r * f.n_w);
      break;
    }
  }
  return j;
}

double huberCost(double squared_norm, double delta) {
  if (squared_norm <= delta * delta) return squared_norm;
  return 2.0 * delta * std::sqrt(squared_norm) - delta * delta;
}

double problemCost(std::span<const Factor> factors, const RigidTransform& t_cw, const CameraIntrinsics& k,
                   const std::vector<bool>* excluded, int* skipped) {
  double cost = 0.0;
  int missing = 0;
  for (std::size_t i = 0; i < factors.size(); ++i) {
    if (excluded && (*excluded)[i]) continue;
    try {
      const ResidualVec r = residual(factors[i], t_cw, k);
      cost += factors[i].weight * huberCost(r.squaredNorm(), factors[i].huber_delta);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kFactorNotEvaluable) throw;
      ++missing;
    }
  }
  if (skipped) *skipped = missing;
  return cost;
}

OptimizeResult optimize(const PoseProblem& problem, const CameraIntrinsics& k) {
  if (problem.factors.empty()) throw Error(ErrorCode::kNoFactors, "pose problem has no factors");
  const SolverSettings& s = problem.solver;

  OptimizeResult result;
  result.outlier.assign(problem.factors.size(), false);
  LmState state{problem.T_cw, 0.0};
  result.initial_cost = problemCost(problem.factors, state.pose, k, &result.outlier);

  const int rounds = std::max(0, s.outlier_rounds);
  for (int round = 0; round <= rounds; ++round) {
    runLevenbergMarquardt(problem.factors, result.outlier, k, s, round, state, result);
    if (round == rounds) break;
    for (std::size_t i = 0; i < problem.factors.size(); ++i) {
      const Factor& f = problem.factors[i];
      if (f.kind != FactorKind::kPosePoint) continue;
      try {
        const double chi2 = f.weight * residual(f, state.pose, k).squaredNorm();
        result.outlier[i] = chi2 > s.outlier_chi2;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kFactorNotEvaluable) throw;
        result.outlier[i] = true;
      }
    }
  }

  result.T_cw = state.pose;
  result.final_cost = problemCost(problem.factors, state.pose, k, &result.outlier, &result.skipped_factors);
  return result;
}

void writeSolveLog(std::ostream& os, const OptimizeResult& result) {
  char line[160];
  for (const IterationLog& e : result.log) {
    std::snprintf(line, sizeof(line), "iter=%d round=%d lambda=%.3e cost=%.12e step=%.3e accepted=%d\n",
                  e.iteration, e.round, e.lambda, e.cost, e.step_norm, e.accepted ? 1 : 0);
    os << line;
  }
}

void FactorConfig::validate() const {
  const double values[] = {weights.pose_point,      weights.pose_plane,       weights.box_plane,
                           weights.point_plane,     weights.plane_parallel,   weights.plane_perpendicular,
                           deltas.pose_point,       deltas.pose_plane,        deltas.box_plane,
                           deltas.point_plane,      deltas.plane_parallel,    deltas.plane_perpendicular};
  for (double v : values) {
    if (!(v > 0.0)) throw Error(ErrorCode::kInvalidArgument, "factor weights and huber deltas must be positive");
  }
  if (!(angle_struct_tol > 0.0 && angle_struct_tol < kPi / 4)) {
    throw Error(ErrorCode::kInvalidArgument, "angle_struct_tol must be in (0, pi/4)");
  }
}

PoseProblem buildProblem(const Frame& frame, std::span<const PlaneLandmark> map, const CameraIntrinsics& k,
                         const FactorConfig& cfg, const SolverSettings& solver) {
  PoseProblem problem;
  problem.T_cw = frame.T_cw;
  problem.solver = solver;
  const Mat3& r = frame.T_cw.rotation();

  for (const PointObservation& p : frame.point_observations) {
    Factor f;
    f.kind = FactorKind::kPosePoint;
    f.u_obs = p.pixel;
    f.p_w = p.p_w;
    f.weight = cfg.weights.pose_point;
    f.huber_delta = cfg.deltas.pose_point;
    f.point_id = p.id;
    problem.factors.push_back(f);
  }

  std::map<LandmarkId, const PlaneLandmark*> by_id;
  for (const PlaneLandmark& lm : map) by_id[lm.id] = &lm;

  struct Matched {
    const PlaneObservation* obs;
    const PlaneLandmark* lm;
  };
  std::vector<Matched> matched;
  for (const PlaneMatch& m : frame.matches.matches) {
    const auto it = by_id.find(m.landmark_id);
    if (it == by_id.end() || m.frame_index >= frame.observations.size()) continue;
    matched.push_back({&frame.observations[m.frame_index], it->second});
  }

  for (const Matched& m : matched) {
    const Vec3& n_c = m.obs->plane.normal();
    const Vec3& n_w = m.lm->plane.normal();
    const double sign = (r * n_w).dot(n_c) < 0.0 ? -1.0 : 1.0;

    Factor f;
    f.kind = FactorKind::kPosePlane;
    f.pi_c = m.obs->plane.coefficients();
    f.pi_w = sign * m.lm->plane.coefficients();
    f.weight = cfg.weights.pose_plane;
    f.huber_delta = cfg.deltas.pose_plane;
    f.landmark_id = m.lm->id;
    problem.factors.push_back(f);

    if (m.lm->class_id != kNoClass && m.lm->structure.hasVertices() && m.obs->det_box) {
      Factor b;
      b.kind = FactorKind::kBoxPlane;
      b.box_obs = *m.obs->det_box;
      bool in_image = true;
      for (std::size_t i = 0; i < 4; ++i) {
        b.vertices_w[i] = m.lm->structure.vertices[i];
        const Vec3 p_c = frame.T_cw * b.vertices_w[i];
        if (!(p_c.z() > 1e-6)) {
          in_image = false;
          break;
        }
        const Vec2 uv = projectPoint(p_c, k);
        in_image = in_image && uv.x() >= 0.0 && uv.y() >= 0.0 && uv.x() <= k.width - 1.0 && uv.y() <= k.height - 1.0;
      }
      b.weight = cfg.weights.box_plane;
      b.huber_delta = cfg.deltas.box_plane;
      b.landmark_id = m.lm->id;
      if (in_image) problem.factors.push_back(b);
    }
  }

  for (const PointPlaneLink& link : frame.point_plane) {
    if (link.obs >= frame.observations.size() || link.point >= frame.point_observations.size()) continue;
    Factor f;
    f.kind = FactorKind::kPointPlane;
    f.pi_c = frame.observations[link.obs].plane.coefficients();
    f.p_w = frame.point_observations[link.point].p_w;
    f.weight = cfg.weights.point_plane;
    f.huber_delta = cfg.deltas.point_plane;
    f.point_id = frame.point_observations[link.point].id;
    problem.factors.push_back(f);
  }

  // Structural factors between matched landmarks whose map normals are
  // parallel or perpendicular.
  for (std::size_t a = 0; a < matched.size(); ++a) {
    for (std::size_t b = a + 1; b < matched.size(); ++b) {
      const Vec3& n_a = matched[a].lm->plane.normal();
      const Vec3& n_b = matched[b].lm->plane.normal();
      const double angle = std::acos(std::min(1.0, std::abs(n_a.dot(n_b))));
      const Vec3& n_c = matched[a].obs->plane.normal();
      const Vec3 m_c = r * n_b;

      Factor f;
      f.n_c = n_c;
      f.landmark_id = matched[b].lm->id;
      if (angle < cfg.angle_struct_tol) {
        f.kind = FactorKind::kPlaneParallel;
        f.n_w = m_c.dot(n_c) < 0.0 ? Vec3(-n_b) : n_b;
        f.weight = cfg.weights.plane_parallel;
        f.huber_delta = cfg.deltas.plane_parallel;
        problem.factors.push_back(f);
      } else if (std::abs(angle - kPi / 2) < cfg.angle_struct_tol) {
        const Vec3 axis = n_c.cross(m_c);
        if (axis.norm() < 1e-6) continue;
        f.kind = FactorKind::kPlanePerpendicular;
        f.n_w = n_b;
        f.r_perp = so3Exp<double>(axis.normalized() * (kPi / 2));
        f.weight = cfg.weights.plane_perpendicular;
        f.huber_delta = cfg.deltas.plane_perpendicular;
        problem.factors.push_back(f);
      }
    }
  }
  return problem;
}

}  // namespace planeslam
