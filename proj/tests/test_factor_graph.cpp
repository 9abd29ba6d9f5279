#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "planeslam/factor_graph.hpp"
#include "planeslam/jacobian_audit.hpp"

using namespace planeslam;

namespace {

const CameraIntrinsics kK;

RigidTransform truthPose() {
  Mat3 r;
  r << 1, 0, 0, 0, -1, 0, 0, 0, -1;
  return RigidTransform(Eigen::AngleAxisd(0.1, Vec3(0.3, 1, 0.2).normalized()).toRotationMatrix() * r,
                        Vec3(0.05, -0.02, 1.4));
}

Factor posePoint(const Vec3& p_w, const RigidTransform& t) {
  Factor f;
  f.kind = FactorKind::kPosePoint;
  f.p_w = p_w;
  f.u_obs = projectPoint(t * p_w, kK);
  f.huber_delta = 2.0;
  return f;
}

Factor posePlane(const Plane& w, const RigidTransform& t) {
  Factor f;
  f.kind = FactorKind::kPosePlane;
  const Plane c = transformPlane(w, t);
  f.pi_c = c.coefficients();
  const double s = (t.rotation() * w.normal()).dot(c.normal()) < 0 ? -1.0 : 1.0;
  f.pi_w = s * w.coefficients();
  f.weight = 100;
  f.huber_delta = 0.02;
  return f;
}

Factor pointPlane(const Plane& w, const Vec3& p_w, const RigidTransform& t) {
  Factor f;
  f.kind = FactorKind::kPointPlane;
  f.pi_c = transformPlane(w, t).coefficients();
  f.p_w = p_w;
  f.weight = 400;
  f.huber_delta = 0.02;
  return f;
}

Factor boxPlane(const std::array<Vec3, 4>& v, const RigidTransform& t) {
  Factor f;
  f.kind = FactorKind::kBoxPlane;
  f.vertices_w = v;
  f.box_obs = PixelBox{1e9, 1e9, -1e9, -1e9};
  for (const Vec3& p : v) {
    const Vec2 uv = projectPoint(t * p, kK);
    f.box_obs.x_min = std::min(f.box_obs.x_min, uv.x());
    f.box_obs.y_min = std::min(f.box_obs.y_min, uv.y());
    f.box_obs.x_max = std::max(f.box_obs.x_max, uv.x());
    f.box_obs.y_max = std::max(f.box_obs.y_max, uv.y());
  }
  f.weight = 0.01;
  f.huber_delta = 2.0;
  return f;
}

// A consistent problem at `truth` with every factor kind.
std::vector<Factor> consistentFactors(const RigidTransform& truth) {
  std::vector<Factor> fs;
  const Plane table = makePlane(Vec4(0, 0, 1, 0));
  const Plane wall = makePlane(Vec4(1, 0, 0, 0.5));
  for (int i = 0; i < 12; ++i) {
    const Vec3 p(-0.3 + 0.05 * i, 0.2 * std::sin(i), 0.0);
    fs.push_back(posePoint(p, truth));
    fs.push_back(pointPlane(table, p, truth));
  }
  for (int i = 0; i < 6; ++i) fs.push_back(posePoint(Vec3(-0.5, 0.1 * i - 0.3, 0.05 * i + 0.05), truth));
  fs.push_back(posePlane(table, truth));
  fs.push_back(posePlane(wall, truth));
  fs.push_back(boxPlane({Vec3(-0.1, -0.1, 0), Vec3(0.12, -0.1, 0), Vec3(0.1, 0.15, 0), Vec3(-0.1, 0.1, 0)}, truth));

  Factor par;
  par.kind = FactorKind::kPlaneParallel;
  par.n_w = Vec3(0, 0, 1);
  par.n_c = truth.rotation() * par.n_w;
  par.weight = 50;
  par.huber_delta = 0.02;
  fs.push_back(par);

  Factor perp;
  perp.kind = FactorKind::kPlanePerpendicular;
  perp.n_w = Vec3(1, 0, 0);
  perp.n_c = truth.rotation() * Vec3(0, 0, 1);
  const Vec3 target = truth.rotation() * perp.n_w;
  perp.r_perp = Eigen::AngleAxisd(kPi / 2, perp.n_c.cross(target).normalized()).toRotationMatrix();
  perp.weight = 50;
  perp.huber_delta = 0.02;
  fs.push_back(perp);
  return fs;
}

double rotationErrorDeg(const RigidTransform& a, const RigidTransform& b) {
  return rad2deg(Eigen::AngleAxisd(a.rotation() * b.rotation().transpose()).angle());
}

}  // namespace

TEST(FactorKind, NamesRoundTrip) {
  for (FactorKind kind : kAllFactorKinds) EXPECT_EQ(factorKindFromString(toString(kind)), kind);
  EXPECT_THROW(factorKindFromString("nonsense"), Error);
  EXPECT_EQ(residualDimension(FactorKind::kBoxPlane), 4);
  EXPECT_EQ(residualDimension(FactorKind::kPointPlane), 1);
}

TEST(Residual, ZeroAtTruth) {
  const RigidTransform t = truthPose();
  for (const Factor& f : consistentFactors(t)) {
    EXPECT_LT(residual(f, t, kK).norm(), 1e-9) << toString(f.kind);
  }
}

TEST(Residual, PosePointBehindCameraIsNotEvaluable) {
  Factor f = posePoint(Vec3(0, 0, 0), truthPose());
  f.p_w = Vec3(0, 0, 5);
  try {
    residual(f, truthPose(), kK);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFactorNotEvaluable);
  }
}

TEST(Huber, QuadraticThenLinear) {
  EXPECT_EQ(huberCost(0.25, 1.0), 0.25);
  EXPECT_EQ(huberCost(1.0, 1.0), 1.0);
  EXPECT_NEAR(huberCost(9.0, 1.0), 5.0, 1e-15);
  // Continuous at the switch.
  EXPECT_NEAR(huberCost(4.0 * (1 + 1e-12), 2.0), 4.0, 1e-9);
}

TEST(Jacobian, MatchesCentralDifferences) {
  const RigidTransform t = truthPose();
  std::vector<Factor> fs = consistentFactors(t);
  const RigidTransform off = t.leftPerturbed((Vec6() << 0.02, -0.01, 0.03, 0.01, 0.02, -0.01).finished());
  const double h = 1e-6;
  for (const Factor& f : fs) {
    const FactorJacobian j = jacobian(f, off, kK);
    for (int c = 0; c < 6; ++c) {
      Vec6 e = Vec6::Zero();
      e(c) = h;
      const ResidualVec plus = residual(f, off.leftPerturbed(e), kK);
      const ResidualVec minus = residual(f, off.leftPerturbed(-e), kK);
      const ResidualVec numeric = (plus - minus) / (2 * h);
      for (int r = 0; r < numeric.size(); ++r) {
        EXPECT_NEAR(j(r, c), numeric(r), 1e-5 * std::max(1.0, std::abs(numeric(r)))) << toString(f.kind);
      }
    }
  }
}

TEST(Jacobian, AuditPassesForAllKinds) {
  const JacobianAudit audit = auditJacobians(20, 11, kK);
  EXPECT_EQ(audit.instances_per_kind, 20);
  ASSERT_EQ(audit.max_error.size(), static_cast<std::size_t>(kFactorKindCount));
  for (const auto& [kind, err] : audit.max_error) EXPECT_LT(err, 1e-5) << toString(kind);
}

TEST(Optimize, RecoversPerturbedPose) {
  const RigidTransform truth = truthPose();
  PoseProblem p;
  p.factors = consistentFactors(truth);
  p.T_cw = truth.leftPerturbed((Vec6() << deg2rad(2), -deg2rad(2), deg2rad(2), 0.05, -0.05, 0.05).finished());
  const OptimizeResult r = optimize(p, kK);
  EXPECT_LT((r.T_cw.translation() - truth.translation()).norm(), 1e-6);
  EXPECT_LT(rotationErrorDeg(r.T_cw, truth), 1e-5);
  EXPECT_LT(r.final_cost, r.initial_cost);
  ASSERT_FALSE(r.accepted_costs.empty());
  EXPECT_EQ(r.accepted_costs.front(), r.initial_cost);
  for (std::size_t i = 1; i < r.accepted_costs.size(); ++i) EXPECT_LE(r.accepted_costs[i], r.accepted_costs[i - 1]);
}

TEST(Optimize, AlreadyOptimalStaysPut) {
  PoseProblem p;
  p.T_cw = truthPose();
  p.factors = consistentFactors(p.T_cw);
  const OptimizeResult r = optimize(p, kK);
  EXPECT_LT((r.T_cw.translation() - p.T_cw.translation()).norm(), 1e-9);
  EXPECT_LT(r.final_cost, 1e-15);
}

TEST(Optimize, NoFactorsThrows) {
  PoseProblem p;
  try {
    optimize(p, kK);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoFactors);
  }
}

TEST(Optimize, OutlierRoundsDropCorruptedPoints) {
  const RigidTransform truth = truthPose();
  PoseProblem p;
  for (int i = 0; i < 40; ++i) {
    const Vec3 q(-0.4 + 0.02 * i, 0.3 * std::cos(1.7 * i), 0.1 * std::sin(0.9 * i));
    Factor f = posePoint(q, truth);
    if (i % 10 == 3) f.u_obs += Vec2(40, -35);
    p.factors.push_back(f);
  }
  p.T_cw = truth.leftPerturbed((Vec6() << 0.01, 0, 0, 0.02, 0, 0).finished());
  p.solver.outlier_rounds = 3;
  const OptimizeResult r = optimize(p, kK);
  ASSERT_EQ(r.outlier.size(), p.factors.size());
  for (std::size_t i = 0; i < p.factors.size(); ++i) EXPECT_EQ(r.outlier[i], i % 10 == 3) << i;
  EXPECT_LT((r.T_cw.translation() - truth.translation()).norm(), 1e-6);
}

TEST(Optimize, SolveLogHasOneLinePerIteration) {
  PoseProblem p;
  const RigidTransform truth = truthPose();
  p.factors = consistentFactors(truth);
  p.T_cw = truth.leftPerturbed((Vec6() << 0.01, 0, 0, 0.0, 0.01, 0).finished());
  const OptimizeResult r = optimize(p, kK);
  std::ostringstream os;
  writeSolveLog(os, r);
  const std::string s = os.str();
  EXPECT_EQ(static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')), r.log.size());
  EXPECT_EQ(s.rfind("iter=", 0), 0u);
}

TEST(BuildProblem, FactorsPerMatchAndStructure) {
  const RigidTransform t = truthPose();
  PlaneLandmark table;
  table.id = 0;
  table.plane = makePlane(Vec4(0, 0, 1, 0));
  PlaneLandmark book;
  book.id = 1;
  book.plane = makePlane(Vec4(0, 0, 1, -0.03));
  book.class_id = 2;
  book.structure.vertices = {Vec3(-0.1, -0.1, 0.03), Vec3(0.1, -0.1, 0.03), Vec3(0.1, 0.1, 0.03),
                             Vec3(-0.1, 0.1, 0.03)};
  PlaneLandmark wall;
  wall.id = 2;
  wall.plane = makePlane(Vec4(1, 0, 0, 0.5));
  const std::vector<PlaneLandmark> map{table, book, wall};

  Frame f;
  f.T_cw = t;
  for (const PlaneLandmark& lm : map) {
    PlaneObservation o;
    o.plane = transformPlane(lm.plane, t);
    o.class_id = lm.class_id;
    if (lm.class_id != kNoClass) o.det_box = PixelBox{100, 100, 200, 200};
    f.observations.push_back(o);
  }
  for (std::size_t i = 0; i < map.size(); ++i) f.matches.matches.push_back({i, map[i].id, 1.0, PairRule::kGeometric});
  f.point_observations.push_back({5, Vec2(300, 200), Vec3(0.01, 0.02, 0)});
  f.point_plane.push_back({0, 0});

  const PoseProblem p = buildProblem(f, map, kK, FactorConfig{}, SolverSettings{});
  std::map<FactorKind, int> counts;
  for (const Factor& x : p.factors) ++counts[x.kind];
  EXPECT_EQ(counts[FactorKind::kPosePoint], 1);
  EXPECT_EQ(counts[FactorKind::kPosePlane], 3);
  EXPECT_EQ(counts[FactorKind::kBoxPlane], 1);
  EXPECT_EQ(counts[FactorKind::kPointPlane], 1);
  EXPECT_EQ(counts[FactorKind::kPlaneParallel], 1);       // table, book
  EXPECT_EQ(counts[FactorKind::kPlanePerpendicular], 2);  // table/wall, book/wall
  // Consistent at the frame pose: every residual vanishes.
  for (const Factor& x : p.factors) {
    if (x.kind == FactorKind::kPosePoint || x.kind == FactorKind::kBoxPlane) continue;
    EXPECT_LT(residual(x, t, kK).norm(), 1e-9) << toString(x.kind);
  }
}

TEST(BuildProblem, SkipsBoxFactorWhenVerticesLeaveTheImage) {
  const RigidTransform t = truthPose();
  PlaneLandmark book;
  book.plane = makePlane(Vec4(0, 0, 1, -0.03));
  book.class_id = 2;
  book.structure.vertices = {Vec3(-3, -0.1, 0.03), Vec3(0.1, -0.1, 0.03), Vec3(0.1, 0.1, 0.03), Vec3(-3, 0.1, 0.03)};
  Frame f;
  f.T_cw = t;
  PlaneObservation o;
  o.plane = transformPlane(book.plane, t);
  o.class_id = 2;
  o.det_box = PixelBox{0, 100, 200, 200};
  f.observations.push_back(o);
  f.matches.matches.push_back({0, 0, 1.0, PairRule::kSemantic});
  const std::vector<PlaneLandmark> map{book};
  const PoseProblem p = buildProblem(f, map, kK, FactorConfig{}, SolverSettings{});
  for (const Factor& x : p.factors) EXPECT_NE(x.kind, FactorKind::kBoxPlane);
  EXPECT_EQ(p.factors.size(), 1u);
}

TEST(FactorConfig, RejectsNonPositiveWeights) {
  FactorConfig c;
  EXPECT_NO_THROW(c.validate());
  c.weights.box_plane = 0.0;
  EXPECT_THROW(c.validate(), Error);
}
