// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "planeslam/association.hpp"
#include "planeslam/factor_graph.hpp"
#include "planeslam/io.hpp"
#include "planeslam/jacobian_audit.hpp"
#include "planeslam/pipeline.hpp"
#include "planeslam/plane_processing.hpp"
#include "planeslam/sim.hpp"

using namespace planeslam;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double secondsSince(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), fmt, args...);
  return buf;
}

std::string sourcePath(const std::string& rel) { return std::string(PLANESLAM_SOURCE_DIR) + "/" + rel; }

// ---------------------------------------------------------------------------
// Jacobians against long double central differences.

using LD = long double;
using V3L = Eigen::Matrix<LD, 3, 1>;
using M3L = Eigen::Matrix<LD, 3, 3>;

M3L hat(const V3L& w) {
  M3L m;
  m << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return m;
}

// exp(xi) * T on SE(3), xi = (omega, v), written out with Rodrigues' formula.
PoseT<LD> perturb(const PoseT<LD>& pose, const Eigen::Matrix<LD, 6, 1>& xi) {
  const V3L w = xi.head<3>();
  const V3L v = xi.tail<3>();
  const LD th = w.norm();
  const M3L k = hat(w);
  M3L r = M3L::Identity();
  M3L j = M3L::Identity();
  if (th > 0) {
    r += std::sin(th) / th * k + (1 - std::cos(th)) / (th * th) * k * k;
    j += (1 - std::cos(th)) / (th * th) * k + (th - std::sin(th)) / (th * th * th) * k * k;
  }
  return {r * pose.R, r * pose.t + j * v};
}

bool isAngleRow(FactorKind kind, int row) {
  switch (kind) {
    case FactorKind::kPosePlane: return row < 2;
    case FactorKind::kPlaneParallel:
    case FactorKind::kPlanePerpendicular: return true;
    default: return false;
  }
}

double oracleJacobianError(const Factor& f, const RigidTransform& t, const CameraIntrinsics& k) {
  const FactorJacobian analytic = jacobian(f, t, k);
  const PoseT<LD> base{t.rotation().cast<LD>(), t.translation().cast<LD>()};
  const LD h = 1e-7L;
  double worst = 0.0;
  for (int c = 0; c < 6; ++c) {
    Eigen::Matrix<LD, 6, 1> e = Eigen::Matrix<LD, 6, 1>::Zero();
    e(c) = h;
    const auto plus = residualT<LD>(f, perturb(base, e), k);
    const auto minus = residualT<LD>(f, perturb(base, -e), k);
    for (int r = 0; r < plus.size(); ++r) {
      LD diff = plus(r) - minus(r);
      if (isAngleRow(f.kind, r)) diff = std::remainder(diff, 2 * static_cast<LD>(kPi));
      const double numeric = static_cast<double>(diff / (2 * h));
      const double err = std::abs(analytic(r, c) - numeric) / std::max(std::abs(numeric), 1e-3);
      worst = std::max(worst, err);
    }
  }
  return worst;
}

Outcome jacobianAudit() {
  const auto start = Clock::now();
  const CameraIntrinsics k;
  std::mt19937_64 rng(2024);
  std::string detail;
  bool ok = true;
  for (FactorKind kind : kAllFactorKinds) {
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const FactorInstance inst = randomFactorInstance(kind, k, rng);
      worst = std::max(worst, oracleJacobianError(inst.factor, inst.T_cw, k));
    }
    ok = ok && worst < 1e-5;
    detail += format("%s=%.1e ", toString(kind), worst);
  }
  const double secs = secondsSince(start);
  detail += format("time=%.2fs", secs);
  return {ok && secs < 10.0, detail};
}

// ---------------------------------------------------------------------------
// Common perpendicular against a 2-variable least-squares minimization.

Outcome commonPerpendicularOracle() {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> g(0.0, 1.0);
  double foot_err = 0.0;
  double ortho = 0.0;
  int pairs = 0;
  while (pairs < 1000) {
    const Vec3 pi(g(rng), g(rng), g(rng));
    const Vec3 pj(g(rng), g(rng), g(rng));
    const Vec3 di = Vec3(g(rng), g(rng), g(rng)).normalized();
    const Vec3 dj = Vec3(g(rng), g(rng), g(rng)).normalized();
    if (std::abs(di.dot(dj)) >= 0.99) continue;
    const Line3D li(pi, di);
    const Line3D lj(pj, dj);
    const PerpendicularFeet feet = commonPerpendicular(li, lj);

    // min over (s, t) of |pi + s di - pj - t dj|^2: normal equations in long double.
    using V = Eigen::Matrix<LD, 3, 1>;
    const V a = li.direction().cast<LD>();
    const V b = lj.direction().cast<LD>();
    const V w = (li.point() - lj.point()).cast<LD>();
    Eigen::Matrix<LD, 2, 2> m;
    m << a.dot(a), -a.dot(b), -a.dot(b), b.dot(b);
    const Eigen::Matrix<LD, 2, 1> rhs(-a.dot(w), b.dot(w));
    const Eigen::Matrix<LD, 2, 1> st = m.fullPivLu().solve(rhs);
    const V fi = li.point().cast<LD>() + st(0) * a;
    const V fj = lj.point().cast<LD>() + st(1) * b;
    foot_err = std::max({foot_err, static_cast<double>((fi - feet.on_first.cast<LD>()).norm()),
                         static_cast<double>((fj - feet.on_second.cast<LD>()).norm())});
    const Vec3 seg = feet.on_second - feet.on_first;
    ortho = std::max({ortho, std::abs(seg.dot(li.direction())), std::abs(seg.dot(lj.direction()))});
    ++pairs;
  }
  return {foot_err < 1e-7 && ortho < 1e-9, format("pairs=%d max_foot_error=%.2e max_orthogonality=%.2e", pairs,
                                                  foot_err, ortho)};
}

// ---------------------------------------------------------------------------
// Mann-Whitney against brute-force enumeration.

double bruteU(const std::vector<double>& c, const std::vector<double>& w) {
  double u = 0.0;
  for (double x : c) {
    for (double y : w) u += x > y ? 1.0 : (x == y ? 0.5 : 0.0);
  }
  return u;
}

std::vector<double> bruteMidranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    int less = 0;
    int equal = 0;
    for (double x : v) {
      less += x < v[i];
      equal += x == v[i];
    }
    r[i] = less + (equal + 1) / 2.0;
  }
  return r;
}

Outcome mannWhitney() {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> size(1, 15);
  std::uniform_int_distribution<int> value(0, 5);  // small range forces ties
  const double z_crit = AssociationConfig::criticalValue(0.05);
  int u_mismatch = 0;
  int identity_fail = 0;
  int rank_mismatch = 0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> c(static_cast<std::size_t>(size(rng)));
    std::vector<double> w(static_cast<std::size_t>(size(rng)));
    for (double& x : c) x = value(rng);
    for (double& x : w) x = value(rng);
    const RankTestAxis a = mannWhitneyAxis(c, w, z_crit);
    if (std::abs(a.u_c - bruteU(c, w)) > 1e-9 || std::abs(a.u_w - bruteU(w, c)) > 1e-9) ++u_mismatch;
    if (std::abs(a.u_c + a.u_w - static_cast<double>(c.size() * w.size())) > 1e-9) ++identity_fail;
    std::vector<double> pooled = c;
    pooled.insert(pooled.end(), w.begin(), w.end());
    if (midranks(pooled) != bruteMidranks(pooled)) ++rank_mismatch;
  }

  bool identical_ok = true;
  std::normal_distribution<double> g(0.0, 1.0);
  AssociationConfig cfg;
  for (int t = 0; t < 20; ++t) {
    std::vector<Vec3> m(12 + static_cast<std::size_t>(t));
    for (Vec3& p : m) p = Vec3(g(rng), std::round(g(rng)), g(rng));
    const RankTestResult r = mannWhitneyGate(m, m, cfg);
    identical_ok = identical_ok && r.passed;
    for (const RankTestAxis& a : r.axes) identical_ok = identical_ok && a.z == 0.0;
  }

  int rejections = 0;
  const int trials = 10000;
  std::vector<double> c(20);
  std::vector<double> w(20);
  for (int t = 0; t < trials; ++t) {
    for (double& x : c) x = g(rng);
    for (double& x : w) x = g(rng);
    if (!mannWhitneyAxis(c, w, z_crit).passed) ++rejections;
  }
  const double rate = static_cast<double>(rejections) / trials;

  const bool ok = u_mismatch == 0 && identity_fail == 0 && rank_mismatch == 0 && identical_ok &&
                  std::abs(rate - 0.05) <= 0.02;
  return {ok, format("u_mismatch=%d identity_fail=%d midrank_mismatch=%d identical_ok=%d rejection_rate=%.4f",
                     u_mismatch, identity_fail, rank_mismatch, identical_ok ? 1 : 0, rate)};
}

// ---------------------------------------------------------------------------
// Noiseless end-to-end run.

Outcome noiselessRun() {
  const PipelineConfig cfg = loadConfig(sourcePath("configs/noiseless.yaml"));
  const auto start = Clock::now();
  const RunOutput out = runPipeline(cfg);
  const double secs = secondsSince(start);
  const RunReport& r = out.report;
  const bool ok = cfg.trajectory.frames == 100 && r.frames.size() == 100 && r.skipped_frames == 0 &&
                  r.precision == 1.0 && r.recall == 1.0 && r.final_landmarks == r.true_planes &&
                  r.ate_rmse < 1e-6 && secs < 60.0;
  return {ok, format("frames=%zu precision=%.6f recall=%.6f landmarks=%zu true_planes=%zu ate=%.3e time=%.1fs",
                     r.frames.size(), r.precision, r.recall, r.final_landmarks, r.true_planes, r.ate_rmse, secs)};
}

// ---------------------------------------------------------------------------
// Integrated vs params-only association on 2 cm books.

struct AblationGolden {
  std::uint64_t seed;
  double precision_integrated;
  double precision_params_only;
  int errors_integrated;
  int errors_params_only;
};

// Measured on the first build; margins may not shrink beyond the tolerances below.
constexpr AblationGolden kAblationGoldens[] = {
    {1, 1.000000, 0.810680, 3, 72},  {2, 1.000000, 0.873171, 4, 75}, {3, 1.000000, 0.871671, 7, 73},
    {4, 1.000000, 0.876214, 5, 73},  {5, 1.000000, 0.802993, 3, 77}, {6, 1.000000, 0.870813, 3, 70},
    {7, 1.000000, 0.932530, 8, 73},  {8, 1.000000, 0.869880, 6, 69}, {9, 1.000000, 0.872549, 5, 77},
    {10, 1.000000, 0.879227, 5, 73},
};
constexpr double kPrecisionMarginSlack = 0.01;
constexpr int kErrorMarginSlack = 2;

Outcome ablation() {
  const PipelineConfig base = loadConfig(sourcePath("configs/ablation.yaml"));
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    PipelineConfig integrated = base;
    integrated.seed = seed;
    integrated.association.mode = AssociationMode::kIntegrated;
    PipelineConfig params_only = integrated;
    params_only.association.mode = AssociationMode::kParamsOnly;
    const RunReport a = runPipeline(integrated).report;
    const RunReport b = runPipeline(params_only).report;
    const bool strict = a.precision > b.precision && a.landmarkErrors() < b.landmarkErrors();
    bool golden_ok = false;
    for (const AblationGolden& g : kAblationGoldens) {
      if (g.seed != seed) continue;
      const double frozen_p = g.precision_integrated - g.precision_params_only;
      const int frozen_e = g.errors_params_only - g.errors_integrated;
      golden_ok = a.precision - b.precision >= frozen_p - kPrecisionMarginSlack &&
                  b.landmarkErrors() - a.landmarkErrors() >= frozen_e - kErrorMarginSlack;
    }
    ok = ok && strict && golden_ok;
    std::printf("  ablation seed=%llu integrated: precision=%.6f errors=%d (wrong_fusions=%d duplicates=%d) | "
                "params-only: precision=%.6f errors=%d (wrong_fusions=%d duplicates=%d)%s%s\n",
                static_cast<unsigned long long>(seed), a.precision, a.landmarkErrors(), a.wrong_fusion_events,
                a.duplicate_landmarks, b.precision, b.landmarkErrors(), b.wrong_fusion_events,
                b.duplicate_landmarks, strict ? "" : " NOT-STRICT", golden_ok ? "" : " GOLDEN-MISMATCH");
    std::fflush(stdout);
    detail = format("seeds=10 last: %.4f vs %.4f, errors %d vs %d", a.precision, b.precision, a.landmarkErrors(),
                    b.landmarkErrors());
  }
  return {ok, detail};
}

// ---------------------------------------------------------------------------
// Pose recovery on consistent synthetic problems.

struct SyntheticProblem {
  RigidTransform truth;
  std::vector<Factor> factors;
};

RigidTransform lookAtPose(const Vec3& eye, const Vec3& target) {
  const Vec3 f = (target - eye).normalized();
  const Vec3 x = f.cross(Vec3::UnitZ()).normalized();
  const Vec3 y = f.cross(x);
  Mat3 r_wc;
  r_wc << x, y, f;
  return RigidTransform(r_wc, eye).inverse();
}

std::pair<Vec3, Vec3> inPlaneAxes(const Vec3& n) {
  const Vec3 seed = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 u = n.cross(seed).normalized();
  return {u, n.cross(u)};
}

SyntheticProblem makeProblem(std::mt19937_64& rng, const CameraIntrinsics& k) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const FactorConfig fc;
  for (;;) {
    SyntheticProblem p;
    const Vec3 eye(2.0 * u(rng), 2.0 * u(rng), 1.5 + 0.5 * u(rng));
    p.truth = lookAtPose(eye, Vec3(0.2 * u(rng), 0.2 * u(rng), 0.0));
    const Mat3& r = p.truth.rotation();

    // Three mutually perpendicular planes through points near the origin.
    const Mat3 basis = Eigen::AngleAxisd(kPi * u(rng), Vec3(u(rng), u(rng), u(rng)).normalized()).toRotationMatrix();
    std::vector<Plane> planes;
    bool well_posed = true;
    for (int i = 0; i < 3; ++i) {
      const Vec3 n = basis.col(i);
      planes.push_back(makePlane(Vec4(n.x(), n.y(), n.z(), -0.3 * u(rng))));
      // Keep the camera-frame normal away from the poles of its angles.
      well_posed = well_posed && std::abs((r * n).z()) < 0.9;
    }
    if (!well_posed) continue;

    auto visible = [&](const Vec3& x) {
      const Vec3 c = p.truth * x;
      if (c.z() < 0.2) return false;
      const Vec2 uv = projectPoint(c, k);
      return uv.x() > 0 && uv.y() > 0 && uv.x() < k.width - 1 && uv.y() < k.height - 1;
    };

    for (std::size_t i = 0; i < planes.size(); ++i) {
      const Plane& w = planes[i];
      const Plane c = transformPlane(w, p.truth);
      Factor f;
      f.kind = FactorKind::kPosePlane;
      f.pi_c = c.coefficients();
      f.pi_w = ((r * w.normal()).dot(c.normal()) < 0 ? -1.0 : 1.0) * w.coefficients();
      f.weight = fc.weights.pose_plane;
      f.huber_delta = fc.deltas.pose_plane;
      p.factors.push_back(f);

      const Vec3 origin = -w.offset() * w.normal();
      const auto [a, b] = inPlaneAxes(w.normal());
      int added = 0;
      for (int n = 0; n < 200 && added < 8; ++n) {
        const Vec3 x = origin + 0.8 * u(rng) * a + 0.8 * u(rng) * b;
        if (!visible(x)) continue;
        Factor pp;
        pp.kind = FactorKind::kPointPlane;
        pp.pi_c = c.coefficients();
        pp.p_w = x;
        pp.weight = fc.weights.point_plane;
        pp.huber_delta = fc.deltas.point_plane;
        p.factors.push_back(pp);
        Factor pt;
        pt.kind = FactorKind::kPosePoint;
        pt.p_w = x;
        pt.u_obs = projectPoint(p.truth * x, k);
        pt.weight = fc.weights.pose_point;
        pt.huber_delta = fc.deltas.pose_point;
        p.factors.push_back(pt);
        ++added;
      }

      // Rectangle on the plane for the box factor, only if fully in view.
      const std::array<Vec3, 4> rect{origin - 0.1 * a - 0.07 * b, origin + 0.1 * a - 0.07 * b,
                                     origin + 0.1 * a + 0.07 * b, origin - 0.1 * a + 0.07 * b};
      if (std::all_of(rect.begin(), rect.end(), visible)) {
        Factor bx;
        bx.kind = FactorKind::kBoxPlane;
        bx.vertices_w = rect;
        std::vector<Vec2> px;
        for (const Vec3& x : rect) px.push_back(projectPoint(p.truth * x, k));
        bx.box_obs = PixelBox::fromPoints(px);
        bx.weight = fc.weights.box_plane;
        bx.huber_delta = fc.deltas.box_plane;
        p.factors.push_back(bx);
      }
    }

    Factor par;
    par.kind = FactorKind::kPlaneParallel;
    par.n_w = planes[0].normal();
    par.n_c = r * par.n_w;
    par.weight = fc.weights.plane_parallel;
    par.huber_delta = fc.deltas.plane_parallel;
    p.factors.push_back(par);

    Factor perp;
    perp.kind = FactorKind::kPlanePerpendicular;
    perp.n_w = planes[1].normal();
    perp.n_c = r * planes[0].normal();
    const Vec3 target = r * perp.n_w;
    perp.r_perp = Eigen::AngleAxisd(kPi / 2, perp.n_c.cross(target).normalized()).toRotationMatrix();
    perp.weight = fc.weights.plane_perpendicular;
    perp.huber_delta = fc.deltas.plane_perpendicular;
    p.factors.push_back(perp);

    int kinds = 0;
    for (FactorKind kind : kAllFactorKinds) {
      kinds += std::any_of(p.factors.begin(), p.factors.end(), [&](const Factor& f) { return f.kind == kind; });
    }
    if (kinds == kFactorKindCount) return p;
  }
}

Outcome poseRecovery() {
  const CameraIntrinsics k;
  std::mt19937_64 rng(77);
  std::bernoulli_distribution coin(0.5);
  double worst_t = 0.0;
  double worst_r = 0.0;
  int monotone_fail = 0;
  int recovered = 0;
  for (int i = 0; i < 50; ++i) {
    const SyntheticProblem sp = makeProblem(rng, k);
    const RigidTransform t_wc = sp.truth.inverse();
    auto sign = [&] { return coin(rng) ? 1.0 : -1.0; };
    const double a = deg2rad(2.0);
    const Mat3 dr = (Eigen::AngleAxisd(sign() * a, Vec3::UnitX()) * Eigen::AngleAxisd(sign() * a, Vec3::UnitY()) *
                     Eigen::AngleAxisd(sign() * a, Vec3::UnitZ()))
                        .toRotationMatrix();
    const Vec3 dt(sign() * 0.05, sign() * 0.05, sign() * 0.05);
    PoseProblem problem;
    problem.factors = sp.factors;
    problem.T_cw = RigidTransform(dr * t_wc.rotation(), t_wc.translation() + dt).inverse();

    const OptimizeResult r = optimize(problem, k);
    const RigidTransform est_wc = r.T_cw.inverse();
    const double et = (est_wc.translation() - t_wc.translation()).norm();
    const double er = rad2deg(Eigen::AngleAxisd(est_wc.rotation() * t_wc.rotation().transpose()).angle());
    worst_t = std::max(worst_t, et);
    worst_r = std::max(worst_r, er);
    recovered += et < 5e-3 && er < 0.1;
    for (std::size_t n = 1; n < r.accepted_costs.size(); ++n) {
      if (r.accepted_costs[n] > r.accepted_costs[n - 1]) {
        ++monotone_fail;
        break;
      }
    }
  }
  return {recovered == 50 && monotone_fail == 0,
          format("recovered=%d/50 worst_translation=%.2e m worst_rotation=%.2e deg non_monotone=%d", recovered,
                 worst_t, worst_r, monotone_fail)};
}

// ---------------------------------------------------------------------------
// Vertex extraction on exact rectangles and the three validity conditions.

struct Rectangle {
  Plane plane;
  std::array<Vec3, 4> corners;
  std::vector<Line3D> lines;
  PixelBox box;
};

Rectangle randomRectangle(std::mt19937_64& rng, const CameraIntrinsics& k) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (;;) {
    const Vec3 n = Vec3(0.4 * u(rng), 0.4 * u(rng), -1.0).normalized();
    const Vec3 centre(0.2 * u(rng), 0.2 * u(rng), 2.0 + 0.5 * u(rng));
    auto [a, b] = inPlaneAxes(n);
    const double spin = kPi * u(rng);
    const Vec3 ea = std::cos(spin) * a + std::sin(spin) * b;
    const Vec3 eb = n.cross(ea);
    const double w = 0.15 + 0.1 * (u(rng) + 1);
    const double h = 0.1 + 0.1 * (u(rng) + 1);
    Rectangle r;
    r.plane = makePlane(Vec4(n.x(), n.y(), n.z(), -n.dot(centre)));
    r.corners = {centre - w * ea - h * eb, centre + w * ea - h * eb, centre + w * ea + h * eb,
                 centre - w * ea + h * eb};
    for (int i = 0; i < 4; ++i) {
      const Vec3& p = r.corners[static_cast<std::size_t>(i)];
      const Vec3& q = r.corners[static_cast<std::size_t>((i + 1) % 4)];
      r.lines.emplace_back(0.5 * (p + q) + 0.3 * u(rng) * (q - p), q - p);
    }
    std::vector<Vec2> px;
    for (const Vec3& c : r.corners) px.push_back(projectPoint(c, k));
    r.box = PixelBox::fromPoints(px);
    if (r.box.x_min > 0 && r.box.y_min > 0 && r.box.x_max < k.width - 1 && r.box.y_max < k.height - 1) return r;
  }
}

std::optional<VertexFailure> failureOf(const std::vector<Line3D>& lines, const Plane& plane, const PixelBox& box,
                                       const CameraIntrinsics& k, const VertexConfig& cfg) {
  try {
    extractVertices(lines, plane, box, RigidTransform(), k, cfg);
  } catch (const VertexExtractionError& e) {
    return e.failure();
  }
  return std::nullopt;
}

Outcome vertexExtraction() {
  const CameraIntrinsics k;
  const VertexConfig cfg;
  std::mt19937_64 rng(5);
  double worst = 0.0;
  int failed = 0;
  int foot = 0;
  int dist = 0;
  int outside = 0;
  const int n = 100;
  for (int i = 0; i < n; ++i) {
    const Rectangle r = randomRectangle(rng, k);
    try {
      const std::array<Vec3, 4> v = extractVertices(r.lines, r.plane, r.box, RigidTransform(), k, cfg);
      for (const Vec3& c : r.corners) {
        double best = 1e9;
        for (const Vec3& x : v) best = std::min(best, (x - c).norm());
        worst = std::max(worst, best);
      }
    } catch (const Error&) {
      ++failed;
      continue;
    }

    // (1) feet apart: lift one parallel pair off the plane along its normal.
    std::vector<Line3D> gap = r.lines;
    for (std::size_t j : {0u, 2u}) {
      gap[j] = Line3D(gap[j].point() + 10 * cfg.foot_gap_max * r.plane.normal(), gap[j].direction());
    }
    foot += failureOf(gap, r.plane, r.box, k, cfg) == VertexFailure::kFootGap;

    // (2) corners consistent with each other but off the plane: move the whole
    // rectangle away from the camera so it still projects inside the box.
    const double s = 1.0 + 10 * cfg.vertex_plane_distance_max / std::abs(r.plane.offset());
    std::vector<Line3D> far;
    for (const Line3D& l : r.lines) far.emplace_back(s * l.point(), l.direction());
    dist += failureOf(far, r.plane, r.box, k, cfg) == VertexFailure::kPlaneDistance;

    // (3) the detection box covers only part of the rectangle.
    PixelBox narrow = r.box;
    narrow.x_max = 0.5 * (r.box.x_min + r.box.x_max);
    outside += failureOf(r.lines, r.plane, narrow, k, cfg) == VertexFailure::kOutsideBox;
  }
  const bool ok = failed == 0 && worst < 1e-6 && foot == n && dist == n && outside == n;
  return {ok, format("rectangles=%d extraction_failures=%d max_corner_error=%.2e foot_gap=%d/%d "
                     "plane_distance=%d/%d outside_box=%d/%d",
                     n, failed, worst, foot, n, dist, n, outside, n)};
}

// ---------------------------------------------------------------------------
// ATE evaluator.

Outcome ateEvaluator() {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g(0.0, 1.0);
  Trajectory gt;
  for (int i = 0; i < 1000; ++i) {
    const double a = 2 * kPi * i / 1000.0;
    Vec6 xi;
    xi << 0.1 * std::sin(a), 0.2 * std::cos(3 * a), a, 0, 0, 0;
    const RigidTransform rot = RigidTransform::exp(xi);
    gt.push_back({i / 30.0, RigidTransform(rot.rotation(), Vec3(2 * std::cos(a), 1.5 * std::sin(a), 1 + 0.3 * std::sin(2 * a)))});
  }
  const double identical = evaluateAte(gt, gt).rmse;

  Vec6 xi;
  xi << 0.3, -1.2, 2.0, 5.0, -3.0, 0.7;
  const RigidTransform g_rigid = RigidTransform::exp(xi);
  Trajectory displaced = gt;
  for (StampedPose& p : displaced) p.T_wc = g_rigid * p.T_wc;
  const double rigid = evaluateAte(displaced, gt).rmse;

  const double sigma = 0.01;
  Trajectory noisy = gt;
  for (StampedPose& p : noisy) {
    p.T_wc = RigidTransform(p.T_wc.rotation(), p.T_wc.translation() + sigma * Vec3(g(rng), g(rng), g(rng)));
  }
  const double rmse = evaluateAte(noisy, gt).rmse;
  const double expected = std::sqrt(3.0) * sigma;
  const bool ok = identical < 1e-12 && rigid < 1e-9 && std::abs(rmse - expected) <= 0.1 * expected;
  return {ok, format("identical=%.2e rigid=%.2e noisy=%.5f expected=%.5f", identical, rigid, rmse, expected)};
}

// ---------------------------------------------------------------------------
// Determinism of two seed-7 runs.

Outcome determinism() {
  PipelineConfig cfg = loadConfig(sourcePath("configs/ambiguous-desk.yaml"));
  cfg.seed = 7;
  const auto root = std::filesystem::temp_directory_path() / "planeslam_acceptance_determinism";
  std::filesystem::remove_all(root);
  for (const char* run : {"a", "b"}) writeRunArtifacts((root / run).string(), runPipeline(cfg));
  int differing = 0;
  std::string names;
  for (const char* name : {"trajectory.txt", "map.ply", "map.json", "snapshot.json"}) {
    const std::string a = readTextFile((root / "a" / name).string());
    const std::string b = readTextFile((root / "b" / name).string());
    if (a != b || a.empty()) {
      ++differing;
      names += std::string(" ") + name;
    }
  }
  std::filesystem::remove_all(root);
  return {differing == 0, differing == 0 ? "trajectory.txt map.ply map.json snapshot.json identical"
                                         : "differing:" + names};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"jacobian-audit", jacobianAudit},
      {"common-perpendicular", commonPerpendicularOracle},
      {"mann-whitney", mannWhitney},
      {"noiseless-end-to-end", noiselessRun},
      {"ambiguity-ablation", ablation},
      {"pose-recovery", poseRecovery},
      {"vertex-extraction", vertexExtraction},
      {"ate-evaluator", ateEvaluator},
      {"determinism", determinism},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
