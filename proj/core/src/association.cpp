#include "planeslam/association.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace planeslam {
namespace {

// Frame normal rotated into the world, flipped to agree with the map normal.
// Returns the sign that was applied.
double alignedSign(const Plane& pi_c, const Plane& pi_w, const RigidTransform& t_cw) {
  const Vec3 n_cw = t_cw.rotation().transpose() * pi_c.normal();
  return n_cw.dot(pi_w.normal()) < 0.0 ? -1.0 : 1.0;
}

std::optional<PixelBox> projectedBox(std::span<const Vec3> points_c, const CameraIntrinsics& k) {
  std::vector<Vec2> pixels;
  pixels.reserve(points_c.size());
  for (const Vec3& p : points_c) {
    if (p.z() > 1e-6) pixels.push_back(projectPoint(p, k));
  }
  if (pixels.empty()) return std::nullopt;
  return PixelBox::fromPoints(pixels).clippedTo(k);
}

}  // namespace

double AssociationConfig::criticalValue(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::kInvalidArgument, "alpha must be in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), 1.0 - alpha / 2.0);
}

void AssociationConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::kInvalidArgument, what);
  };
  require(beta_T > 0.0, "beta_T must be positive");
  require(d_T > 0.0, "d_T must be positive");
  require(d_T_prime > 0.0, "d_T_prime must be positive");
  require(R_T > 0.0 && R_T <= 1.0, "R_T must be in (0, 1]");
  require(iou_assoc_min > 0.0, "iou_assoc_min must be positive");
  require(alpha > 0.0 && alpha < 1.0, "alpha must be in (0, 1)");
  require(z_crit > 0.0, "z_crit must be positive");
  require(np_min_samples > 0, "np_min_samples must be positive");
  require(point_plane_dist_max > 0.0, "point_plane_dist_max must be positive");
}

const char* toString(AssociationMode mode) {
  return mode == AssociationMode::kIntegrated ? "integrated" : "params-only";
}

const char* toString(RankTestMean mean) {
  return mean == RankTestMean::kUStatistic ? "u_mean" : "paper_rank_sum_mean";
}

const char* toString(PairRule rule) {
  switch (rule) {
    case PairRule::kGeometric: return "geometric";
    case PairRule::kSemantic: return "semantic";
    case PairRule::kMixed: return "mixed";
  }
  return "unknown";
}

double normalAngle(const Plane& pi_c, const Plane& pi_w, const RigidTransform& t_cw) {
  const Vec3 n_cw = t_cw.rotation().transpose() * pi_c.normal();
  const double cosine = std::abs(n_cw.dot(pi_w.normal())) / (n_cw.norm() * pi_w.normal().norm());
  return std::acos(std::min(1.0, cosine));
}

bool angleGate(const Plane& pi_c, const Plane& pi_w, const RigidTransform& t_cw, double beta_T) {
  return normalAngle(pi_c, pi_w, t_cw) < beta_T;
}

double offsetResidual(const Plane& pi_c, const Plane& pi_w, const RigidTransform& t_cw) {
  const double s = alignedSign(pi_c, pi_w, t_cw);
  const Vec3 n_c = s * pi_c.normal();
  const double d_c = s * pi_c.offset();
  return std::abs(t_cw.translation().dot(n_c) + d_c - pi_w.offset());
}

bool offsetGate(const Plane& pi_c, const Plane& pi_w, const RigidTransform& t_cw, double d_T) {
  return offsetResidual(pi_c, pi_w, t_cw) < d_T;
}

EdgeGateResult edgePointGate(std::span<const Vec3> edge_points_c, const Plane& pi_w,
                             const RigidTransform& t_cw, double d_T_prime, double R_T) {
  if (edge_points_c.empty()) throw Error(ErrorCode::kInvalidArgument, "edge point gate needs at least one point");
  const Mat3 r_inv = t_cw.rotation().transpose();
  const Vec3 t_w = r_inv * t_cw.translation();
  std::size_t close = 0;
  for (const Vec3& b : edge_points_c) {
    const double dist = pi_w.normal().dot(r_inv * b - t_w) + pi_w.offset();
    if (std::abs(dist) < d_T_prime) ++close;
  }
  EdgeGateResult result;
  result.fraction = static_cast<double>(close) / static_cast<double>(edge_points_c.size());
  result.passed = result.fraction > R_T;
  return result;
}

std::vector<double> midranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    // Ranks i+1 .. j+1 share their average.
    const double rank = 0.5 * static_cast<double>(i + j + 2);
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

RankTestAxis mannWhitneyAxis(std::span<const double> sample_c, std::span<const double> sample_w,
                             double z_crit, RankTestMean mean_kind) {
  const double ni = static_cast<double>(sample_c.size());
  const double nj = static_cast<double>(sample_w.size());
  if (sample_c.empty() || sample_w.empty()) throw Error(ErrorCode::kInsufficientSamples, "empty sample");

  std::vector<double> pooled(sample_c.begin(), sample_c.end());
  pooled.insert(pooled.end(), sample_w.begin(), sample_w.end());
  const std::vector<double> ranks = midranks(pooled);

  double sum_c = 0.0;
  double sum_w = 0.0;
  for (std::size_t i = 0; i < sample_c.size(); ++i) sum_c += ranks[i];
  for (std::size_t j = 0; j < sample_w.size(); ++j) sum_w += ranks[sample_c.size() + j];

  RankTestAxis axis;
  axis.u_c = sum_c - ni * (ni + 1.0) / 2.0;
  axis.u_w = sum_w - nj * (nj + 1.0) / 2.0;
  if (std::abs(axis.u_c + axis.u_w - ni * nj) > 1e-9 * std::max(1.0, ni * nj)) {
    throw std::logic_error("Mann-Whitney identity U_c + U_w = I*J violated");
  }
  axis.w = std::min(axis.u_c, axis.u_w);

  // Tie groups over the pooled sample.
  std::vector<double> sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  double tie_term = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double tau = static_cast<double>(j - i);
    tie_term += tau * tau * tau - tau;
    i = j;
  }
  const double n = ni + nj;
  axis.variance = ni * nj * (n + 1.0) / 12.0 - ni * nj * tie_term / (12.0 * n * (n - 1.0));
  axis.mean = mean_kind == RankTestMean::kUStatistic ? ni * nj / 2.0 : ni * (n + 1.0) / 2.0;
  if (axis.variance <= 1e-12) {
    axis.z = 0.0;
    axis.passed = true;
  } else {
    axis.z = std::abs(axis.mean - axis.w) / std::sqrt(axis.variance);
    axis.passed = axis.z < z_crit;
  }
  return axis;
}

RankTestResult mannWhitneyGate(std::span<const Vec3> m_c, std::span<const Vec3> m_w, const AssociationConfig& cfg) {
  const auto min_samples = static_cast<std::size_t>(cfg.np_min_samples);
  if (m_c.size() < min_samples || m_w.size() < min_samples) {
    throw Error(ErrorCode::kInsufficientSamples,
                "I=" + std::to_string(m_c.size()) + " J=" + std::to_string(m_w.size()));
  }
  RankTestResult result;
  std::vector<double> c(m_c.size());
  std::vector<double> w(m_w.size());
  for (int axis = 0; axis < 3; ++axis) {
    for (std::size_t i = 0; i < m_c.size(); ++i) c[i] = m_c[i][axis];
    for (std::size_t j = 0; j < m_w.size(); ++j) w[j] = m_w[j][axis];
    result.axes[axis] = mannWhitneyAxis(c, w, cfg.z_crit, cfg.np_mean);
    result.passed = result.passed && result.axes[axis].passed;
  }
  return result;
}

PixelBox projectLandmarkBox(const PlaneLandmark& lm, const RigidTransform& t_cw, const CameraIntrinsics& k) {
  const std::span<const Vec3> source = lm.structure.hasVertices() ? std::span<const Vec3>(lm.structure.vertices)
                                                                  : std::span<const Vec3>(lm.edge_points);
  std::vector<Vec3> in_camera;
  in_camera.reserve(source.size());
  for (const Vec3& p : source) in_camera.push_back(t_cw * p);
  const auto box = projectedBox(in_camera, k);
  if (!box) throw Error(ErrorCode::kNotVisible, "landmark " + std::to_string(lm.id) + " has no point in front");
  return *box;
}

bool associatePointPlane(const Vec3& p_w, const PlaneObservation& obs, const RigidTransform& t_cw,
                         const CameraIntrinsics& k, double dist_max) {
  const Vec3 p_c = t_cw * p_w;
  if (!(p_c.z() > 1e-6)) return false;
  if (!(std::abs(pointPlaneDistance(p_c, obs.plane)) < dist_max)) return false;
  if (obs.class_id == kNoClass) return true;
  return obs.det_box && obs.det_box->contains(projectPoint(p_c, k));
}

std::optional<LandmarkId> AssociationResult::landmarkFor(std::size_t frame_index) const {
  for (const PlaneMatch& m : matches) {
    if (m.frame_index == frame_index) return m.landmark_id;
  }
  return std::nullopt;
}

GateTrace evaluatePlanePair(const PlaneCandidate& frame, const PlaneCandidate& map, const RigidTransform& t_cw,
                            const AssociationConfig& cfg) {
  GateTrace t;
  t.angle = normalAngle(*frame.plane, *map.plane, t_cw);
  t.angle_pass = t.angle < cfg.beta_T;
  t.offset = offsetResidual(*frame.plane, *map.plane, t_cw);
  t.offset_pass = t.offset < cfg.d_T;
  if (!frame.edge_points.empty()) {
    const EdgeGateResult edge = edgePointGate(frame.edge_points, *map.plane, t_cw, cfg.d_T_prime, cfg.R_T);
    t.edge_fraction = edge.fraction;
    t.edge_pass = edge.passed;
  }
  const bool geometric_ok = t.angle_pass && (t.offset_pass || t.edge_pass);

  if (cfg.mode == AssociationMode::kParamsOnly ||
      (frame.class_id == kNoClass && map.class_id == kNoClass)) {
    t.rule = PairRule::kGeometric;
    t.candidate = geometric_ok;
    t.score = t.edge_fraction;
    return t;
  }

  if (frame.class_id != kNoClass && map.class_id != kNoClass) {
    t.rule = PairRule::kSemantic;
    t.class_match = frame.class_id == map.class_id;
    if (frame.detection_box && map.projection_box) t.iou = boxIou(*frame.detection_box, *map.projection_box);
    t.iou_pass = t.iou >= cfg.iou_assoc_min;
    t.candidate = t.angle_pass && t.class_match && t.iou_pass;
    const auto min_samples = static_cast<std::size_t>(cfg.np_min_samples);
    if (t.candidate && frame.points.size() >= min_samples && map.points.size() >= min_samples) {
      t.np_applied = true;
      t.np = mannWhitneyGate(frame.points, map.points, cfg);
      t.candidate = t.np.passed;
    }
    t.score = t.iou;
    return t;
  }

  // One side carries a class, the other does not: same plane seen with and
  // without a detection, or a classed object resting on an unclassed plane.
  t.rule = PairRule::kMixed;
  t.class_match = false;
  if (frame.projection_box && map.projection_box) t.iou = boxIou(*frame.projection_box, *map.projection_box);
  t.iou_pass = t.iou >= cfg.iou_assoc_min;
  t.candidate = geometric_ok && t.iou_pass;
  t.score = t.edge_fraction;
  return t;
}

AssociationResult associatePlanes(std::span<const PlaneObservation> frame, std::span<const PointCloud> frame_points,
                                  std::span<const PlaneLandmark> map, std::span<const PointCloud> map_points,
                                  const RigidTransform& t_cw, const CameraIntrinsics& k,
                                  const AssociationConfig& cfg) {
  const bool use_frame_points = frame_points.size() == frame.size();
  const bool use_map_points = map_points.size() == map.size();

  std::vector<std::optional<PixelBox>> map_boxes(map.size());
  for (std::size_t j = 0; j < map.size(); ++j) {
    try {
      map_boxes[j] = projectLandmarkBox(map[j], t_cw, k);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNotVisible) throw;
    }
  }

  AssociationResult result;
  for (std::size_t i = 0; i < frame.size(); ++i) {
    const PlaneObservation& obs = frame[i];
    PlaneCandidate fc;
    fc.plane = &obs.plane;
    fc.edge_points = obs.edge_points;
    fc.class_id = obs.class_id;
    fc.detection_box = obs.det_box;
    fc.projection_box = projectedBox(obs.edge_points, k);
    if (use_frame_points) fc.points = frame_points[i];

    for (std::size_t j = 0; j < map.size(); ++j) {
      PlaneCandidate mc;
      mc.plane = &map[j].plane;
      mc.edge_points = map[j].edge_points;
      mc.class_id = map[j].class_id;
      mc.projection_box = map_boxes[j];
      if (use_map_points) mc.points = map_points[j];

      GateTrace t = evaluatePlanePair(fc, mc, t_cw, cfg);
      t.frame_index = i;
      t.landmark_id = map[j].id;
      result.traces.push_back(t);
    }
  }

  // Greedy one-to-one resolution: semantic evidence first, then by score.
  std::vector<std::size_t> order;
  for (std::size_t n = 0; n < result.traces.size(); ++n) {
    if (result.traces[n].candidate) order.push_back(n);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const GateTrace& x = result.traces[a];
    const GateTrace& y = result.traces[b];
    const int rx = x.rule == PairRule::kSemantic ? 0 : 1;
    const int ry = y.rule == PairRule::kSemantic ? 0 : 1;
    return std::tie(rx, y.score, x.frame_index, x.landmark_id) < std::tie(ry, x.score, y.frame_index, y.landmark_id);
  });

  std::vector<bool> frame_taken(frame.size(), false);
  std::set<LandmarkId> landmark_taken;
  for (std::size_t n : order) {
    GateTrace& t = result.traces[n];
    if (frame_taken[t.frame_index] || landmark_taken.contains(t.landmark_id)) continue;
    frame_taken[t.frame_index] = true;
    landmark_taken.insert(t.landmark_id);
    t.accepted = true;
    result.matches.push_back({t.frame_index, t.landmark_id, t.score, t.rule});
  }
  std::sort(result.matches.begin(), result.matches.end(),
            [](const PlaneMatch& a, const PlaneMatch& b) { return a.frame_index < b.frame_index; });
  for (std::size_t i = 0; i < frame.size(); ++i) {
    if (!frame_taken[i]) result.unmatched_frame.push_back(i);
  }
  return result;
}

std::string formatTrace(const GateTrace& t) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6);
  os << "frame=" << t.frame_index << " landmark=" << t.landmark_id << " rule=" << toString(t.rule)
     << " angle=" << t.angle << " angle_ok=" << t.angle_pass << " offset=" << t.offset
     << " offset_ok=" << t.offset_pass << " edge_fraction=" << t.edge_fraction << " edge_ok=" << t.edge_pass
     << " class_ok=" << t.class_match << " iou=" << t.iou << " iou_ok=" << t.iou_pass
     << " np=" << t.np_applied;
  if (t.np_applied) {
    static constexpr const char* kAxes[] = {"x", "y", "z"};
    for (int a = 0; a < 3; ++a) {
      os << " W" << kAxes[a] << "=" << t.np.axes[a].w << " z" << kAxes[a] << "=" << t.np.axes[a].z;
    }
    os << " np_ok=" << t.np.passed;
  }
  os << " candidate=" << t.candidate << " accepted=" << t.accepted;
  return os.str();
}

void writeTraceLog(std::ostream& os, const AssociationResult& result) {
  for (const GateTrace& t : result.traces) os << formatTrace(t) << '\n';
}

}  // namespace planeslam
