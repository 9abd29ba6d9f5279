#include "planeslam/sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Geometry>

namespace planeslam {
namespace {

// Object frame: origin at the base centre, z up, x along the yaw direction.
RigidTransform objectToWorld(const ObjectSpec& o) {
  const Mat3 r = Eigen::AngleAxisd(o.yaw, Vec3::UnitZ()).toRotationMatrix();
  return RigidTransform(r, Vec3(o.position.x(), o.position.y(), 0.0));
}

std::array<Vec3, 4> footprint(const ObjectSpec& o, double z) {
  const RigidTransform t = objectToWorld(o);
  const double hx = o.size.x() / 2;
  const double hy = o.size.y() / 2;
  return {t * Vec3(-hx, -hy, z), t * Vec3(hx, -hy, z), t * Vec3(hx, hy, z), t * Vec3(-hx, hy, z)};
}

bool insideFootprint(const ObjectSpec& o, const Vec3& p) {
  const Vec3 local = objectToWorld(o).inverse() * p;
  return std::abs(local.x()) <= o.size.x() / 2 && std::abs(local.y()) <= o.size.y() / 2;
}

// Rectangle sampled on a regular grid of cell centres.
PointCloud gridSample(const std::array<Vec3, 4>& v, double spacing) {
  const Vec3 a = v[1] - v[0];
  const Vec3 b = v[3] - v[0];
  const int na = std::max(1, static_cast<int>(std::floor(a.norm() / spacing)));
  const int nb = std::max(1, static_cast<int>(std::floor(b.norm() / spacing)));
  PointCloud out;
  out.reserve(static_cast<std::size_t>(na) * static_cast<std::size_t>(nb));
  for (int i = 0; i < na; ++i) {
    for (int j = 0; j < nb; ++j) {
      out.push_back(v[0] + a * ((i + 0.5) / na) + b * ((j + 0.5) / nb));
    }
  }
  return out;
}

PointCloud boundarySample(const std::array<Vec3, 4>& v, double spacing) {
  PointCloud out;
  for (std::size_t e = 0; e < 4; ++e) {
    const Vec3& p = v[e];
    const Vec3& q = v[(e + 1) % 4];
    const int n = std::max(1, static_cast<int>(std::ceil((q - p).norm() / spacing)));
    for (int j = 0; j < n; ++j) out.push_back(p + (q - p) * (static_cast<double>(j) / n));
  }
  return out;
}

bool insideImage(const Vec2& uv, const CameraIntrinsics& k) {
  return uv.x() >= 0.0 && uv.y() >= 0.0 && uv.x() < k.width && uv.y() < k.height;
}

}  // namespace

void SceneSpec::validate() const {
  if (!(table_size.x() > 0.0 && table_size.y() > 0.0)) throw Error(ErrorCode::kInvalidSpec, "table size must be positive");
  if (!(map_point_density >= 0.0)) throw Error(ErrorCode::kInvalidSpec, "map point density must be non-negative");
  for (const ObjectSpec& o : objects) {
    if (!(o.size.x() > 0.0 && o.size.y() > 0.0 && o.size.z() > 0.0)) {
      throw Error(ErrorCode::kInvalidSpec, "object '" + o.name + "' has a non-positive extent");
    }
    for (const Vec3& c : footprint(o, 0.0)) {
      if (std::abs(c.x()) > table_size.x() / 2 + 1e-9 || std::abs(c.y()) > table_size.y() / 2 + 1e-9) {
        throw Error(ErrorCode::kInvalidSpec, "object '" + o.name + "' does not rest on the table");
      }
    }
  }
}

SceneSpec scenePreset(const std::string& name) {
  SceneSpec s;
  if (name == "ambiguous-desk") {
    s.table_size = Vec2(1.6, 1.0);
    s.objects = {
        {"book-a", 1, Vec2(-0.35, 0.12), 0.15, Vec3(0.30, 0.20, 0.025), true},
        {"book-b", 1, Vec2(0.05, -0.15), -0.25, Vec3(0.28, 0.21, 0.03), true},
        {"book-c", 1, Vec2(0.38, 0.15), 0.4, Vec3(0.24, 0.17, 0.04), true},
        {"box", 2, Vec2(0.62, -0.33), 0.3, Vec3(0.20, 0.20, 0.15), true},
        {"plant", 3, Vec2(-0.66, -0.36), 0.0, Vec3(0.15, 0.15, 0.25), false},
    };
    return s;
  }
  if (name == "book-stack") {
    s.table_size = Vec2(1.2, 0.8);
    for (int i = 0; i < 5; ++i) {
      s.objects.push_back({"book-" + std::to_string(i + 1), 1, Vec2(-0.4 + 0.2 * i, 0.0), 0.0,
                           Vec3(0.16, 0.22, 0.01 * (i + 1)), true});
    }
    return s;
  }
  throw Error(ErrorCode::kInvalidSpec, "unknown scene preset '" + name + "'");
}

const char* toString(TrajectoryKind kind) {
  switch (kind) {
    case TrajectoryKind::kOrbit: return "orbit";
    case TrajectoryKind::kArc: return "arc";
    case TrajectoryKind::kStationary: return "stationary";
  }
  return "unknown";
}

TrajectoryKind trajectoryKindFromString(const std::string& name) {
  for (TrajectoryKind k : {TrajectoryKind::kOrbit, TrajectoryKind::kArc, TrajectoryKind::kStationary}) {
    if (name == toString(k)) return k;
  }
  throw Error(ErrorCode::kInvalidSpec, "unknown trajectory kind '" + name + "'");
}

void TrajectorySpec::validate() const {
  if (frames < 0) throw Error(ErrorCode::kInvalidSpec, "frame count must be non-negative");
  if (!(rate_hz > 0.0)) throw Error(ErrorCode::kInvalidSpec, "frame rate must be positive");
  if (!(height > 0.0)) throw Error(ErrorCode::kInvalidSpec, "camera must stay above the table");
  if (!(radius >= 0.0)) throw Error(ErrorCode::kInvalidSpec, "radius must be non-negative");
}

void NoiseSpec::validate() const {
  auto fraction = [](double v, const char* what) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::kInvalidSpec, std::string(what) + " must be in [0, 1]");
  };
  if (!(depth_sigma >= 0.0) || !(pixel_sigma >= 0.0) || !(outlier_offset_px >= 0.0)) {
    throw Error(ErrorCode::kInvalidSpec, "noise magnitudes must be non-negative");
  }
  fraction(detection_dropout, "detection_dropout");
  fraction(association_withhold, "association_withhold");
  fraction(outlier_fraction, "outlier_fraction");
}

Scene generateScene(const SceneSpec& spec) {
  spec.validate();
  Scene scene;
  scene.spec = spec;
  std::mt19937_64 rng(spec.rng_seed);

  const double w = spec.table_size.x() / 2;
  const double h = spec.table_size.y() / 2;
  ScenePlane table;
  table.id = 0;
  table.plane = makePlane(Vec4(0, 0, 1, 0));
  table.vertices = {Vec3(-w, -h, 0), Vec3(w, -h, 0), Vec3(w, h, 0), Vec3(-w, h, 0)};
  scene.planes.push_back(table);

  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    const ObjectSpec& o = spec.objects[i];
    if (!o.structured) continue;
    ScenePlane top;
    top.id = static_cast<int>(scene.planes.size());
    top.plane = makePlane(Vec4(0, 0, 1, -o.size.z()));
    top.class_id = o.class_id;
    top.vertices = footprint(o, o.size.z());
    top.object = static_cast<int>(i);
    scene.planes.push_back(top);
  }

  MapPointId next = 0;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (const ScenePlane& p : scene.planes) {
    const Vec3 a = p.vertices[1] - p.vertices[0];
    const Vec3 b = p.vertices[3] - p.vertices[0];
    const auto count = static_cast<int>(std::lround(spec.map_point_density * a.norm() * b.norm()));
    for (int n = 0; n < count; ++n) {
      const Vec3 x = p.vertices[0] + a * unit(rng) + b * unit(rng);
      bool covered = false;
      if (p.object < 0) {
        for (const ObjectSpec& o : spec.objects) covered = covered || insideFootprint(o, x);
      }
      if (!covered) scene.map_points.push_back({next++, x, p.id});
    }
  }
  return scene;
}

RigidTransform lookAt(const Vec3& eye, const Vec3& target) {
  const Vec3 f = (target - eye).normalized();
  Vec3 x = f.cross(Vec3::UnitZ());
  if (x.norm() < 1e-9) x = f.cross(Vec3::UnitY());
  x.normalize();
  const Vec3 y = f.cross(x);
  Mat3 r_wc;
  r_wc.col(0) = x;
  r_wc.col(1) = y;
  r_wc.col(2) = f;
  return RigidTransform(r_wc, eye).inverse();
}

std::vector<RigidTransform> generateTrajectory(const TrajectorySpec& spec) {
  spec.validate();
  std::vector<RigidTransform> poses;
  poses.reserve(static_cast<std::size_t>(spec.frames));
  for (int i = 0; i < spec.frames; ++i) {
    double angle = spec.start_angle;
    if (spec.kind == TrajectoryKind::kOrbit) angle += 2.0 * kPi * i / spec.frames;
    if (spec.kind == TrajectoryKind::kArc) angle += spec.arc_span * i / std::max(spec.frames - 1, 1);
    const Vec3 eye(spec.look_at.x() + spec.radius * std::cos(angle), spec.look_at.y() + spec.radius * std::sin(angle),
                   spec.height);
    poses.push_back(lookAt(eye, spec.look_at));
  }
  return poses;
}

bool occluded(const Scene& scene, const Vec3& eye, const Vec3& p) {
  constexpr double kTol = 1e-7;
  for (const ObjectSpec& o : scene.spec.objects) {
    const RigidTransform t_ow = objectToWorld(o).inverse();
    const Vec3 a = t_ow * eye;
    const Vec3 d = t_ow.rotation() * (p - eye);
    const Vec3 lo(-o.size.x() / 2, -o.size.y() / 2, 0.0);
    const Vec3 hi(o.size.x() / 2, o.size.y() / 2, o.size.z());
    double t0 = 0.0;
    double t1 = 1.0 - kTol;
    bool hit = true;
    for (int ax = 0; ax < 3 && hit; ++ax) {
      if (std::abs(d[ax]) < 1e-15) {
        hit = a[ax] > lo[ax] && a[ax] < hi[ax];
        continue;
      }
      double ta = (lo[ax] - a[ax]) / d[ax];
      double tb = (hi[ax] - a[ax]) / d[ax];
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
      hit = t0 < t1;
    }
    if (hit) return true;
  }
  return false;
}

SimulatedFrame renderFrame(const Scene& scene, const RigidTransform& t_cw, const CameraIntrinsics& k,
                           const NoiseSpec& noise, std::uint64_t rng_seed, const RenderSettings& settings) {
  noise.validate();
  std::mt19937_64 rng(rng_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Vec3 eye = t_cw.inverse().translation();

  auto visible = [&](const Vec3& p_w) {
    const Vec3 p_c = t_cw * p_w;
    if (!(p_c.z() > 1e-6)) return false;
    if (!insideImage(projectPoint(p_c, k), k)) return false;
    return !occluded(scene, eye, p_w);
  };
  auto depthNoise = [&](const Vec3& p_c) {
    if (noise.depth_sigma == 0.0) return p_c;
    return Vec3(p_c + noise.depth_sigma * gauss(rng) * p_c.normalized());
  };

  SimulatedFrame out;
  out.truth.T_cw = t_cw;
  std::vector<bool> plane_seen(scene.planes.size(), false);
  for (const ScenePlane& sp : scene.planes) {
    PlaneObservation obs;
    for (const Vec3& p : gridSample(sp.vertices, settings.cloud_spacing)) {
      if (visible(p)) obs.cloud.push_back(depthNoise(t_cw * p));
    }
    if (obs.cloud.size() < static_cast<std::size_t>(settings.min_cloud_points)) continue;
    for (const Vec3& p : boundarySample(sp.vertices, settings.edge_spacing)) {
      if (visible(p)) obs.edge_points.push_back(depthNoise(t_cw * p));
    }
    obs.plane = fitPlaneLeastSquares(obs.cloud);
    const auto inliers = std::count_if(obs.cloud.begin(), obs.cloud.end(), [&](const Vec3& p) {
      return std::abs(obs.plane.signedDistance(p)) <= settings.inlier_distance;
    });
    obs.inlier_ratio = static_cast<double>(inliers) / static_cast<double>(obs.cloud.size());
    out.frame.observations.push_back(std::move(obs));
    out.withhold.push_back(unit(rng) < noise.association_withhold);
    out.truth.plane_labels.push_back(sp.id);
    plane_seen[static_cast<std::size_t>(sp.id)] = true;
  }
  if (out.frame.observations.empty()) throw Error(ErrorCode::kNothingVisible, "no plane in view");

  for (std::size_t i = 0; i < scene.spec.objects.size(); ++i) {
    const ObjectSpec& o = scene.spec.objects[i];
    std::vector<Vec3> corners;
    if (o.structured) {
      const auto top = std::find_if(scene.planes.begin(), scene.planes.end(),
                                    [&](const ScenePlane& p) { return p.object == static_cast<int>(i); });
      if (!plane_seen[static_cast<std::size_t>(top->id)]) continue;
      corners.assign(top->vertices.begin(), top->vertices.end());
    } else {
      for (const Vec3& c : footprint(o, 0.0)) corners.push_back(c);
      for (const Vec3& c : footprint(o, o.size.z())) corners.push_back(c);
    }
    std::vector<Vec2> pixels;
    for (const Vec3& c : corners) {
      const Vec3 p_c = t_cw * c;
      if (!(p_c.z() > 1e-6)) break;
      pixels.push_back(projectPoint(p_c, k));
    }
    if (pixels.size() != corners.size()) continue;
    PixelBox box = PixelBox::fromPoints(pixels);
    if (noise.pixel_sigma > 0.0) {
      box.x_min += noise.pixel_sigma * gauss(rng);
      box.y_min += noise.pixel_sigma * gauss(rng);
      box.x_max += noise.pixel_sigma * gauss(rng);
      box.y_max += noise.pixel_sigma * gauss(rng);
    }
    const bool dropped = unit(rng) < noise.detection_dropout;
    box = box.clippedTo(k);
    if (dropped || !(box.width() > 1.0 && box.height() > 1.0)) continue;
    out.frame.boxes.push_back({box, o.class_id, 1.0});
  }

  for (const SceneMapPoint& mp : scene.map_points) {
    if (!visible(mp.p_w)) continue;
    Vec2 uv = projectPoint(t_cw * mp.p_w, k);
    if (noise.pixel_sigma > 0.0) uv += noise.pixel_sigma * Vec2(gauss(rng), gauss(rng));
    if (unit(rng) < noise.outlier_fraction) {
      const double angle = 2.0 * kPi * unit(rng);
      uv += noise.outlier_offset_px * Vec2(std::cos(angle), std::sin(angle));
    }
    out.frame.point_observations.push_back({mp.id, uv, mp.p_w});
    out.truth.point_labels.push_back(mp.plane);
  }
  return out;
}

AteResult evaluateAte(const Trajectory& estimated, const Trajectory& ground_truth, double max_dt) {
  Trajectory gt = ground_truth;
  std::stable_sort(gt.begin(), gt.end(),
                   [](const StampedPose& a, const StampedPose& b) { return a.timestamp < b.timestamp; });

  std::vector<Vec3> est_pts;
  std::vector<Vec3> gt_pts;
  for (const StampedPose& e : estimated) {
    auto it = std::lower_bound(gt.begin(), gt.end(), e.timestamp,
                               [](const StampedPose& p, double t) { return p.timestamp < t; });
    const StampedPose* best = nullptr;
    if (it != gt.end()) best = &*it;
    if (it != gt.begin()) {
      const StampedPose* prev = &*std::prev(it);
      if (!best || e.timestamp - prev->timestamp <= best->timestamp - e.timestamp) best = prev;
    }
    if (!best || std::abs(best->timestamp - e.timestamp) > max_dt) continue;
    est_pts.push_back(e.T_wc.translation());
    gt_pts.push_back(best->T_wc.translation());
  }
  if (est_pts.size() < 2) throw Error(ErrorCode::kNoMatches, std::to_string(est_pts.size()) + " matched poses");

  const auto n = static_cast<Eigen::Index>(est_pts.size());
  Eigen::Matrix3Xd src(3, n);
  Eigen::Matrix3Xd dst(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    src.col(i) = est_pts[static_cast<std::size_t>(i)];
    dst.col(i) = gt_pts[static_cast<std::size_t>(i)];
  }
  const Eigen::Matrix4d align = Eigen::umeyama(src, dst, false);

  AteResult result;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 moved = align.topLeftCorner<3, 3>() * src.col(i) + align.topRightCorner<3, 1>();
    const double e = (dst.col(i) - moved).norm();
    result.errors.push_back(e);
    sum += e;
    sum_sq += e * e;
  }
  const double mean = sum / static_cast<double>(n);
  result.rmse = std::sqrt(sum_sq / static_cast<double>(n));
  double var = 0.0;
  for (double e : result.errors) var += (e - mean) * (e - mean);
  result.stddev = std::sqrt(var / static_cast<double>(n));
  return result;
}

}  // namespace planeslam
