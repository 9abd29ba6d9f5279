#include "planeslam/io.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace planeslam {
namespace {

using nlohmann::json;

json vec(const Eigen::Ref<const Eigen::VectorXd>& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

template <int N>
Eigen::Matrix<double, N, 1> toVec(const json& a) {
  if (!a.is_array() || a.size() != static_cast<std::size_t>(N)) {
    throw Error(ErrorCode::kParseError, "expected an array of " + std::to_string(N) + " numbers");
  }
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) v[i] = a.at(static_cast<std::size_t>(i)).get<double>();
  return v;
}

json cloudJson(const PointCloud& cloud) {
  json a = json::array();
  for (const Vec3& p : cloud) a.push_back(vec(p));
  return a;
}

PointCloud cloudFrom(const json& a) {
  PointCloud out;
  for (const json& p : a) out.push_back(toVec<3>(p));
  return out;
}

json poseJson(const RigidTransform& t) {
  json r = json::array();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) r.push_back(t.rotation()(i, j));
  }
  return {{"R", r}, {"t", vec(t.translation())}};
}

RigidTransform poseFrom(const json& j) {
  const json& r = j.at("R");
  if (!r.is_array() || r.size() != 9) throw Error(ErrorCode::kParseError, "pose rotation needs 9 numbers");
  Mat3 m;
  for (int i = 0; i < 3; ++i) {
    for (int c = 0; c < 3; ++c) m(i, c) = r.at(static_cast<std::size_t>(3 * i + c)).get<double>();
  }
  return RigidTransform(m, toVec<3>(j.at("t")));
}

json boxJson(const PixelBox& b) { return json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

PixelBox boxFrom(const json& a) {
  const Vec4 v = toVec<4>(a);
  return {v[0], v[1], v[2], v[3]};
}

json intrinsicsJson(const CameraIntrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

CameraIntrinsics intrinsicsFrom(const json& j) {
  CameraIntrinsics k;
  k.fx = j.at("fx").get<double>();
  k.fy = j.at("fy").get<double>();
  k.cx = j.at("cx").get<double>();
  k.cy = j.at("cy").get<double>();
  k.width = j.at("width").get<int>();
  k.height = j.at("height").get<int>();
  k.validate();
  return k;
}

json structureJson(const PlaneStructure& s) {
  json lines = json::array();
  for (const Line3D& l : s.edge_lines) lines.push_back({{"point", vec(l.point())}, {"direction", vec(l.direction())}});
  return {{"edge_lines", lines}, {"vertices", cloudJson(s.vertices)}};
}

PlaneStructure structureFrom(const json& j) {
  PlaneStructure s;
  for (const json& l : j.at("edge_lines")) s.edge_lines.emplace_back(toVec<3>(l.at("point")), toVec<3>(l.at("direction")));
  s.vertices = cloudFrom(j.at("vertices"));
  return s;
}

// Wraps nlohmann exceptions and bad enum names into ParseError.
template <typename F>
auto parsing(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, e.what());
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kInvalidArgument) throw;
    throw Error(ErrorCode::kParseError, e.what());
  }
}

std::array<unsigned char, 3> landmarkColor(LandmarkId id) {
  // Golden-ratio hue sequence at fixed saturation and value.
  const double golden = 0.618033988749894848;
  const double h = std::fmod(0.1 + golden * static_cast<double>(id), 1.0) * 6.0;
  const double s = 0.65;
  const double v = 0.95;
  const int sector = static_cast<int>(std::floor(h)) % 6;
  const double f = h - std::floor(h);
  const double p = v * (1 - s);
  const double q = v * (1 - s * f);
  const double t = v * (1 - s * (1 - f));
  double r = v, g = t, b = p;
  switch (sector) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
  auto byte = [](double c) { return static_cast<unsigned char>(std::lround(c * 255.0)); };
  return {byte(r), byte(g), byte(b)};
}

std::ofstream openForWrite(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open '" + path + "' for writing");
  return out;
}

}  // namespace

std::string readTextFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void writeTextFile(const std::string& path, const std::string& text) {
  std::ofstream out = openForWrite(path);
  out << text;
  if (!out) throw Error(ErrorCode::kIoError, "write to '" + path + "' failed");
}

Trajectory parseTumTrajectory(std::istream& in) {
  Trajectory out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;

    double values[8];
    int count = 0;
    std::size_t pos = first;
    while (pos < line.size()) {
      const std::size_t end = std::min(line.find_first_of(" \t", pos), line.size());
      if (count == 8) {
        throw Error(ErrorCode::kParseError, "line " + std::to_string(line_no) + ": more than 8 fields");
      }
      const auto [ptr, ec] = std::from_chars(line.data() + pos, line.data() + end, values[count]);
      if (ec != std::errc() || ptr != line.data() + end) {
        throw Error(ErrorCode::kParseError, "line " + std::to_string(line_no) + " column " + std::to_string(pos + 1) +
                                                ": invalid number '" + line.substr(pos, end - pos) + "'");
      }
      ++count;
      pos = line.find_first_not_of(" \t", end);
      if (pos == std::string::npos) break;
    }
    if (count != 8) {
      throw Error(ErrorCode::kParseError,
                  "line " + std::to_string(line_no) + ": expected 8 fields, found " + std::to_string(count));
    }
    Eigen::Quaterniond q(values[7], values[4], values[5], values[6]);
    const double norm = q.norm();
    if (!(norm >= 0.999 && norm <= 1.001)) {
      throw Error(ErrorCode::kParseError, "line " + std::to_string(line_no) + " column " +
                                              std::to_string(line.find_first_not_of(" \t") + 1) +
                                              ": quaternion norm " + std::to_string(norm));
    }
    q.normalize();
    out.push_back({values[0], RigidTransform::fromQuaternion(q, Vec3(values[1], values[2], values[3]))});
  }
  return out;
}

Trajectory readTumTrajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open '" + path + "'");
  return parseTumTrajectory(in);
}

void writeTumTrajectory(std::ostream& out, const Trajectory& trajectory) {
  char line[256];
  for (const StampedPose& p : trajectory) {
    Eigen::Quaterniond q = p.T_wc.quaternion();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    const Vec3& t = p.T_wc.translation();
    std::snprintf(line, sizeof(line), "%.6f %.7f %.7f %.7f %.7f %.7f %.7f %.7f\n", p.timestamp, t.x(), t.y(), t.z(),
                  q.x(), q.y(), q.z(), q.w());
    out << line;
  }
}

void writeTumTrajectory(const std::string& path, const Trajectory& trajectory) {
  std::ofstream out = openForWrite(path);
  writeTumTrajectory(out, trajectory);
}

void writeMapPly(std::ostream& out, const MapSnapshot& snapshot) {
  std::size_t count = 0;
  for (const PlaneLandmark& lm : snapshot.landmarks) count += lm.cloud.size();
  out << "ply\nformat ascii 1.0\nelement vertex " << count
      << "\nproperty float x\nproperty float y\nproperty float z\n"
         "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  char line[128];
  for (const PlaneLandmark& lm : snapshot.landmarks) {
    const auto c = landmarkColor(lm.id);
    for (const Vec3& p : lm.cloud) {
      std::snprintf(line, sizeof(line), "%.6f %.6f %.6f %u %u %u\n", p.x(), p.y(), p.z(), c[0], c[1], c[2]);
      out << line;
    }
  }
}

void writeMapPly(const std::string& path, const MapSnapshot& snapshot) {
  std::ofstream out = openForWrite(path);
  writeMapPly(out, snapshot);
}

std::string mapSummaryJson(const MapSnapshot& snapshot) {
  json landmarks = json::array();
  for (const PlaneLandmark& lm : snapshot.landmarks) {
    landmarks.push_back({{"id", lm.id},
                         {"n", vec(lm.plane.normal())},
                         {"d", lm.plane.offset()},
                         {"class_id", lm.class_id},
                         {"vertices", cloudJson(lm.structure.vertices)},
                         {"num_points", lm.cloud.size()}});
  }
  return json{{"landmarks", landmarks}}.dump(2) + "\n";
}

void writeMapJson(const std::string& path, const MapSnapshot& snapshot) {
  writeTextFile(path, mapSummaryJson(snapshot));
}

std::string snapshotToJson(const MapSnapshot& snapshot) {
  json landmarks = json::array();
  for (const PlaneLandmark& lm : snapshot.landmarks) {
    json covisible = json::array();
    for (const auto& [id, count] : lm.covisible) covisible.push_back({id, count});
    landmarks.push_back({{"id", lm.id},
                         {"plane", vec(lm.plane.coefficients())},
                         {"class_id", lm.class_id},
                         {"observations", lm.observations},
                         {"structure", structureJson(lm.structure)},
                         {"covisible", covisible},
                         {"associated_points", lm.associated_points},
                         {"num_points", lm.cloud.size()},
                         {"cloud", cloudJson(lm.cloud)},
                         {"edge_points", cloudJson(lm.edge_points)}});
  }
  return json{{"next_id", snapshot.next_id}, {"landmarks", landmarks}}.dump(1) + "\n";
}

MapSnapshot snapshotFromJson(const std::string& text) {
  return parsing([&] {
    const json j = json::parse(text);
    MapSnapshot s;
    s.next_id = j.at("next_id").get<LandmarkId>();
    for (const json& l : j.at("landmarks")) {
      PlaneLandmark lm;
      lm.id = l.at("id").get<LandmarkId>();
      lm.plane = Plane::fromCoefficients(toVec<4>(l.at("plane")));
      lm.class_id = l.at("class_id").get<int>();
      lm.observations = l.at("observations").get<int>();
      lm.structure = structureFrom(l.at("structure"));
      for (const json& c : l.at("covisible")) lm.covisible[c.at(0).get<LandmarkId>()] = c.at(1).get<int>();
      lm.associated_points = l.at("associated_points").get<std::set<MapPointId>>();
      lm.cloud = cloudFrom(l.at("cloud"));
      lm.edge_points = cloudFrom(l.at("edge_points"));
      s.landmarks.push_back(std::move(lm));
    }
    return s;
  });
}

std::string problemToJson(const PoseProblem& problem, const CameraIntrinsics& k) {
  json factors = json::array();
  for (const Factor& f : problem.factors) {
    json j = {{"kind", toString(f.kind)}, {"weight", f.weight}, {"huber_delta", f.huber_delta}};
    switch (f.kind) {
      case FactorKind::kPosePoint:
        j["u_obs"] = vec(f.u_obs);
        j["p_w"] = vec(f.p_w);
        break;
      case FactorKind::kPosePlane:
        j["pi_c"] = vec(f.pi_c);
        j["pi_w"] = vec(f.pi_w);
        break;
      case FactorKind::kBoxPlane:
        j["box_obs"] = boxJson(f.box_obs);
        j["vertices_w"] = cloudJson(PointCloud(f.vertices_w.begin(), f.vertices_w.end()));
        break;
      case FactorKind::kPointPlane:
        j["pi_c"] = vec(f.pi_c);
        j["p_w"] = vec(f.p_w);
        break;
      case FactorKind::kPlaneParallel:
        j["n_c"] = vec(f.n_c);
        j["n_w"] = vec(f.n_w);
        break;
      case FactorKind::kPlanePerpendicular: {
        j["n_c"] = vec(f.n_c);
        j["n_w"] = vec(f.n_w);
        json r = json::array();
        for (int a = 0; a < 3; ++a) {
          for (int b = 0; b < 3; ++b) r.push_back(f.r_perp(a, b));
        }
        j["r_perp"] = r;
        break;
      }
    }
    if (f.landmark_id >= 0) j["landmark_id"] = f.landmark_id;
    if (f.point_id >= 0) j["point_id"] = f.point_id;
    factors.push_back(j);
  }
  const SolverSettings& s = problem.solver;
  json solver = {{"max_iterations", s.max_iterations}, {"lambda_init", s.lambda_init},
                 {"lambda_scale", s.lambda_scale},     {"convergence_tol", s.convergence_tol},
                 {"outlier_rounds", s.outlier_rounds}, {"outlier_chi2", s.outlier_chi2}};
  return json{{"T_cw", poseJson(problem.T_cw)},
              {"intrinsics", intrinsicsJson(k)},
              {"solver", solver},
              {"factors", factors}}
             .dump(1) +
         "\n";
}

PoseProblem problemFromJson(const std::string& text, CameraIntrinsics* k) {
  return parsing([&] {
    const json j = json::parse(text);
    PoseProblem p;
    p.T_cw = poseFrom(j.at("T_cw"));
    if (k) *k = intrinsicsFrom(j.at("intrinsics"));
    if (j.contains("solver")) {
      const json& s = j.at("solver");
      p.solver.max_iterations = s.value("max_iterations", p.solver.max_iterations);
      p.solver.lambda_init = s.value("lambda_init", p.solver.lambda_init);
      p.solver.lambda_scale = s.value("lambda_scale", p.solver.lambda_scale);
      p.solver.convergence_tol = s.value("convergence_tol", p.solver.convergence_tol);
      p.solver.outlier_rounds = s.value("outlier_rounds", p.solver.outlier_rounds);
      p.solver.outlier_chi2 = s.value("outlier_chi2", p.solver.outlier_chi2);
    }
    for (const json& fj : j.at("factors")) {
      Factor f;
      f.kind = factorKindFromString(fj.at("kind").get<std::string>());
      f.weight = fj.at("weight").get<double>();
      f.huber_delta = fj.at("huber_delta").get<double>();
      if (fj.contains("u_obs")) f.u_obs = toVec<2>(fj.at("u_obs"));
      if (fj.contains("p_w")) f.p_w = toVec<3>(fj.at("p_w"));
      if (fj.contains("pi_c")) f.pi_c = toVec<4>(fj.at("pi_c"));
      if (fj.contains("pi_w")) f.pi_w = toVec<4>(fj.at("pi_w"));
      if (fj.contains("box_obs")) f.box_obs = boxFrom(fj.at("box_obs"));
      if (fj.contains("vertices_w")) {
        const PointCloud v = cloudFrom(fj.at("vertices_w"));
        if (v.size() != 4) throw Error(ErrorCode::kParseError, "BoxPlane needs 4 vertices");
        std::copy(v.begin(), v.end(), f.vertices_w.begin());
      }
      if (fj.contains("n_c")) f.n_c = toVec<3>(fj.at("n_c"));
      if (fj.contains("n_w")) f.n_w = toVec<3>(fj.at("n_w"));
      if (fj.contains("r_perp")) {
        const json& r = fj.at("r_perp");
        for (int a = 0; a < 3; ++a) {
          for (int b = 0; b < 3; ++b) f.r_perp(a, b) = r.at(static_cast<std::size_t>(3 * a + b)).get<double>();
        }
      }
      f.landmark_id = fj.value("landmark_id", -1);
      f.point_id = fj.value("point_id", -1);
      p.factors.push_back(f);
    }
    return p;
  });
}

std::string frameToJson(const FrameRecord& record) {
  const Frame& f = record.frame;
  json observations = json::array();
  for (const PlaneObservation& o : f.observations) {
    json j = {{"plane", vec(o.plane.coefficients())},
              {"class_id", o.class_id},
              {"inlier_ratio", o.inlier_ratio},
              {"quality", o.quality == PlaneQuality::kGood ? "good" : "bad"},
              {"structure", structureJson(o.structure)},
              {"edge_points", cloudJson(o.edge_points)},
              {"cloud", cloudJson(o.cloud)}};
    if (o.det_box) j["det_box"] = boxJson(*o.det_box);
    observations.push_back(j);
  }
  json boxes = json::array();
  for (const DetectionBox& b : f.boxes) boxes.push_back({{"box", boxJson(b.box)}, {"class_id", b.class_id}, {"score", b.score}});
  json points = json::array();
  for (const PointObservation& p : f.point_observations) {
    points.push_back({{"id", p.id}, {"pixel", vec(p.pixel)}, {"p_w", vec(p.p_w)}});
  }
  json links = json::array();
  for (const PointPlaneLink& l : f.point_plane) links.push_back({l.obs, l.point});
  json map_points = json::array();
  for (const auto& [id, p] : record.map_points) map_points.push_back({{"id", id}, {"p_w", vec(p)}});
  return json{{"id", f.id},
              {"timestamp", f.timestamp},
              {"T_cw", poseJson(f.T_cw)},
              {"intrinsics", intrinsicsJson(record.intrinsics)},
              {"observations", observations},
              {"boxes", boxes},
              {"point_observations", points},
              {"point_plane", links},
              {"map_points", map_points}}
             .dump(1) +
         "\n";
}

FrameRecord frameFromJson(const std::string& text) {
  return parsing([&] {
    const json j = json::parse(text);
    FrameRecord r;
    Frame& f = r.frame;
    f.id = j.value("id", 0);
    f.timestamp = j.value("timestamp", 0.0);
    f.T_cw = poseFrom(j.at("T_cw"));
    if (j.contains("intrinsics")) r.intrinsics = intrinsicsFrom(j.at("intrinsics"));
    for (const json& o : j.at("observations")) {
      PlaneObservation obs;
      obs.plane = Plane::fromCoefficients(toVec<4>(o.at("plane")));
      obs.class_id = o.value("class_id", kNoClass);
      obs.inlier_ratio = o.value("inlier_ratio", 1.0);
      obs.quality = o.value("quality", std::string("good")) == "good" ? PlaneQuality::kGood : PlaneQuality::kBad;
      if (o.contains("structure")) obs.structure = structureFrom(o.at("structure"));
      if (o.contains("det_box")) obs.det_box = boxFrom(o.at("det_box"));
      if (o.contains("edge_points")) obs.edge_points = cloudFrom(o.at("edge_points"));
      if (o.contains("cloud")) obs.cloud = cloudFrom(o.at("cloud"));
      f.observations.push_back(std::move(obs));
    }
    if (j.contains("boxes")) {
      for (const json& b : j.at("boxes")) {
        f.boxes.push_back({boxFrom(b.at("box")), b.at("class_id").get<int>(), b.value("score", 1.0)});
      }
    }
    if (j.contains("point_observations")) {
      for (const json& p : j.at("point_observations")) {
        f.point_observations.push_back({p.at("id").get<MapPointId>(), toVec<2>(p.at("pixel")), toVec<3>(p.at("p_w"))});
      }
    }
    if (j.contains("point_plane")) {
      for (const json& l : j.at("point_plane")) f.point_plane.push_back({l.at(0).get<std::size_t>(), l.at(1).get<std::size_t>()});
    }
    if (j.contains("map_points")) {
      for (const json& m : j.at("map_points")) r.map_points[m.at("id").get<MapPointId>()] = toVec<3>(m.at("p_w"));
    }
    return r;
  });
}

}  // namespace planeslam
