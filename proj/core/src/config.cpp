#include "planeslam/config.hpp"

#include <yaml-cpp/yaml.h>

#include <exception>
#include <fstream>
#include <sstream>

namespace planeslam {
namespace {

// Map node that records which keys were read, so leftovers can be reported.
class Section {
 public:
  Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) fail(path_.empty() ? "<root>" : path_, "expected a mapping");
  }

  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0 || !node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const std::string key = kv.first.as<std::string>();
      if (!seen_.contains(key)) fail(join(key), "unknown key");
    }
  }

  Section(const Section&) = delete;
  Section& operator=(const Section&) = delete;

  bool has(const std::string& key) const { return node_ && node_.IsMap() && node_[key]; }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    if (!has(key)) return;
    try {
      out = node_[key].as<T>();
    } catch (const YAML::Exception&) {
      fail(join(key), "wrong type");
    }
  }

  void readDegrees(const std::string& key, double& radians) {
    seen_.insert(key);
    if (!has(key)) return;
    double deg = 0.0;
    read(key, deg);
    radians = deg2rad(deg);
  }

  void readVec2(const std::string& key, Vec2& out) {
    std::vector<double> v;
    read(key, v);
    if (!has(key)) return;
    if (v.size() != 2) fail(join(key), "expected 2 numbers");
    out = Vec2(v[0], v[1]);
  }

  void readVec3(const std::string& key, Vec3& out) {
    std::vector<double> v;
    read(key, v);
    if (!has(key)) return;
    if (v.size() != 3) fail(join(key), "expected 3 numbers");
    out = Vec3(v[0], v[1], v[2]);
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    return Section(has(key) ? node_[key] : YAML::Node(), join(key));
  }

  YAML::Node raw(const std::string& key) {
    seen_.insert(key);
    return has(key) ? node_[key] : YAML::Node();
  }

  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  [[noreturn]] static void fail(const std::string& path, const std::string& what) {
    throw Error(ErrorCode::kConfigError, "'" + path + "': " + what);
  }

 private:
  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

void readSolver(Section s, SolverSettings& out) {
  s.read("max_iterations", out.max_iterations);
  s.read("lambda_init", out.lambda_init);
  s.read("lambda_scale", out.lambda_scale);
  s.read("convergence_tol", out.convergence_tol);
  s.read("outlier_rounds", out.outlier_rounds);
  s.read("outlier_chi2", out.outlier_chi2);
}

void validateSolver(const SolverSettings& s, const char* name) {
  if (s.max_iterations < 1 || !(s.lambda_init > 0.0) || !(s.lambda_scale > 1.0) || !(s.convergence_tol >= 0.0) ||
      s.outlier_rounds < 0 || !(s.outlier_chi2 > 0.0)) {
    throw Error(ErrorCode::kConfigError, std::string("'") + name + "': invalid solver settings");
  }
}

}  // namespace

const char* toString(OdometryMode mode) {
  return mode == OdometryMode::kGtNoise ? "gt-noise" : "constant-velocity";
}

void PipelineConfig::validate() const {
  try {
    intrinsics.validate();
    scene.validate();
    trajectory.validate();
    noise.validate();
    association.validate();
    factors.validate();
    map.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfigError, e.what());
  }
  validateSolver(solver, "solver");
  validateSolver(tracking, "tracking");
  if (fuse_every < 1) throw Error(ErrorCode::kConfigError, "'map.fuse_every': must be at least 1");
  if (!(odometry.translation_sigma >= 0.0 && odometry.rotation_sigma >= 0.0)) {
    throw Error(ErrorCode::kConfigError, "'odometry': sigmas must be non-negative");
  }
  if (!(render.cloud_spacing > 0.0 && render.edge_spacing > 0.0)) {
    throw Error(ErrorCode::kConfigError, "'render': spacings must be positive");
  }
}

PipelineConfig parseConfig(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::kConfigError, std::string("YAML: ") + e.what());
  }

  PipelineConfig c;
  {
    Section top(root, "");
    top.read("seed", c.seed);
    {
      Section k = top.child("intrinsics");
      k.read("fx", c.intrinsics.fx);
      k.read("fy", c.intrinsics.fy);
      k.read("cx", c.intrinsics.cx);
      k.read("cy", c.intrinsics.cy);
      k.read("width", c.intrinsics.width);
      k.read("height", c.intrinsics.height);
    }
    {
      Section s = top.child("scene");
      s.read("preset", c.scene_preset);
      try {
        c.scene = scenePreset(c.scene_preset);
      } catch (const Error& e) {
        throw Error(ErrorCode::kConfigError, std::string("'scene.preset': ") + e.what());
      }
      s.readVec2("table_size", c.scene.table_size);
      s.read("map_point_density", c.scene.map_point_density);
      const YAML::Node objects = s.raw("objects");
      if (objects && !objects.IsNull()) {
        if (!objects.IsSequence()) Section::fail("scene.objects", "expected a list");
        c.scene.objects.clear();
        for (std::size_t i = 0; i < objects.size(); ++i) {
          Section o(objects[i], "scene.objects[" + std::to_string(i) + "]");
          ObjectSpec spec;
          o.read("name", spec.name);
          o.read("class_id", spec.class_id);
          o.readVec2("position", spec.position);
          o.readDegrees("yaw_deg", spec.yaw);
          o.readVec3("size", spec.size);
          o.read("structured", spec.structured);
          c.scene.objects.push_back(spec);
        }
      }
      // Overrides the height of every object of `book_class`.
      double book_height = 0.0;
      s.read("book_height", book_height);
      int book_class = 1;
      s.read("book_class", book_class);
      if (s.has("book_height")) {
        for (ObjectSpec& o : c.scene.objects) {
          if (o.class_id == book_class) o.size.z() = book_height;
        }
      }
    }
    {
      Section t = top.child("trajectory");
      std::string kind = toString(c.trajectory.kind);
      t.read("kind", kind);
      try {
        c.trajectory.kind = trajectoryKindFromString(kind);
      } catch (const Error& e) {
        throw Error(ErrorCode::kConfigError, std::string("'trajectory.kind': ") + e.what());
      }
      t.read("radius", c.trajectory.radius);
      t.read("height", c.trajectory.height);
      t.read("frames", c.trajectory.frames);
      t.read("rate_hz", c.trajectory.rate_hz);
      t.readVec3("look_at", c.trajectory.look_at);
      t.readDegrees("start_angle_deg", c.trajectory.start_angle);
      t.readDegrees("arc_span_deg", c.trajectory.arc_span);
    }
    {
      Section n = top.child("noise");
      n.read("depth_sigma", c.noise.depth_sigma);
      n.read("pixel_sigma", c.noise.pixel_sigma);
      n.read("detection_dropout", c.noise.detection_dropout);
      n.read("association_withhold", c.noise.association_withhold);
      n.read("outlier_fraction", c.noise.outlier_fraction);
      n.read("outlier_offset_px", c.noise.outlier_offset_px);
    }
    {
      Section r = top.child("render");
      r.read("cloud_spacing", c.render.cloud_spacing);
      r.read("edge_spacing", c.render.edge_spacing);
      r.read("min_cloud_points", c.render.min_cloud_points);
      r.read("inlier_distance", c.render.inlier_distance);
    }
    {
      Section o = top.child("odometry");
      std::string mode = toString(c.odometry.mode);
      o.read("mode", mode);
      if (mode == "gt-noise") {
        c.odometry.mode = OdometryMode::kGtNoise;
      } else if (mode == "constant-velocity") {
        c.odometry.mode = OdometryMode::kConstantVelocity;
      } else {
        Section::fail("odometry.mode", "expected gt-noise or constant-velocity");
      }
      o.read("translation_sigma", c.odometry.translation_sigma);
      o.readDegrees("rotation_sigma_deg", c.odometry.rotation_sigma);
    }
    {
      Section p = top.child("processing");
      ProcessingConfig& pc = c.processing;
      p.read("refit_distance", pc.refit_distance);
      p.read("refit_iterations", pc.refit_iterations);
      p.read("edge_grid", pc.edge_grid);
      p.read("iou_min", pc.iou_min);
      p.read("inbox_fraction_min", pc.inbox_fraction_min);
      p.read("line_distance", pc.line_distance);
      p.read("line_min_inliers", pc.line_min_inliers);
      p.read("max_lines", pc.max_lines);
      {
        Section v = p.child("vertex");
        v.read("parallel_dot_min", pc.vertex.parallel_dot_min);
        v.read("parallel_dot_max", pc.vertex.parallel_dot_max);
        v.read("foot_gap_max", pc.vertex.foot_gap_max);
        v.read("vertex_plane_distance_max", pc.vertex.vertex_plane_distance_max);
        v.read("box_margin_px", pc.vertex.box_margin_px);
      }
      {
        Section s = p.child("selection");
        s.read("far_depth_max", pc.selection.far_depth_max);
        s.read("inlier_ratio_min", pc.selection.inlier_ratio_min);
        s.read("edge_margin_px", pc.selection.edge_margin_px);
        s.read("unstructured_fraction_max", pc.selection.unstructured_fraction_max);
        s.read("parallel_dot_min", pc.selection.parallel_dot_min);
      }
    }
    {
      std::vector<int> classes(c.unstructured_classes.begin(), c.unstructured_classes.end());
      top.read("unstructured_classes", classes);
      c.unstructured_classes = std::set<int>(classes.begin(), classes.end());
    }
    {
      Section a = top.child("association");
      AssociationConfig& ac = c.association;
      std::string mode = toString(ac.mode);
      a.read("mode", mode);
      if (mode == "integrated") {
        ac.mode = AssociationMode::kIntegrated;
      } else if (mode == "params-only") {
        ac.mode = AssociationMode::kParamsOnly;
      } else {
        Section::fail("association.mode", "expected integrated or params-only");
      }
      a.readDegrees("beta_T_deg", ac.beta_T);
      a.read("d_T", ac.d_T);
      a.read("d_T_prime", ac.d_T_prime);
      a.read("R_T", ac.R_T);
      a.read("iou_assoc_min", ac.iou_assoc_min);
      a.read("alpha", ac.alpha);
      a.read("np_min_samples", ac.np_min_samples);
      std::string mean = toString(ac.np_mean);
      a.read("np_mean", mean);
      if (mean == toString(RankTestMean::kUStatistic)) {
        ac.np_mean = RankTestMean::kUStatistic;
      } else if (mean == toString(RankTestMean::kPaperRankSumMean)) {
        ac.np_mean = RankTestMean::kPaperRankSumMean;
      } else {
        Section::fail("association.np_mean", "expected u_mean or paper_rank_sum_mean");
      }
      a.read("point_plane_dist_max", ac.point_plane_dist_max);
      try {
        ac.z_crit = AssociationConfig::criticalValue(ac.alpha);
      } catch (const Error& e) {
        throw Error(ErrorCode::kConfigError, std::string("'association.alpha': ") + e.what());
      }
    }
    {
      Section f = top.child("factors");
      {
        Section w = f.child("weights");
        w.read("pose_point", c.factors.weights.pose_point);
        w.read("pose_plane", c.factors.weights.pose_plane);
        w.read("box_plane", c.factors.weights.box_plane);
        w.read("point_plane", c.factors.weights.point_plane);
        w.read("plane_parallel", c.factors.weights.plane_parallel);
        w.read("plane_perpendicular", c.factors.weights.plane_perpendicular);
      }
      {
        Section h = f.child("huber");
        h.read("pose_point", c.factors.deltas.pose_point);
        h.read("pose_plane", c.factors.deltas.pose_plane);
        h.read("box_plane", c.factors.deltas.box_plane);
        h.read("point_plane", c.factors.deltas.point_plane);
        h.read("plane_parallel", c.factors.deltas.plane_parallel);
        h.read("plane_perpendicular", c.factors.deltas.plane_perpendicular);
      }
      f.readDegrees("angle_struct_tol_deg", c.factors.angle_struct_tol);
    }
    readSolver(top.child("solver"), c.solver);
    readSolver(top.child("tracking"), c.tracking);
    {
      Section m = top.child("map");
      m.read("voxel_size", c.map.voxel_size);
      m.read("edge_voxel_size", c.map.edge_voxel_size);
      m.read("boundary_grid", c.map.boundary_grid);
      m.read("covisible_min", c.map.covisible_min);
      m.read("fuse_every", c.fuse_every);
    }
    {
      Section o = top.child("output");
      o.read("dir", c.output.dir);
      o.read("dump_frames", c.output.dump_frames);
      o.read("dump_problems", c.output.dump_problems);
      o.read("trace", c.output.trace);
    }
  }
  c.scene.rng_seed = c.seed;
  c.validate();
  return c;
}

PipelineConfig loadConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfigError, "cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parseConfig(ss.str());
}

}  // namespace planeslam
