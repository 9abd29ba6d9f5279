// planeslam command line: simulate, run, associate, optimize, evaluate,
// check-jacobians.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "planeslam/config.hpp"
#include "planeslam/io.hpp"
#include "planeslam/jacobian_audit.hpp"
#include "planeslam/pipeline.hpp"

namespace fs = std::filesystem;
using namespace planeslam;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUser = 1;
constexpr int kExitInternal = 2;

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

PipelineConfig loadWithOverrides(const GlobalOptions& g) {
  PipelineConfig cfg = g.config.empty() ? PipelineConfig{} : loadConfig(g.config);
  if (g.seed) {
    cfg.seed = *g.seed;
    cfg.scene.rng_seed = *g.seed;
  }
  if (!g.out.empty()) cfg.output.dir = g.out;
  return cfg;
}

AssociationMode parseMode(const std::string& s) {
  if (s == "integrated") return AssociationMode::kIntegrated;
  if (s == "params-only") return AssociationMode::kParamsOnly;
  throw Error(ErrorCode::kInvalidArgument, "unknown association mode '" + s + "'");
}

OdometryMode parseOdometry(const std::string& s) {
  if (s == "gt-noise") return OdometryMode::kGtNoise;
  if (s == "constant-velocity") return OdometryMode::kConstantVelocity;
  throw Error(ErrorCode::kInvalidArgument, "unknown odometry mode '" + s + "'");
}

std::string frameFile(int i) {
  char name[32];
  std::snprintf(name, sizeof name, "frame_%04d.json", i);
  return name;
}

nlohmann::ordered_json vec(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

int cmdSimulate(const GlobalOptions& g) {
  const PipelineConfig cfg = loadWithOverrides(g);
  cfg.validate();
  const CameraIntrinsics& k = cfg.intrinsics;
  const Scene scene = generateScene(cfg.scene);
  const std::vector<RigidTransform> poses = generateTrajectory(cfg.trajectory);
  const fs::path root(cfg.output.dir);
  fs::create_directories(root / "frames");

  nlohmann::ordered_json planes = nlohmann::ordered_json::array();
  for (const ScenePlane& p : scene.planes) {
    nlohmann::ordered_json v = nlohmann::ordered_json::array();
    for (const Vec3& c : p.vertices) v.push_back(vec(c));
    planes.push_back({{"id", p.id}, {"n", vec(p.plane.normal())}, {"d", p.plane.offset()},
                      {"class_id", p.class_id}, {"vertices", v}, {"object", p.object}});
  }
  nlohmann::ordered_json points = nlohmann::ordered_json::array();
  for (const SceneMapPoint& m : scene.map_points) {
    points.push_back({{"id", m.id}, {"p", vec(m.p_w)}, {"plane", m.plane}});
  }
  writeTextFile((root / "scene.json").string(),
                nlohmann::ordered_json{{"planes", planes}, {"map_points", points}}.dump(1) + "\n");

  Trajectory gt;
  nlohmann::ordered_json labels = nlohmann::ordered_json::array();
  int written = 0;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const double timestamp = static_cast<double>(i) / cfg.trajectory.rate_hz;
    gt.push_back({timestamp, poses[i].inverse()});
    SimulatedFrame sim;
    try {
      sim = renderFrame(scene, poses[i], k, cfg.noise, mixSeed(cfg.seed, i, 1), cfg.render);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNothingVisible) throw;
      continue;
    }
    Frame& f = sim.frame;
    f.id = static_cast<int>(i);
    f.timestamp = timestamp;
    f.T_cw = poses[i];
    for (std::size_t o = 0; o < f.observations.size(); ++o) {
      processObservation(f.observations[o], f.boxes, k, cfg.processing, mixSeed(cfg.seed, i, 100 + o));
    }
    f.observations = selectPlanes(std::move(f.observations), f.boxes, k, cfg.processing.selection,
                                  cfg.unstructured_classes);
    FrameRecord record{f, k, {}};
    for (const PointObservation& p : f.point_observations) record.map_points[p.id] = p.p_w;
    writeTextFile((root / "frames" / frameFile(f.id)).string(), frameToJson(record));
    labels.push_back({{"frame", f.id}, {"planes", sim.truth.plane_labels}, {"points", sim.truth.point_labels},
                      {"withhold", sim.withhold}});
    ++written;
  }
  writeTumTrajectory((root / "groundtruth.txt").string(), gt);
  writeTextFile((root / "labels.json").string(), labels.dump(1) + "\n");
  std::printf("planes %zu map_points %zu frames %d\n", scene.planes.size(), scene.map_points.size(), written);
  return kExitOk;
}

struct RunOptions {
  std::string mode;
  std::string odom;
  std::optional<int> frames;
  bool trace = false;
  bool dump_frames = false;
  bool dump_problems = false;
};

int cmdRun(const GlobalOptions& g, const RunOptions& o) {
  PipelineConfig cfg = loadWithOverrides(g);
  if (!o.mode.empty()) cfg.association.mode = parseMode(o.mode);
  if (!o.odom.empty()) cfg.odometry.mode = parseOdometry(o.odom);
  if (o.frames) cfg.trajectory.frames = *o.frames;
  cfg.output.trace = cfg.output.trace || o.trace;
  cfg.output.dump_frames = cfg.output.dump_frames || o.dump_frames;
  cfg.output.dump_problems = cfg.output.dump_problems || o.dump_problems;
  cfg.validate();

  const RunOutput out = runPipeline(cfg);
  writeRunArtifacts(cfg.output.dir, out);
  const RunReport& r = out.report;
  std::printf("frames %zu skipped %d landmarks %zu\n", r.frames.size(), r.skipped_frames, r.final_landmarks);
  std::printf("precision %.6f recall %.6f fusions %d wrong_fusions %d duplicates %d\n", r.precision, r.recall,
              r.fusion_events, r.wrong_fusion_events, r.duplicate_landmarks);
  std::printf("ate_rmse %.6f ate_stddev %.6f\n", r.ate_rmse, r.ate_stddev);
  return kExitOk;
}

int cmdAssociate(const GlobalOptions& g, const std::string& map_path, const std::string& frame_path,
                 const std::string& mode, bool trace) {
  PipelineConfig cfg = loadWithOverrides(g);
  if (!mode.empty()) cfg.association.mode = parseMode(mode);
  cfg.association.validate();
  const PlaneMap map = PlaneMap::importMap(snapshotFromJson(readTextFile(map_path)));
  const FrameRecord record = frameFromJson(readTextFile(frame_path));
  const AssociationResult result =
      associateFrame(record.frame, map.landmarks(), record.map_points, record.intrinsics, cfg.association);
  for (const PlaneMatch& m : result.matches) {
    std::printf("match frame=%zu landmark=%llu rule=%s score=%.6f\n", m.frame_index,
                static_cast<unsigned long long>(m.landmark_id), toString(m.rule), m.score);
  }
  for (std::size_t u : result.unmatched_frame) std::printf("unmatched frame=%zu\n", u);
  if (trace) writeTraceLog(std::cout, result);
  return kExitOk;
}

int cmdOptimize(const std::string& problem_path, const std::string& log_path) {
  CameraIntrinsics k;
  const PoseProblem problem = problemFromJson(readTextFile(problem_path), &k);
  const OptimizeResult result = optimize(problem, k);
  const Vec3& t = result.T_cw.translation();
  const Eigen::Quaterniond q = result.T_cw.quaternion();
  std::printf("initial_cost %.9g final_cost %.9g iterations %d converged %d skipped %d\n", result.initial_cost,
              result.final_cost, result.iterations, result.converged ? 1 : 0, result.skipped_factors);
  std::printf("T_cw %.9f %.9f %.9f %.9f %.9f %.9f %.9f\n", t.x(), t.y(), t.z(), q.x(), q.y(), q.z(), q.w());
  if (log_path == "-") {
    writeSolveLog(std::cout, result);
  } else if (!log_path.empty()) {
    std::ofstream os(log_path);
    if (!os) throw Error(ErrorCode::kIoError, "cannot write '" + log_path + "'");
    writeSolveLog(os, result);
  }
  return kExitOk;
}

int cmdEvaluate(const std::string& est, const std::string& gt, double max_dt) {
  const AteResult ate = evaluateAte(readTumTrajectory(est), readTumTrajectory(gt), max_dt);
  std::printf("rmse %.6f\nstddev %.6f\npairs %zu\n", ate.rmse, ate.stddev, ate.errors.size());
  return kExitOk;
}

int cmdCheckJacobians(const GlobalOptions& g, int instances) {
  const PipelineConfig cfg = loadWithOverrides(g);
  const JacobianAudit audit = auditJacobians(instances, cfg.seed, cfg.intrinsics);
  bool ok = true;
  for (const auto& [kind, err] : audit.max_error) {
    std::printf("%-20s %.3e\n", toString(kind), err);
    ok = ok && err < 1e-5;
  }
  std::printf("%s\n", ok ? "ok" : "FAILED");
  return ok ? kExitOk : kExitInternal;
}

bool isUserError(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kInvalidSpec:
    case ErrorCode::kParseError:
    case ErrorCode::kIoError:
    case ErrorCode::kConfigError:
    case ErrorCode::kNoMatches:
      return true;
    default:
      return false;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Planar SLAM back-end for planar-ambiguous scenes"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config, "YAML config file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "RNG seed (overrides the config)");
  app.add_option("--out", g.out, "Output directory (overrides the config)");

  auto* simulate = app.add_subcommand("simulate", "Write a simulated scene and its frames");

  RunOptions run_opts;
  auto* run = app.add_subcommand("run", "Run the full pipeline");
  run->add_option("--mode", run_opts.mode, "Association mode: integrated or params-only");
  run->add_option("--odom", run_opts.odom, "Odometry: gt-noise or constant-velocity");
  run->add_option("--frames", run_opts.frames, "Number of frames (overrides the config)");
  run->add_flag("--trace", run_opts.trace, "Write association_trace.txt");
  run->add_flag("--dump-frames", run_opts.dump_frames, "Write per-frame records and map snapshots");
  run->add_flag("--dump-problems", run_opts.dump_problems, "Write per-frame pose problems");

  std::string map_path, frame_path, assoc_mode;
  bool trace = false;
  auto* associate = app.add_subcommand("associate", "Associate one frame against a map snapshot");
  associate->add_option("--map", map_path, "Map snapshot JSON")->required()->check(CLI::ExistingFile);
  associate->add_option("--frame", frame_path, "Frame record JSON")->required()->check(CLI::ExistingFile);
  associate->add_option("--mode", assoc_mode, "Association mode: integrated or params-only");
  associate->add_flag("--trace", trace, "Print the per-pair gate trace");

  std::string problem_path, log_path;
  auto* opt = app.add_subcommand("optimize", "Solve a serialized pose problem");
  opt->add_option("--problem", problem_path, "Pose problem JSON")->required()->check(CLI::ExistingFile);
  opt->add_option("--log", log_path, "Iteration log file, '-' for stdout");

  std::string est_path, gt_path;
  double max_dt = 0.02;
  auto* evaluate = app.add_subcommand("evaluate", "ATE between two TUM trajectories");
  evaluate->add_option("estimated", est_path, "Estimated trajectory")->required()->check(CLI::ExistingFile);
  evaluate->add_option("groundtruth", gt_path, "Ground-truth trajectory")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--max-dt", max_dt, "Timestamp matching tolerance in seconds");

  int instances = 100;
  auto* check = app.add_subcommand("check-jacobians", "Finite-difference audit of the factor Jacobians");
  check->add_option("--instances", instances, "Random instances per factor kind")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitUser;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*simulate) return cmdSimulate(g);
    if (*run) return cmdRun(g, run_opts);
    if (*associate) return cmdAssociate(g, map_path, frame_path, assoc_mode, trace);
    if (*opt) return cmdOptimize(problem_path, log_path);
    if (*evaluate) return cmdEvaluate(est_path, gt_path, max_dt);
    if (*check) return cmdCheckJacobians(g, instances);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return isUserError(e.code()) ? kExitUser : kExitInternal;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kExitInternal;
  }
  return kExitUser;
}
