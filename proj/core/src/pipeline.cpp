#include "planeslam/pipeline.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "planeslam/io.hpp"

namespace planeslam {
namespace {

using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

class StageTimer {
 public:
  StageTimer(std::map<std::string, double>& sink, const char* name)
      : sink_(sink), name_(name), start_(Clock::now()) {}
  ~StageTimer() { sink_[name_] += std::chrono::duration<double>(Clock::now() - start_).count(); }
  StageTimer(const StageTimer&) = delete;
  StageTimer& operator=(const StageTimer&) = delete;

 private:
  std::map<std::string, double>& sink_;
  const char* name_;
  Clock::time_point start_;
};

// Ground-truth plane votes per landmark; used only for evaluation.
using Votes = std::map<LandmarkId, std::map<int, int>>;

std::optional<int> majorityLabel(const Votes& votes, LandmarkId id) {
  const auto it = votes.find(id);
  if (it == votes.end() || it->second.empty()) return std::nullopt;
  int best = it->second.begin()->first;
  int count = it->second.begin()->second;
  for (const auto& [label, n] : it->second) {
    if (n > count) {
      best = label;
      count = n;
    }
  }
  return best;
}

RigidTransform predictPose(const PipelineConfig& cfg, const std::vector<RigidTransform>& gt, int i, int prev,
                           const std::vector<RigidTransform>& estimates, std::mt19937_64& rng) {
  const RigidTransform& last = estimates.back();
  if (cfg.odometry.mode == OdometryMode::kConstantVelocity) {
    if (estimates.size() < 2) return last;
    const RigidTransform delta = last * estimates[estimates.size() - 2].inverse();
    return delta * last;
  }
  const RigidTransform delta = gt[static_cast<std::size_t>(i)] * gt[static_cast<std::size_t>(prev)].inverse();
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec6 xi;
  for (int d = 0; d < 3; ++d) xi(d) = cfg.odometry.rotation_sigma * normal(rng);
  for (int d = 3; d < 6; ++d) xi(d) = cfg.odometry.translation_sigma * normal(rng);
  return RigidTransform::exp(xi) * delta * last;
}

// PosePoint-only tracking; drops point observations flagged as outliers.
RigidTransform trackPoints(Frame& frame, const CameraIntrinsics& k, const PipelineConfig& cfg) {
  PoseProblem problem;
  problem.T_cw = frame.T_cw;
  problem.solver = cfg.tracking;
  for (const PointObservation& p : frame.point_observations) {
    Factor f;
    f.kind = FactorKind::kPosePoint;
    f.u_obs = p.pixel;
    f.p_w = p.p_w;
    f.weight = cfg.factors.weights.pose_point;
    f.huber_delta = cfg.factors.deltas.pose_point;
    f.point_id = static_cast<int>(p.id);
    problem.factors.push_back(f);
  }
  const OptimizeResult result = optimize(problem, k);
  if (!result.outlier.empty()) {
    std::vector<PointObservation> kept;
    for (std::size_t i = 0; i < frame.point_observations.size(); ++i) {
      if (!result.outlier[i]) kept.push_back(frame.point_observations[i]);
    }
    frame.point_observations = std::move(kept);
  }
  return result.T_cw;
}

double rotationErrorDeg(const RigidTransform& a, const RigidTransform& b) {
  const Mat3 d = a.rotation().transpose() * b.rotation();
  const double c = std::clamp((d.trace() - 1.0) / 2.0, -1.0, 1.0);
  return rad2deg(std::acos(c));
}

}  // namespace

AssociationResult associateFrame(const Frame& frame, std::span<const PlaneLandmark> map,
                                 const std::map<MapPointId, Vec3>& positions, const CameraIntrinsics& k,
                                 const AssociationConfig& cfg, const std::vector<bool>& withhold) {
  std::vector<std::size_t> index;
  std::vector<PlaneObservation> candidates;
  std::vector<PointCloud> frame_points;
  for (std::size_t o = 0; o < frame.observations.size(); ++o) {
    if (frame.observations[o].quality != PlaneQuality::kGood) continue;
    if (o < withhold.size() && withhold[o]) continue;
    index.push_back(o);
    candidates.push_back(frame.observations[o]);
    PointCloud pts;
    for (const PointPlaneLink& link : frame.point_plane) {
      if (link.obs == o) pts.push_back(frame.point_observations[link.point].p_w);
    }
    frame_points.push_back(std::move(pts));
  }
  std::vector<PointCloud> map_points;
  for (const PlaneLandmark& lm : map) {
    PointCloud pts;
    for (MapPointId id : lm.associated_points) {
      if (const auto it = positions.find(id); it != positions.end()) pts.push_back(it->second);
    }
    map_points.push_back(std::move(pts));
  }

  AssociationResult result = associatePlanes(candidates, frame_points, map, map_points, frame.T_cw, k, cfg);
  for (PlaneMatch& m : result.matches) m.frame_index = index[m.frame_index];
  for (std::size_t& u : result.unmatched_frame) u = index[u];
  for (GateTrace& t : result.traces) t.frame_index = index[t.frame_index];
  return result;
}

RunOutput runPipeline(const PipelineConfig& config) {
  config.validate();
  RunOutput out;
  RunReport& report = out.report;
  const CameraIntrinsics& k = config.intrinsics;

  Scene scene;
  std::vector<RigidTransform> gt;
  {
    StageTimer timer(out.timing, "simulate");
    scene = generateScene(config.scene);
    gt = generateTrajectory(config.trajectory);
  }

  PlaneMap map;
  Votes votes;
  std::map<MapPointId, Vec3> positions;
  std::set<int> seen_planes;
  std::vector<RigidTransform> estimates;
  std::mt19937_64 odometry_rng(mixSeed(config.seed, 0x0d0, 0));
  std::ostringstream trace;
  int prev_gt = -1;

  for (int i = 0; i < static_cast<int>(gt.size()); ++i) {
    const double timestamp = i / config.trajectory.rate_hz;
    out.ground_truth.push_back({timestamp, gt[static_cast<std::size_t>(i)].inverse()});
    FrameReport fr;
    fr.frame = i;
    fr.timestamp = timestamp;

    try {
      SimulatedFrame sim;
      {
        StageTimer timer(out.timing, "render");
        sim = renderFrame(scene, gt[static_cast<std::size_t>(i)], k, config.noise, mixSeed(config.seed, i, 1),
                          config.render);
      }
      Frame& frame = sim.frame;
      frame.id = i;
      frame.timestamp = timestamp;

      {
        StageTimer timer(out.timing, "track");
        frame.T_cw = estimates.empty() ? gt[static_cast<std::size_t>(i)]
                                       : predictPose(config, gt, i, prev_gt, estimates, odometry_rng);
        frame.T_cw = trackPoints(frame, k, config);
      }

      {
        StageTimer timer(out.timing, "process");
        for (std::size_t o = 0; o < frame.observations.size(); ++o) {
          processObservation(frame.observations[o], frame.boxes, k, config.processing, mixSeed(config.seed, i, 100 + o));
        }
        frame.observations = selectPlanes(std::move(frame.observations), frame.boxes, k,
                                          config.processing.selection, config.unstructured_classes);
        for (std::size_t p = 0; p < frame.point_observations.size(); ++p) {
          positions[frame.point_observations[p].id] = frame.point_observations[p].p_w;
          for (std::size_t o = 0; o < frame.observations.size(); ++o) {
            const PlaneObservation& obs = frame.observations[o];
            if (obs.quality != PlaneQuality::kGood) continue;
            if (associatePointPlane(frame.point_observations[p].p_w, obs, frame.T_cw, k,
                                    config.association.point_plane_dist_max)) {
              frame.point_plane.push_back({o, p});
              break;
            }
          }
        }
      }

      for (std::size_t o = 0; o < frame.observations.size(); ++o) {
        if (frame.observations[o].quality == PlaneQuality::kGood) seen_planes.insert(sim.truth.plane_labels[o]);
      }

      if (config.output.dump_frames) {
        FrameRecord record{frame, k, {}};
        for (const PlaneLandmark& lm : map.landmarks()) {
          for (MapPointId id : lm.associated_points) {
            if (const auto it = positions.find(id); it != positions.end()) record.map_points[id] = it->second;
          }
        }
        for (const PointObservation& p : frame.point_observations) record.map_points[p.id] = p.p_w;
        out.frame_dumps[i] = frameToJson(record);
        out.map_dumps[i] = snapshotToJson(map.exportMap());
      }

      {
        StageTimer timer(out.timing, "associate");
        frame.matches = associateFrame(frame, map.landmarks(), positions, k, config.association, sim.withhold);
      }
      if (config.output.trace) {
        trace << "frame=" << i << '\n';
        writeTraceLog(trace, frame.matches);
      }

      // Precision and recall against the labels voted so far.
      std::set<int> mapped_labels;
      for (const PlaneLandmark& lm : map.landmarks()) {
        if (const auto label = majorityLabel(votes, lm.id)) mapped_labels.insert(*label);
      }
      for (const PlaneMatch& m : frame.matches.matches) {
        const auto label = majorityLabel(votes, m.landmark_id);
        if (label && *label == sim.truth.plane_labels[m.frame_index]) {
          ++fr.tp;
        } else {
          ++fr.fp;
        }
      }
      for (std::size_t u : frame.matches.unmatched_frame) {
        if (mapped_labels.contains(sim.truth.plane_labels[u])) ++fr.fn;
      }

      {
        StageTimer timer(out.timing, "optimize");
        const PoseProblem problem = buildProblem(frame, map.landmarks(), k, config.factors, config.solver);
        if (config.output.dump_problems) out.problem_dumps[i] = problemToJson(problem, k);
        frame.T_cw = optimize(problem, k).T_cw;
      }

      {
        StageTimer timer(out.timing, "map");
        const InsertResult inserted =
            map.insertOrUpdate(frame, k, config.map, config.processing, mixSeed(config.seed, i, 2));
        for (const auto& [o, id] : inserted.assignment) ++votes[id][sim.truth.plane_labels[o]];
        if (config.fuse_every > 0 && (i + 1) % config.fuse_every == 0) {
          const std::vector<FusionEvent> events =
              map.fuseLandmarks(frame.T_cw, k, config.association, config.map, positions);
          for (const FusionEvent& e : events) {
            const auto a = majorityLabel(votes, e.kept);
            const auto b = majorityLabel(votes, e.removed);
            if (a != b) ++report.wrong_fusion_events;
            for (const auto& [label, n] : votes[e.removed]) votes[e.kept][label] += n;
            votes.erase(e.removed);
          }
          fr.fused = static_cast<int>(events.size());
          report.fusion_events += fr.fused;
        }
      }

      estimates.push_back(frame.T_cw);
      prev_gt = i;
      const RigidTransform t_wc = frame.T_cw.inverse();
      out.estimated.push_back({timestamp, t_wc});
      fr.translation_error = (t_wc.translation() - out.ground_truth.back().T_wc.translation()).norm();
      fr.rotation_error_deg = rotationErrorDeg(t_wc, out.ground_truth.back().T_wc);
    } catch (const Error& e) {
      fr.skipped = true;
      fr.error = std::string(toString(e.code())) + ": " + e.what();
      ++report.skipped_frames;
      fr.tp = fr.fp = fr.fn = 0;
    }
    fr.landmarks = map.size();
    report.tp += fr.tp;
    report.fp += fr.fp;
    report.fn += fr.fn;
    report.frames.push_back(std::move(fr));
  }

  report.precision = report.tp + report.fp == 0 ? 1.0 : static_cast<double>(report.tp) / (report.tp + report.fp);
  report.recall = report.tp + report.fn == 0 ? 1.0 : static_cast<double>(report.tp) / (report.tp + report.fn);
  if (out.estimated.size() >= 2) {
    const AteResult ate = evaluateAte(out.estimated, out.ground_truth);
    report.ate_rmse = ate.rmse;
    report.ate_stddev = ate.stddev;
  }
  std::set<int> final_labels;
  for (const PlaneLandmark& lm : map.landmarks()) {
    if (const auto label = majorityLabel(votes, lm.id)) final_labels.insert(*label);
    ++report.landmark_counts[lm.class_id];
    if (const auto it = votes.find(lm.id); it != votes.end() && it->second.size() > 1) ++report.mixed_landmarks;
  }
  report.final_landmarks = map.size();
  report.duplicate_landmarks = static_cast<int>(map.size() - final_labels.size());
  report.true_planes = seen_planes.size();
  out.map = map.exportMap();
  out.association_trace = trace.str();
  return out;
}

std::string reportToJson(const RunReport& r) {
  json frames = json::array();
  for (const FrameReport& f : r.frames) {
    json j{{"frame", f.frame},
           {"timestamp", f.timestamp},
           {"tp", f.tp},
           {"fp", f.fp},
           {"fn", f.fn},
           {"translation_error", f.translation_error},
           {"rotation_error_deg", f.rotation_error_deg},
           {"landmarks", f.landmarks},
           {"fused", f.fused},
           {"skipped", f.skipped}};
    if (f.skipped) j["error"] = f.error;
    frames.push_back(std::move(j));
  }
  json counts = json::object();
  for (const auto& [cls, n] : r.landmark_counts) counts[std::to_string(cls)] = n;
  const json j{{"ate_rmse", r.ate_rmse},
               {"ate_stddev", r.ate_stddev},
               {"precision", r.precision},
               {"recall", r.recall},
               {"tp", r.tp},
               {"fp", r.fp},
               {"fn", r.fn},
               {"fusion_events", r.fusion_events},
               {"wrong_fusion_events", r.wrong_fusion_events},
               {"mixed_landmarks", r.mixed_landmarks},
               {"duplicate_landmarks", r.duplicate_landmarks},
               {"landmark_errors", r.landmarkErrors()},
               {"final_landmarks", r.final_landmarks},
               {"true_planes", r.true_planes},
               {"landmark_counts", counts},
               {"skipped_frames", r.skipped_frames},
               {"frames", frames}};
  return j.dump(1) + "\n";
}

void writeRunArtifacts(const std::string& dir, const RunOutput& output) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create '" + dir + "': " + ec.message());

  writeTumTrajectory((root / "trajectory.txt").string(), output.estimated);
  writeTumTrajectory((root / "groundtruth.txt").string(), output.ground_truth);
  writeMapPly((root / "map.ply").string(), output.map);
  writeMapJson((root / "map.json").string(), output.map);
  writeTextFile((root / "snapshot.json").string(), snapshotToJson(output.map));
  writeTextFile((root / "report.json").string(), reportToJson(output.report));
  json timing = json::object();
  for (const auto& [stage, seconds] : output.timing) timing[stage] = seconds;
  writeTextFile((root / "timing.json").string(), timing.dump(1) + "\n");

  if (!output.association_trace.empty()) {
    writeTextFile((root / "association_trace.txt").string(), output.association_trace);
  }
  auto dump = [&](const std::map<int, std::string>& files, const char* sub, const char* prefix) {
    if (files.empty()) return;
    fs::create_directories(root / sub, ec);
    if (ec) throw Error(ErrorCode::kIoError, "cannot create '" + (root / sub).string() + "': " + ec.message());
    for (const auto& [frame, text] : files) {
      char name[64];
      std::snprintf(name, sizeof name, "%s_%04d.json", prefix, frame);
      writeTextFile((root / sub / name).string(), text);
    }
  };
  dump(output.frame_dumps, "frames", "frame");
  dump(output.map_dumps, "frames", "map");
  dump(output.problem_dumps, "problems", "problem");
}

}  // namespace planeslam
