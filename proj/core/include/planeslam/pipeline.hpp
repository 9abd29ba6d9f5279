#pragma once

#include <map>
#include <string>
#include <vector>

#include "planeslam/config.hpp"
#include "planeslam/map.hpp"
#include "planeslam/sim.hpp"

namespace planeslam {

struct FrameReport {
  int frame = 0;
  double timestamp = 0.0;
  int tp = 0;
  int fp = 0;
  int fn = 0;
  double translation_error = 0.0;
  double rotation_error_deg = 0.0;
  std::size_t landmarks = 0;
  int fused = 0;
  bool skipped = false;
  std::string error;  // set for skipped frames
};

struct RunReport {
  std::vector<FrameReport> frames;
  double ate_rmse = 0.0;
  double ate_stddev = 0.0;
  int tp = 0;
  int fp = 0;
  int fn = 0;
  double precision = 1.0;  // 1 when there were no matches at all
  double recall = 1.0;
  int fusion_events = 0;
  // Fusions that merged landmarks of different ground-truth planes.
  int wrong_fusion_events = 0;
  // Final landmarks whose supporting observations come from more than one
  // ground-truth plane.
  int mixed_landmarks = 0;
  // Final landmarks beyond one per ground-truth plane (majority label).
  int duplicate_landmarks = 0;
  std::size_t final_landmarks = 0;
  // Distinct ground-truth planes that were observed with Good quality.
  std::size_t true_planes = 0;
  std::map<int, int> landmark_counts;  // final landmarks per class id
  int skipped_frames = 0;

  // Duplicates left in the map plus merges of different planes.
  int landmarkErrors() const { return duplicate_landmarks + wrong_fusion_events; }
};

struct RunOutput {
  RunReport report;
  Trajectory estimated;     // T_wc per processed frame
  Trajectory ground_truth;  // T_wc per rendered frame
  MapSnapshot map;
  // Wall-clock seconds per stage; the only non-deterministic output.
  std::map<std::string, double> timing;

  // Filled according to OutputConfig.
  std::string association_trace;
  std::map<int, std::string> frame_dumps;    // FrameRecord JSON
  std::map<int, std::string> map_dumps;      // snapshot JSON before association
  std::map<int, std::string> problem_dumps;  // pose problem JSON
};

// Associates the Good observations of `frame` (skipping those flagged in
// `withhold`) at frame.T_cw. Indices in the result refer to
// frame.observations. `positions` gives world positions of map points.
AssociationResult associateFrame(const Frame& frame, std::span<const PlaneLandmark> map,
                                 const std::map<MapPointId, Vec3>& positions, const CameraIntrinsics& k,
                                 const AssociationConfig& cfg, const std::vector<bool>& withhold = {});

RunOutput runPipeline(const PipelineConfig& config);

std::string reportToJson(const RunReport& report);

// trajectory.txt, groundtruth.txt, map.ply, map.json, snapshot.json,
// report.json and timing.json, plus the enabled dumps. Creates `dir`.
void writeRunArtifacts(const std::string& dir, const RunOutput& output);

}  // namespace planeslam
