#pragma once

#include <iosfwd>
#include <map>
#include <string>

#include "planeslam/factor_graph.hpp"
#include "planeslam/frame.hpp"
#include "planeslam/map.hpp"
#include "planeslam/sim.hpp"

namespace planeslam {

// TUM trajectory text: "timestamp tx ty tz qx qy qz qw" per line, '#' comments.
// Poses are T_wc. Throws ParseError naming line and column.
Trajectory parseTumTrajectory(std::istream& in);
Trajectory readTumTrajectory(const std::string& path);
void writeTumTrajectory(std::ostream& out, const Trajectory& trajectory);
void writeTumTrajectory(const std::string& path, const Trajectory& trajectory);

// ASCII PLY with one coloured vertex per landmark cloud point.
void writeMapPly(std::ostream& out, const MapSnapshot& snapshot);
void writeMapPly(const std::string& path, const MapSnapshot& snapshot);

// Summary JSON: {id, n, d, class_id, vertices, num_points} per landmark.
std::string mapSummaryJson(const MapSnapshot& snapshot);
void writeMapJson(const std::string& path, const MapSnapshot& snapshot);

// Full snapshot, lossless: export -> import -> export is byte-identical.
std::string snapshotToJson(const MapSnapshot& snapshot);
MapSnapshot snapshotFromJson(const std::string& text);

// Pose problem together with the intrinsics it was built for.
std::string problemToJson(const PoseProblem& problem, const CameraIntrinsics& k);
PoseProblem problemFromJson(const std::string& text, CameraIntrinsics* k = nullptr);

// Single-frame input for offline association. `map_points` carries world
// positions of map points referenced by landmarks.
struct FrameRecord {
  Frame frame;
  CameraIntrinsics intrinsics;
  std::map<MapPointId, Vec3> map_points;
};

std::string frameToJson(const FrameRecord& record);
FrameRecord frameFromJson(const std::string& text);

std::string readTextFile(const std::string& path);
void writeTextFile(const std::string& path, const std::string& text);

}  // namespace planeslam
