#pragma once

#include <map>
#include <set>

#include "planeslam/geometry.hpp"
#include "planeslam/plane_processing.hpp"

namespace planeslam {

using LandmarkId = int;
using MapPointId = int;

/// Map plane, world frame.
struct PlaneLandmark {
  LandmarkId id = 0;
  Plane plane;
  PointCloud cloud;
  PointCloud edge_points;
  PlaneStructure structure;
  int class_id = kNoClass;
  // Other landmark id -> number of frames both were seen in.
  std::map<LandmarkId, int> covisible;
  int observations = 0;
  std::set<MapPointId> associated_points;
};

}  // namespace planeslam
