#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "planeslam/association.hpp"
#include "planeslam/frame.hpp"
#include "planeslam/landmark.hpp"
#include "planeslam/plane_processing.hpp"

namespace planeslam {

struct MapConfig {
  double voxel_size = 0.02;
  double edge_voxel_size = 0.005;
  // Occupancy grid used to drop merged edge points that ended up inside the plane.
  double boundary_grid = 0.05;
  int covisible_min = 3;

  void validate() const;
};

struct MapSnapshot {
  LandmarkId next_id = 0;
  std::vector<PlaneLandmark> landmarks;  // sorted by id
};

struct InsertResult {
  // (observation index, landmark id) for every observation that entered the map.
  std::vector<std::pair<std::size_t, LandmarkId>> assignment;
  std::vector<LandmarkId> created;
};

struct FusionEvent {
  LandmarkId kept = 0;
  LandmarkId removed = 0;
};

// Voxel-centroid downsampling, output ordered by voxel index.
PointCloud voxelDownsample(std::span<const Vec3> points, double voxel_size);

class PlaneMap {
 public:
  const std::vector<PlaneLandmark>& landmarks() const { return landmarks_; }
  const PlaneLandmark* find(LandmarkId id) const;
  bool empty() const { return landmarks_.empty(); }
  std::size_t size() const { return landmarks_.size(); }
  LandmarkId nextId() const { return next_id_; }

  // Merges matched observations of `frame` (pose final) into their landmarks
  // and turns unmatched Good observations into new landmarks. Point-plane
  // links of the frame feed the landmarks' associated points.
  InsertResult insertOrUpdate(const Frame& frame, const CameraIntrinsics& k, const MapConfig& cfg,
                              const ProcessingConfig& processing, std::uint64_t seed);

  // Merges covisible duplicates until no pair passes the association rule.
  // `t_cw` and `k` provide the view used for projection boxes; `points` maps
  // point ids to world positions for the rank test.
  std::vector<FusionEvent> fuseLandmarks(const RigidTransform& t_cw, const CameraIntrinsics& k,
                                         const AssociationConfig& assoc, const MapConfig& cfg,
                                         const std::map<MapPointId, Vec3>& points);

  MapSnapshot exportMap() const;
  static PlaneMap importMap(const MapSnapshot& snapshot);

 private:
  PlaneLandmark* findMutable(LandmarkId id);
  void mergeInto(PlaneLandmark& kept, PlaneLandmark& removed, const MapConfig& cfg);

  std::vector<PlaneLandmark> landmarks_;
  LandmarkId next_id_ = 0;
};

}  // namespace planeslam
