#include "planeslam/map.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <tuple>

namespace planeslam {
namespace {

PointCloud transformCloud(std::span<const Vec3> points, const RigidTransform& t) {
  PointCloud out;
  out.reserve(points.size());
  for (const Vec3& p : points) out.push_back(t * p);
  return out;
}

PlaneStructure transformStructure(const PlaneStructure& s, const RigidTransform& t) {
  PlaneStructure out;
  for (const Line3D& l : s.edge_lines) out.edge_lines.emplace_back(t * l.point(), t.rotation() * l.direction());
  out.vertices = transformCloud(s.vertices, t);
  return out;
}

Plane refitOrKeep(std::span<const Vec3> cloud, const Plane& fallback) {
  try {
    return fitPlaneLeastSquares(cloud);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kDegenerateCloud) throw;
    return fallback;
  }
}

PointCloud concat(std::span<const Vec3> a, std::span<const Vec3> b) {
  PointCloud out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace

void MapConfig::validate() const {
  if (!(voxel_size > 0.0) || !(edge_voxel_size > 0.0) || !(boundary_grid > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "map voxel and grid sizes must be positive");
  }
  if (covisible_min < 1) throw Error(ErrorCode::kInvalidArgument, "covisible_min must be at least 1");
}

PointCloud voxelDownsample(std::span<const Vec3> points, double voxel_size) {
  using Key = std::array<long long, 3>;
  std::map<Key, std::pair<Vec3, int>> voxels;
  for (const Vec3& p : points) {
    const Key key{static_cast<long long>(std::floor(p.x() / voxel_size)),
                  static_cast<long long>(std::floor(p.y() / voxel_size)),
                  static_cast<long long>(std::floor(p.z() / voxel_size))};
    auto [it, inserted] = voxels.try_emplace(key, Vec3::Zero(), 0);
    it->second.first += p;
    ++it->second.second;
  }
  PointCloud out;
  out.reserve(voxels.size());
  for (const auto& [key, acc] : voxels) out.push_back(acc.first / acc.second);
  return out;
}

const PlaneLandmark* PlaneMap::find(LandmarkId id) const {
  const auto it = std::lower_bound(landmarks_.begin(), landmarks_.end(), id,
                                   [](const PlaneLandmark& lm, LandmarkId v) { return lm.id < v; });
  return it != landmarks_.end() && it->id == id ? &*it : nullptr;
}

PlaneLandmark* PlaneMap::findMutable(LandmarkId id) { return const_cast<PlaneLandmark*>(find(id)); }

InsertResult PlaneMap::insertOrUpdate(const Frame& frame, const CameraIntrinsics& k, const MapConfig& cfg,
                                      const ProcessingConfig& processing, std::uint64_t seed) {
  const RigidTransform t_wc = frame.T_cw.inverse();
  InsertResult result;

  for (std::size_t i = 0; i < frame.observations.size(); ++i) {
    const PlaneObservation& obs = frame.observations[i];
    const PointCloud cloud_w = transformCloud(obs.cloud, t_wc);
    const PointCloud edges_w = transformCloud(obs.edge_points, t_wc);

    if (const auto id = frame.matches.landmarkFor(i)) {
      PlaneLandmark* lm = findMutable(*id);
      if (!lm) continue;
      lm->cloud = voxelDownsample(concat(lm->cloud, cloud_w), cfg.voxel_size);
      lm->plane = refitOrKeep(lm->cloud, lm->plane);
      lm->edge_points = keepBoundaryPoints(voxelDownsample(concat(lm->edge_points, edges_w), cfg.edge_voxel_size),
                                           lm->cloud, lm->plane, cfg.boundary_grid);
      ++lm->observations;
      if (lm->class_id == kNoClass && obs.class_id != kNoClass) lm->class_id = obs.class_id;

      if (lm->class_id != kNoClass && obs.det_box) {
        try {
          const std::vector<Line3D> lines =
              extractEdgeLines(lm->edge_points, lm->plane, processing.line_distance, processing.line_min_inliers,
                               processing.max_lines, mixSeed(seed, frame.id, lm->id));
          const std::array<Vec3, 4> v = extractVertices(lines, lm->plane, *obs.det_box, frame.T_cw, k, processing.vertex);
          lm->structure.edge_lines = lines;
          lm->structure.vertices.assign(v.begin(), v.end());
        } catch (const Error&) {
          // Merged edges did not give a valid rectangle; fall back to this view.
          if (obs.structure.hasVertices()) lm->structure = transformStructure(obs.structure, t_wc);
        }
      }
      result.assignment.emplace_back(i, lm->id);
      continue;
    }

    if (obs.quality != PlaneQuality::kGood) continue;
    PlaneLandmark lm;
    lm.id = next_id_++;
    lm.cloud = voxelDownsample(cloud_w, cfg.voxel_size);
    lm.plane = refitOrKeep(lm.cloud, transformPlane(obs.plane, t_wc));
    lm.edge_points = voxelDownsample(edges_w, cfg.edge_voxel_size);
    lm.structure = transformStructure(obs.structure, t_wc);
    lm.class_id = obs.class_id;
    lm.observations = 1;
    landmarks_.push_back(std::move(lm));
    result.assignment.emplace_back(i, landmarks_.back().id);
    result.created.push_back(landmarks_.back().id);
  }

  for (const PointPlaneLink& link : frame.point_plane) {
    if (link.point >= frame.point_observations.size()) continue;
    for (const auto& [obs, id] : result.assignment) {
      if (obs == link.obs) findMutable(id)->associated_points.insert(frame.point_observations[link.point].id);
    }
  }

  // Seen: observed in this frame, or projecting into the image. Duplicates of
  // one plane are never observed together, only in view together.
  std::vector<LandmarkId> seen;
  for (const auto& [obs, id] : result.assignment) seen.push_back(id);
  for (const PlaneLandmark& lm : landmarks_) {
    try {
      const PixelBox box = projectLandmarkBox(lm, frame.T_cw, k);
      if (box.width() > 0.0 && box.height() > 0.0) seen.push_back(lm.id);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNotVisible) throw;
    }
  }
  std::sort(seen.begin(), seen.end());
  seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
  for (LandmarkId a : seen) {
    PlaneLandmark* lm = findMutable(a);
    for (LandmarkId b : seen) {
      if (a != b) ++lm->covisible[b];
    }
  }
  return result;
}

void PlaneMap::mergeInto(PlaneLandmark& kept, PlaneLandmark& removed, const MapConfig& cfg) {
  kept.cloud = voxelDownsample(concat(kept.cloud, removed.cloud), cfg.voxel_size);
  kept.plane = refitOrKeep(kept.cloud, kept.plane);
  kept.edge_points = keepBoundaryPoints(
      voxelDownsample(concat(kept.edge_points, removed.edge_points), cfg.edge_voxel_size), kept.cloud, kept.plane,
      cfg.boundary_grid);
  kept.associated_points.insert(removed.associated_points.begin(), removed.associated_points.end());
  kept.observations += removed.observations;
  if (kept.class_id == kNoClass) kept.class_id = removed.class_id;
  if (!kept.structure.hasVertices() && removed.structure.hasVertices()) kept.structure = removed.structure;

  for (const auto& [other, count] : removed.covisible) {
    if (other == kept.id) continue;
    int& slot = kept.covisible[other];
    slot = std::max(slot, count);
  }
  kept.covisible.erase(removed.id);

  for (PlaneLandmark& lm : landmarks_) {
    if (lm.id == kept.id || lm.id == removed.id) continue;
    const auto it = lm.covisible.find(removed.id);
    if (it == lm.covisible.end()) continue;
    const int count = it->second;
    lm.covisible.erase(it);
    int& slot = lm.covisible[kept.id];
    slot = std::max(slot, count);
  }
  // Keep the relation symmetric.
  for (const auto& [other, count] : kept.covisible) {
    if (PlaneLandmark* lm = findMutable(other)) lm->covisible[kept.id] = count;
  }
}

std::vector<FusionEvent> PlaneMap::fuseLandmarks(const RigidTransform& t_cw, const CameraIntrinsics& k,
                                                 const AssociationConfig& assoc, const MapConfig& cfg,
                                                 const std::map<MapPointId, Vec3>& points) {
  std::vector<FusionEvent> events;
  auto positions = [&](const PlaneLandmark& lm) {
    PointCloud out;
    for (MapPointId id : lm.associated_points) {
      const auto it = points.find(id);
      if (it != points.end()) out.push_back(it->second);
    }
    return out;
  };
  auto box = [&](const PlaneLandmark& lm) -> std::optional<PixelBox> {
    try {
      return projectLandmarkBox(lm, t_cw, k);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNotVisible) throw;
      return std::nullopt;
    }
  };

  bool merged = true;
  while (merged) {
    merged = false;
    for (std::size_t a = 0; a < landmarks_.size() && !merged; ++a) {
      for (std::size_t b = a + 1; b < landmarks_.size() && !merged; ++b) {
        PlaneLandmark& older = landmarks_[a];
        PlaneLandmark& younger = landmarks_[b];
        const auto cov = older.covisible.find(younger.id);
        if (cov == older.covisible.end() || cov->second < cfg.covisible_min) continue;

        const PointCloud pts_young = positions(younger);
        const PointCloud pts_old = positions(older);
        PlaneCandidate young;
        young.plane = &younger.plane;
        young.edge_points = younger.edge_points;
        young.class_id = younger.class_id;
        young.detection_box = box(younger);
        young.projection_box = young.detection_box;
        young.points = pts_young;
        PlaneCandidate old;
        old.plane = &older.plane;
        old.edge_points = older.edge_points;
        old.class_id = older.class_id;
        old.projection_box = box(older);
        old.points = pts_old;

        const GateTrace trace = evaluatePlanePair(young, old, RigidTransform(), assoc);
        if (!trace.candidate) continue;
        events.push_back({older.id, younger.id});
        mergeInto(older, younger, cfg);
        landmarks_.erase(landmarks_.begin() + static_cast<std::ptrdiff_t>(b));
        merged = true;
      }
    }
  }
  return events;
}

MapSnapshot PlaneMap::exportMap() const { return {next_id_, landmarks_}; }

PlaneMap PlaneMap::importMap(const MapSnapshot& snapshot) {
  PlaneMap map;
  map.landmarks_ = snapshot.landmarks;
  std::sort(map.landmarks_.begin(), map.landmarks_.end(),
            [](const PlaneLandmark& a, const PlaneLandmark& b) { return a.id < b.id; });
  map.next_id_ = snapshot.next_id;
  for (const PlaneLandmark& lm : map.landmarks_) map.next_id_ = std::max(map.next_id_, lm.id + 1);
  return map;
}

}  // namespace planeslam
