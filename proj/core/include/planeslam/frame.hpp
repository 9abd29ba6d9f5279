#pragma once

#include <utility>
#include <vector>

#include "planeslam/association.hpp"
#include "planeslam/geometry.hpp"
#include "planeslam/landmark.hpp"
#include "planeslam/plane_processing.hpp"

namespace planeslam {

// A tracked map point: its id, measured pixel and current world position.
struct PointObservation {
  MapPointId id = 0;
  Vec2 pixel = Vec2::Zero();
  Vec3 p_w = Vec3::Zero();
};

// Map point `point` (index into point_observations) lies on observation `obs`.
struct PointPlaneLink {
  std::size_t obs = 0;
  std::size_t point = 0;
};

struct Frame {
  int id = 0;
  double timestamp = 0.0;
  RigidTransform T_cw;
  std::vector<PlaneObservation> observations;
  std::vector<DetectionBox> boxes;
  std::vector<PointObservation> point_observations;
  std::vector<PointPlaneLink> point_plane;
  AssociationResult matches;
};

}  // namespace planeslam
