#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "planeslam/geometry.hpp"

namespace planeslam {

inline constexpr int kNoClass = -1;

enum class PlaneQuality { kGood, kBad };

struct DetectionBox {
  PixelBox box;
  int class_id = 0;
  double score = 1.0;
};

struct PlaneStructure {
  std::vector<Line3D> edge_lines;
  // Either empty or exactly four corners, counterclockwise about the plane normal.
  std::vector<Vec3> vertices;

  bool hasVertices() const { return vertices.size() == 4; }
};

/// One plane segmented from a single frame, expressed in the camera frame.
struct PlaneObservation {
  Plane plane;
  PointCloud cloud;
  PointCloud edge_points;
  int class_id = kNoClass;
  std::optional<PixelBox> det_box;
  double inlier_ratio = 1.0;
  PlaneQuality quality = PlaneQuality::kGood;
  PlaneStructure structure;
};

struct RefitResult {
  Plane plane;
  double inlier_ratio = 0.0;
  PointCloud inliers;
};

// Least-squares plane through the centroid along the smallest scatter
// eigenvector. Throws DegenerateCloud for fewer than 3 or collinear points.
Plane fitPlaneLeastSquares(std::span<const Vec3> points);

// Consensus plane from random 3-point hypotheses, refined by least squares on
// the best inlier set. Deterministic for a fixed seed.
RefitResult refitPlane(std::span<const Vec3> cloud, double distance_threshold, int iterations,
                       std::uint64_t seed);

// Boundary cells of a 2D occupancy grid laid over the cloud's best-fit plane.
// Returns one input point per boundary cell, in input order.
PointCloud extractEdgePoints(std::span<const Vec3> cloud, double grid_resolution);

// Points of `points` that do not fall in an interior cell of the occupancy
// grid of `cloud`, laid out in the basis of `plane`. A cell is interior when it
// and its eight neighbours are all occupied.
PointCloud keepBoundaryPoints(std::span<const Vec3> points, std::span<const Vec3> cloud, const Plane& plane,
                              double grid_resolution);

// Class id of the detection box that best overlaps the projected edge points,
// or kNoClass. `pose` maps the observation's points into the camera frame.
int associatePlaneWithBox(const PlaneObservation& obs, std::span<const DetectionBox> boxes,
                          const RigidTransform& pose, const CameraIntrinsics& k, double iou_min,
                          double inbox_fraction_min);

// Sequential consensus line fitting on plane edge points. Directions and
// anchor points are projected onto `plane`. Throws NoLinesFound.
std::vector<Line3D> extractEdgeLines(std::span<const Vec3> edge_points, const Plane& plane,
                                     double distance_threshold, int min_inliers, int max_lines,
                                     std::uint64_t seed);

struct PerpendicularFeet {
  Vec3 on_first;   // foot on Li
  Vec3 on_second;  // foot on Lj
  double gap() const { return (on_first - on_second).norm(); }
};

inline constexpr double kDefaultParallelDotMax = 0.999;
inline constexpr double kDefaultParallelDotMin = 0.985;

// Feet of the common perpendicular of two non-parallel lines. Throws
// ParallelLines when |Vi.Vj| >= parallel_dot_max.
PerpendicularFeet commonPerpendicular(const Line3D& li, const Line3D& lj,
                                      double parallel_dot_max = kDefaultParallelDotMax);

struct VertexConfig {
  double parallel_dot_min = kDefaultParallelDotMin;
  double parallel_dot_max = kDefaultParallelDotMax;
  double foot_gap_max = 0.03;
  double vertex_plane_distance_max = 0.05;
  // Slack for condition (3): corners of a tight detection box project onto its border.
  double box_margin_px = 5.0;
};

enum class VertexFailure { kNoParallelPairs, kFootGap, kPlaneDistance, kOutsideBox };

const char* toString(VertexFailure failure);

class VertexExtractionError : public Error {
 public:
  VertexExtractionError(VertexFailure failure, const std::string& detail);
  VertexFailure failure() const noexcept { return failure_; }

 private:
  VertexFailure failure_;
};

// Four corners from two parallel line pairs. `pose` maps line coordinates
// into the camera frame for the detection-box check.
std::array<Vec3, 4> extractVertices(std::span<const Line3D> lines, const Plane& plane,
                                    const PixelBox& det_box, const RigidTransform& pose,
                                    const CameraIntrinsics& k, const VertexConfig& cfg);

// Sorts four points counterclockwise about `normal`, starting from the
// smallest azimuth in planeBasis(normal).
std::array<Vec3, 4> orderCounterclockwise(const std::array<Vec3, 4>& points, const Vec3& normal);

bool hasParallelPair(std::span<const Line3D> lines, double parallel_dot_min);

struct SelectionConfig {
  double far_depth_max = 5.0;
  double inlier_ratio_min = 0.8;
  double edge_margin_px = 20.0;
  double unstructured_fraction_max = 0.5;
  double parallel_dot_min = kDefaultParallelDotMin;
};

// Per-observation quality; observations are camera-frame.
PlaneQuality classifyPlane(const PlaneObservation& obs, std::span<const DetectionBox> boxes,
                           const CameraIntrinsics& k, const SelectionConfig& cfg,
                           const std::set<int>& unstructured_classes);

std::vector<PlaneObservation> selectPlanes(std::vector<PlaneObservation> observations,
                                           std::span<const DetectionBox> boxes,
                                           const CameraIntrinsics& k, const SelectionConfig& cfg,
                                           const std::set<int>& unstructured_classes);

struct ProcessingConfig {
  double refit_distance = 0.01;
  int refit_iterations = 200;
  double edge_grid = 0.05;
  double iou_min = 0.3;
  double inbox_fraction_min = 0.6;
  double line_distance = 0.02;
  int line_min_inliers = 20;
  int max_lines = 8;
  VertexConfig vertex;
  SelectionConfig selection;
};

// Edge-point filtering, box association, edge lines and vertices for one
// camera-frame observation. Structure is only extracted for classed planes.
void processObservation(PlaneObservation& obs, std::span<const DetectionBox> boxes,
                        const CameraIntrinsics& k, const ProcessingConfig& cfg, std::uint64_t seed);

}  // namespace planeslam
