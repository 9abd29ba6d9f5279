#include "planeslam/plane_processing.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <utility>

namespace planeslam {
namespace {

// Hypotheses drawn per line in extractEdgeLines.
constexpr int kLineHypotheses = 300;

struct Scatter {
  Vec3 mean;
  Eigen::Vector3d eigenvalues;   // ascending
  Eigen::Matrix3d eigenvectors;  // columns match eigenvalues
};

Scatter scatterOf(std::span<const Vec3> points) {
  Scatter s;
  s.mean = centroid(points);
  Mat3 cov = Mat3::Zero();
  for (const Vec3& p : points) {
    const Vec3 d = p - s.mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> solver(cov);
  s.eigenvalues = solver.eigenvalues();
  s.eigenvectors = solver.eigenvectors();
  return s;
}

bool collinear(const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const double scale = ab.norm() * ac.norm();
  if (!(scale > 0.0)) return true;
  return ab.cross(ac).norm() <= 1e-9 * scale;
}

std::vector<Vec2> projectAll(std::span<const Vec3> points, const RigidTransform& pose,
                             const CameraIntrinsics& k) {
  std::vector<Vec2> out;
  out.reserve(points.size());
  for (const Vec3& p : points) {
    const Vec3 pc = pose * p;
    if (pc.z() > 1e-6) out.push_back(projectPoint(pc, k));
  }
  return out;
}

std::optional<Line3D> lineThrough(std::span<const Vec3> points) {
  if (points.size() < 2) return std::nullopt;
  const Scatter s = scatterOf(points);
  if (!(s.eigenvalues[2] > 0.0)) return std::nullopt;
  return Line3D(s.mean, s.eigenvectors.col(2));
}

}  // namespace

Plane fitPlaneLeastSquares(std::span<const Vec3> points) {
  if (points.size() < 3) {
    throw Error(ErrorCode::kDegenerateCloud, "need at least 3 points, got " + std::to_string(points.size()));
  }
  const Scatter s = scatterOf(points);
  // sqrt(l2 / l3) is the aspect ratio of the cross-section; below 1e-9 the
  // points lie on a line.
  if (!(s.eigenvalues[2] > 0.0) || s.eigenvalues[1] <= 1e-18 * s.eigenvalues[2]) {
    throw Error(ErrorCode::kDegenerateCloud, "points are collinear");
  }
  const Vec3 n = s.eigenvectors.col(0);
  return Plane::fromCoefficients(Vec4(n.x(), n.y(), n.z(), -n.dot(s.mean)));
}

RefitResult refitPlane(std::span<const Vec3> cloud, double distance_threshold, int iterations,
                       std::uint64_t seed) {
  const std::size_t n = cloud.size();
  if (n < 3) throw Error(ErrorCode::kDegenerateCloud, "need at least 3 points");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);

  std::optional<Plane> best;
  std::size_t best_count = 0;
  for (int it = 0; it < iterations; ++it) {
    const std::size_t i = pick(rng);
    std::size_t j = pick(rng);
    std::size_t l = pick(rng);
    if (i == j || i == l || j == l) continue;
    const Vec3& a = cloud[i];
    const Vec3& b = cloud[j];
    const Vec3& c = cloud[l];
    if (collinear(a, b, c)) continue;
    const Vec3 normal = (b - a).cross(c - a);
    const Plane hypothesis = Plane::fromCoefficients(Vec4(normal.x(), normal.y(), normal.z(), -normal.dot(a)));
    std::size_t count = 0;
    for (const Vec3& p : cloud) {
      if (std::abs(hypothesis.signedDistance(p)) <= distance_threshold) ++count;
    }
    if (count > best_count) {
      best_count = count;
      best = hypothesis;
    }
  }
  if (!best || best_count < 3) {
    throw Error(ErrorCode::kDegenerateCloud, "no plane hypothesis with 3 inliers");
  }

  auto inliersOf = [&](const Plane& plane) {
    PointCloud in;
    for (const Vec3& p : cloud) {
      if (std::abs(plane.signedDistance(p)) <= distance_threshold) in.push_back(p);
    }
    return in;
  };

  PointCloud inliers = inliersOf(*best);
  Plane plane = fitPlaneLeastSquares(inliers);
  PointCloud refined = inliersOf(plane);
  if (refined.size() >= inliers.size() && refined.size() >= 3) {
    inliers = std::move(refined);
    plane = fitPlaneLeastSquares(inliers);
  }

  RefitResult result;
  result.plane = plane;
  result.inlier_ratio = static_cast<double>(inliers.size()) / static_cast<double>(n);
  result.inliers = std::move(inliers);
  return result;
}

PointCloud extractEdgePoints(std::span<const Vec3> cloud, double grid_resolution) {
  if (cloud.size() <= 1) return PointCloud(cloud.begin(), cloud.end());
  if (!(grid_resolution > 0.0)) throw Error(ErrorCode::kInvalidArgument, "grid resolution must be positive");

  const Scatter s = scatterOf(cloud);
  Vec3 normal = s.eigenvectors.col(0);
  normal = Plane::fromCoefficients(Vec4(normal.x(), normal.y(), normal.z(), -normal.dot(s.mean))).normal();
  const auto [u, v] = planeBasis(normal);

  using Cell = std::pair<long long, long long>;
  std::map<Cell, std::size_t> first_in_cell;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 d = cloud[i] - s.mean;
    const Cell cell{static_cast<long long>(std::floor(d.dot(u) / grid_resolution)),
                    static_cast<long long>(std::floor(d.dot(v) / grid_resolution))};
    first_in_cell.try_emplace(cell, i);
  }

  std::vector<std::size_t> boundary;
  for (const auto& [cell, index] : first_in_cell) {
    int neighbours = 0;
    for (long long di = -1; di <= 1; ++di) {
      for (long long dj = -1; dj <= 1; ++dj) {
        if (di == 0 && dj == 0) continue;
        if (first_in_cell.contains({cell.first + di, cell.second + dj})) ++neighbours;
      }
    }
    if (neighbours < 8) boundary.push_back(index);
  }
  std::sort(boundary.begin(), boundary.end());

  PointCloud out;
  out.reserve(boundary.size());
  for (std::size_t i : boundary) out.push_back(cloud[i]);
  return out;
}

PointCloud keepBoundaryPoints(std::span<const Vec3> points, std::span<const Vec3> cloud, const Plane& plane,
                              double grid_resolution) {
  if (!(grid_resolution > 0.0)) throw Error(ErrorCode::kInvalidArgument, "grid resolution must be positive");
  const auto [u, v] = planeBasis(plane.normal());
  const Vec3 origin = -plane.offset() * plane.normal();
  using Cell = std::pair<long long, long long>;
  auto cellOf = [&](const Vec3& p) {
    const Vec3 d = p - origin;
    return Cell{static_cast<long long>(std::floor(d.dot(u) / grid_resolution)),
                static_cast<long long>(std::floor(d.dot(v) / grid_resolution))};
  };
  std::set<Cell> occupied;
  for (const Vec3& p : cloud) occupied.insert(cellOf(p));

  PointCloud out;
  for (const Vec3& p : points) {
    const Cell c = cellOf(p);
    bool interior = true;
    for (long long di = -1; di <= 1 && interior; ++di) {
      for (long long dj = -1; dj <= 1 && interior; ++dj) {
        interior = occupied.contains({c.first + di, c.second + dj});
      }
    }
    if (!interior) out.push_back(p);
  }
  return out;
}

namespace {

std::optional<std::size_t> bestBoxIndex(const PlaneObservation& obs, std::span<const DetectionBox> boxes,
                                        const RigidTransform& pose, const CameraIntrinsics& k, double iou_min,
                                        double inbox_fraction_min) {
  if (boxes.empty() || obs.edge_points.empty()) return std::nullopt;
  const std::vector<Vec2> pixels = projectAll(obs.edge_points, pose, k);
  if (pixels.empty()) return std::nullopt;
  const PixelBox projected = PixelBox::fromPoints(pixels);

  std::optional<std::size_t> best;
  double best_iou = -1.0;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const DetectionBox& det = boxes[i];
    const double iou = boxIou(projected, det.box);
    if (iou < iou_min) continue;
    const auto inside = std::count_if(pixels.begin(), pixels.end(),
                                      [&](const Vec2& uv) { return det.box.contains(uv); });
    const double fraction = static_cast<double>(inside) / static_cast<double>(pixels.size());
    if (fraction < inbox_fraction_min) continue;
    if (iou > best_iou) {
      best_iou = iou;
      best = i;
    }
  }
  return best;
}

}  // namespace

int associatePlaneWithBox(const PlaneObservation& obs, std::span<const DetectionBox> boxes,
                          const RigidTransform& pose, const CameraIntrinsics& k, double iou_min,
                          double inbox_fraction_min) {
  const auto best = bestBoxIndex(obs, boxes, pose, k, iou_min, inbox_fraction_min);
  return best ? boxes[*best].class_id : kNoClass;
}

std::vector<Line3D> extractEdgeLines(std::span<const Vec3> edge_points, const Plane& plane,
                                     double distance_threshold, int min_inliers, int max_lines,
                                     std::uint64_t seed) {
  if (min_inliers < 2) throw Error(ErrorCode::kInvalidArgument, "min_inliers must be at least 2");
  if (edge_points.size() < 2 * static_cast<std::size_t>(min_inliers)) {
    throw Error(ErrorCode::kNoLinesFound, "fewer than 2*min_inliers edge points");
  }

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> remaining(edge_points.size());
  std::iota(remaining.begin(), remaining.end(), std::size_t{0});
  const Vec3& n = plane.normal();

  auto inliersOf = [&](const Line3D& line) {
    std::vector<std::size_t> in;
    for (std::size_t idx : remaining) {
      if (line.distance(edge_points[idx]) <= distance_threshold) in.push_back(idx);
    }
    return in;
  };
  auto gather = [&](const std::vector<std::size_t>& idx) {
    PointCloud pts;
    pts.reserve(idx.size());
    for (std::size_t i : idx) pts.push_back(edge_points[i]);
    return pts;
  };

  std::vector<Line3D> lines;
  while (static_cast<int>(lines.size()) < max_lines &&
         remaining.size() >= static_cast<std::size_t>(min_inliers)) {
    std::uniform_int_distribution<std::size_t> pick(0, remaining.size() - 1);
    std::optional<Line3D> best;
    std::size_t best_count = 0;
    for (int h = 0; h < kLineHypotheses; ++h) {
      const Vec3& a = edge_points[remaining[pick(rng)]];
      const Vec3& b = edge_points[remaining[pick(rng)]];
      const Vec3 dir = b - a;
      if (!(dir.norm() > 1e-9)) continue;
      const Line3D hypothesis(a, dir);
      std::size_t count = 0;
      for (std::size_t idx : remaining) {
        if (hypothesis.distance(edge_points[idx]) <= distance_threshold) ++count;
      }
      if (count > best_count) {
        best_count = count;
        best = hypothesis;
      }
    }
    if (!best || best_count < static_cast<std::size_t>(min_inliers)) break;

    std::vector<std::size_t> inliers = inliersOf(*best);
    Line3D line = *best;
    for (int refine = 0; refine < 2; ++refine) {
      const auto fitted = lineThrough(gather(inliers));
      if (!fitted) break;
      line = *fitted;
      std::vector<std::size_t> next = inliersOf(line);
      if (next.size() < static_cast<std::size_t>(min_inliers)) break;
      inliers = std::move(next);
    }
    // Points of a neighbouring edge near a corner sit inside the band and tilt
    // the fit. Start from the least-median line through pairs of the support,
    // then refit on its robust core.
    auto medianDistance = [&](const Line3D& l) {
      std::vector<double> d;
      d.reserve(inliers.size());
      for (std::size_t idx : inliers) d.push_back(l.distance(edge_points[idx]));
      std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
      return d[d.size() / 2];
    };
    double best_median = medianDistance(line);
    std::uniform_int_distribution<std::size_t> pick_inlier(0, inliers.size() - 1);
    for (int h = 0; h < kLineHypotheses; ++h) {
      const Vec3& a = edge_points[inliers[pick_inlier(rng)]];
      const Vec3& b = edge_points[inliers[pick_inlier(rng)]];
      if (!((b - a).norm() > 1e-9)) continue;
      const Line3D hypothesis(a, b - a);
      const double median = medianDistance(hypothesis);
      if (median < best_median) {
        best_median = median;
        line = hypothesis;
      }
    }
    std::vector<std::size_t> core;
    for (int trim = 0; trim < 5; ++trim) {
      std::vector<double> dist;
      dist.reserve(inliers.size());
      for (std::size_t idx : inliers) dist.push_back(line.distance(edge_points[idx]));
      std::vector<double> sorted = dist;
      std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
      const double band = std::max(3.0 * 1.4826 * sorted[sorted.size() / 2], 1e-9);
      std::vector<std::size_t> next;
      for (std::size_t i = 0; i < inliers.size(); ++i) {
        if (dist[i] <= band) next.push_back(inliers[i]);
      }
      if (next.size() < 2 || next == core) break;
      const auto fitted = lineThrough(gather(next));
      if (!fitted) break;
      line = *fitted;
      core = std::move(next);
    }

    Vec3 dir = line.direction() - line.direction().dot(n) * n;
    if (!(dir.norm() > 1e-6)) {
      // Line along the normal cannot be a plane edge; drop its support.
    } else {
      const Vec3 anchor = line.point() - plane.signedDistance(line.point()) * n;
      lines.emplace_back(anchor, dir);
    }
    std::vector<std::size_t> kept;
    kept.reserve(remaining.size());
    std::set_difference(remaining.begin(), remaining.end(), inliers.begin(), inliers.end(),
                        std::back_inserter(kept));
    remaining = std::move(kept);
  }

  if (lines.empty()) throw Error(ErrorCode::kNoLinesFound, "no line reached min_inliers");
  return lines;
}

PerpendicularFeet commonPerpendicular(const Line3D& li, const Line3D& lj, double parallel_dot_max) {
  const Vec3& pi = li.point();
  const Vec3& vi = li.direction();
  const Vec3& pj = lj.point();
  const Vec3& vj = lj.direction();
  const double c = vi.dot(vj);
  if (!(std::abs(c) < parallel_dot_max)) {
    throw Error(ErrorCode::kParallelLines, "|Vi.Vj| = " + std::to_string(std::abs(c)));
  }
  const Vec3 numerator_vec = pi - pj + ((pj - pi).dot(vi)) * vi;
  const double kj = numerator_vec.dot(vj) / (vj.dot(vj) - c * c);
  const Vec3 foot_j = pj + kj * vj;
  const Vec3 foot_i = pi + ((foot_j - pi).dot(vi)) * vi;
  return {foot_i, foot_j};
}

const char* toString(VertexFailure failure) {
  switch (failure) {
    case VertexFailure::kNoParallelPairs: return "no two parallel line pairs";
    case VertexFailure::kFootGap: return "condition 1: perpendicular feet too far apart";
    case VertexFailure::kPlaneDistance: return "condition 2: feet too far from plane";
    case VertexFailure::kOutsideBox: return "condition 3: feet project outside detection box";
  }
  return "unknown";
}

VertexExtractionError::VertexExtractionError(VertexFailure failure, const std::string& detail)
    : Error(ErrorCode::kVertexExtractionFailed, std::string(toString(failure)) + (detail.empty() ? "" : ": " + detail)),
      failure_(failure) {}

bool hasParallelPair(std::span<const Line3D> lines, double parallel_dot_min) {
  for (std::size_t i = 0; i < lines.size(); ++i) {
    for (std::size_t j = i + 1; j < lines.size(); ++j) {
      if (std::abs(lines[i].direction().dot(lines[j].direction())) >= parallel_dot_min) return true;
    }
  }
  return false;
}

std::array<Vec3, 4> orderCounterclockwise(const std::array<Vec3, 4>& points, const Vec3& normal) {
  const auto [u, v] = planeBasis(normal);
  const Vec3 c = centroid(points);
  std::array<std::pair<double, std::size_t>, 4> keyed;
  for (std::size_t i = 0; i < 4; ++i) {
    const Vec3 d = points[i] - c;
    keyed[i] = {std::atan2(d.dot(v), d.dot(u)), i};
  }
  std::sort(keyed.begin(), keyed.end());
  std::array<Vec3, 4> out;
  for (std::size_t i = 0; i < 4; ++i) out[i] = points[keyed[i].second];
  return out;
}

std::array<Vec3, 4> extractVertices(std::span<const Line3D> lines, const Plane& plane,
                                    const PixelBox& det_box, const RigidTransform& pose,
                                    const CameraIntrinsics& k, const VertexConfig& cfg) {
  // Parallel pairs must be separated, otherwise they are two fits of one side.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    for (std::size_t j = i + 1; j < lines.size(); ++j) {
      const double dot = std::abs(lines[i].direction().dot(lines[j].direction()));
      if (dot >= cfg.parallel_dot_min && lines[i].distance(lines[j].point()) > cfg.foot_gap_max) {
        pairs.emplace_back(i, j);
      }
    }
  }

  std::optional<std::pair<std::size_t, std::size_t>> chosen;
  double best_dot = 2.0;
  for (std::size_t a = 0; a < pairs.size(); ++a) {
    for (std::size_t b = a + 1; b < pairs.size(); ++b) {
      const auto& p = pairs[a];
      const auto& q = pairs[b];
      if (p.first == q.first || p.first == q.second || p.second == q.first || p.second == q.second) continue;
      const double dot = std::abs(lines[p.first].direction().dot(lines[q.first].direction()));
      if (dot >= cfg.parallel_dot_min) continue;
      if (dot < best_dot) {
        best_dot = dot;
        chosen = {{a, b}};
      }
    }
  }
  if (!chosen) throw VertexExtractionError(VertexFailure::kNoParallelPairs, std::to_string(lines.size()) + " lines");

  const auto& first = pairs[chosen->first];
  const auto& second = pairs[chosen->second];
  const std::array<std::pair<std::size_t, std::size_t>, 4> crossings{{{first.first, second.first},
                                                                       {first.first, second.second},
                                                                       {first.second, second.first},
                                                                       {first.second, second.second}}};
  std::array<Vec3, 4> corners;
  for (std::size_t c = 0; c < 4; ++c) {
    PerpendicularFeet feet;
    try {
      feet = commonPerpendicular(lines[crossings[c].first], lines[crossings[c].second], cfg.parallel_dot_max);
    } catch (const Error&) {
      throw VertexExtractionError(VertexFailure::kNoParallelPairs, "crossing lines are parallel");
    }
    if (!(feet.gap() < cfg.foot_gap_max)) {
      throw VertexExtractionError(VertexFailure::kFootGap, "gap " + std::to_string(feet.gap()));
    }
    for (const Vec3* foot : {&feet.on_first, &feet.on_second}) {
      const double dist = std::abs(plane.signedDistance(*foot));
      if (!(dist < cfg.vertex_plane_distance_max)) {
        throw VertexExtractionError(VertexFailure::kPlaneDistance, "distance " + std::to_string(dist));
      }
    }
    for (const Vec3* foot : {&feet.on_first, &feet.on_second}) {
      const Vec3 pc = pose * (*foot);
      if (!(pc.z() > 1e-6) || !det_box.contains(projectPoint(pc, k), cfg.box_margin_px)) {
        throw VertexExtractionError(VertexFailure::kOutsideBox, "");
      }
    }
    corners[c] = 0.5 * (feet.on_first + feet.on_second);
  }
  return orderCounterclockwise(corners, plane.normal());
}

PlaneQuality classifyPlane(const PlaneObservation& obs, std::span<const DetectionBox> boxes,
                           const CameraIntrinsics& k, const SelectionConfig& cfg,
                           const std::set<int>& unstructured_classes) {
  // (1) far away
  const std::span<const Vec3> depth_source = obs.cloud.empty() ? std::span<const Vec3>(obs.edge_points)
                                                               : std::span<const Vec3>(obs.cloud);
  if (!depth_source.empty() && centroid(depth_source).z() > cfg.far_depth_max) return PlaneQuality::kBad;

  // (2) weak re-fit support
  if (obs.inlier_ratio < cfg.inlier_ratio_min) return PlaneQuality::kBad;

  const std::vector<Vec2> pixels = projectAll(obs.edge_points, RigidTransform(), k);

  // (3) classed plane near the image border or without structure
  if (obs.class_id != kNoClass) {
    if (pixels.empty()) return PlaneQuality::kBad;
    const PixelBox box = PixelBox::fromPoints(pixels);
    const double m = cfg.edge_margin_px;
    if (box.x_min < m || box.y_min < m || box.x_max > k.width - m || box.y_max > k.height - m) {
      return PlaneQuality::kBad;
    }
    if (!hasParallelPair(obs.structure.edge_lines, cfg.parallel_dot_min)) return PlaneQuality::kBad;
    if (!obs.structure.hasVertices()) return PlaneQuality::kBad;
  }

  // (4) mostly covered by an unstructured object
  if (!pixels.empty() && !unstructured_classes.empty()) {
    for (const DetectionBox& det : boxes) {
      if (!unstructured_classes.contains(det.class_id)) continue;
      const auto inside = std::count_if(pixels.begin(), pixels.end(),
                                        [&](const Vec2& uv) { return det.box.contains(uv); });
      if (static_cast<double>(inside) / static_cast<double>(pixels.size()) > cfg.unstructured_fraction_max) {
        return PlaneQuality::kBad;
      }
    }
  }
  return PlaneQuality::kGood;
}

std::vector<PlaneObservation> selectPlanes(std::vector<PlaneObservation> observations,
                                           std::span<const DetectionBox> boxes,
                                           const CameraIntrinsics& k, const SelectionConfig& cfg,
                                           const std::set<int>& unstructured_classes) {
  for (PlaneObservation& obs : observations) {
    obs.quality = classifyPlane(obs, boxes, k, cfg, unstructured_classes);
  }
  return observations;
}

void processObservation(PlaneObservation& obs, std::span<const DetectionBox> boxes,
                        const CameraIntrinsics& k, const ProcessingConfig& cfg, std::uint64_t seed) {
  if (obs.edge_points.empty()) obs.edge_points = extractEdgePoints(obs.cloud, cfg.edge_grid);
  std::erase_if(obs.edge_points,
                [&](const Vec3& p) { return std::abs(obs.plane.signedDistance(p)) > cfg.refit_distance; });

  obs.structure = {};
  obs.det_box.reset();
  obs.class_id = kNoClass;
  const auto box_index = bestBoxIndex(obs, boxes, RigidTransform(), k, cfg.iou_min, cfg.inbox_fraction_min);
  if (!box_index) return;
  obs.class_id = boxes[*box_index].class_id;
  obs.det_box = boxes[*box_index].box;

  try {
    obs.structure.edge_lines = extractEdgeLines(obs.edge_points, obs.plane, cfg.line_distance,
                                                cfg.line_min_inliers, cfg.max_lines, seed);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNoLinesFound) throw;
    return;
  }
  try {
    const auto corners = extractVertices(obs.structure.edge_lines, obs.plane, *obs.det_box, RigidTransform(),
                                         k, cfg.vertex);
    obs.structure.vertices.assign(corners.begin(), corners.end());
  } catch (const VertexExtractionError&) {
    // Structure stays without vertices; selection marks the plane bad.
  }
}

}  // namespace planeslam
