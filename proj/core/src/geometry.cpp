#include "planeslam/geometry.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <limits>
#include <string>

namespace planeslam {
namespace {

constexpr double kNormalEps = 1e-12;
constexpr double kZeroOffset = 1e-12;
constexpr double kRotationTol = 1e-9;

bool lexicographicallyGreater(const Vec3& a, const Vec3& b) {
  for (int i = 0; i < 3; ++i) {
    if (a[i] != b[i]) return a[i] > b[i];
  }
  return false;
}

}  // namespace

Plane::Plane() : normal_(0.0, 0.0, 1.0), offset_(0.0) {}

Plane Plane::fromCoefficients(const Vec4& raw) {
  const Vec3 n = raw.head<3>();
  const double norm = n.norm();
  if (!(norm > kNormalEps)) {
    throw Error(ErrorCode::kDegeneratePlane, "normal norm " + std::to_string(norm));
  }
  // Unit input within rounding is kept bit-exact so serialized planes reload unchanged.
  const double scale = std::abs(norm - 1.0) <= 4.0 * std::numeric_limits<double>::epsilon() ? 1.0 : norm;
  Vec3 unit = n / scale;
  double d = raw[3] / scale;
  if (std::abs(d) <= kZeroOffset) {
    d = 0.0;
    if (lexicographicallyGreater(-unit, unit)) unit = -unit;
  } else if (d < 0.0) {
    unit = -unit;
    d = -d;
  }
  return Plane(unit, d);
}

Plane makePlane(const Vec4& raw) { return Plane::fromCoefficients(raw); }

Line3D::Line3D(const Vec3& point, const Vec3& direction) : point_(point) {
  const double norm = direction.norm();
  if (!(norm > 1e-12)) throw Error(ErrorCode::kInvalidArgument, "line direction is zero");
  direction_ = std::abs(norm - 1.0) <= 4.0 * std::numeric_limits<double>::epsilon() ? direction : direction / norm;
}

double Line3D::distance(const Vec3& p) const {
  const Vec3 w = p - point_;
  return (w - w.dot(direction_) * direction_).norm();
}

RigidTransform::RigidTransform(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  const double det = rotation.determinant();
  if (!(ortho <= kRotationTol) || !(std::abs(det - 1.0) <= kRotationTol)) {
    throw Error(ErrorCode::kInvalidArgument, "rotation is not in SO(3)");
  }
}

RigidTransform::RigidTransform(const Mat3& rotation, const Vec3& translation, Unchecked)
    : rotation_(rotation), translation_(translation) {}

RigidTransform RigidTransform::fromQuaternion(const Eigen::Quaterniond& q, const Vec3& translation) {
  if (!(q.norm() > 1e-12)) throw Error(ErrorCode::kInvalidArgument, "zero quaternion");
  return RigidTransform(q.normalized().toRotationMatrix(), translation, Unchecked{});
}

RigidTransform RigidTransform::exp(const Vec6& xi) {
  const Vec3 omega = xi.head<3>();
  const Vec3 v = xi.tail<3>();
  return RigidTransform(orthonormalize(so3Exp(omega)), so3LeftJacobian(omega) * v, Unchecked{});
}

Eigen::Quaterniond RigidTransform::quaternion() const {
  Eigen::Quaterniond q(rotation_);
  q.normalize();
  return q;
}

RigidTransform RigidTransform::operator*(const RigidTransform& other) const {
  return RigidTransform(rotation_ * other.rotation_, rotation_ * other.translation_ + translation_,
                        Unchecked{});
}

RigidTransform RigidTransform::inverse() const {
  const Mat3 rt = rotation_.transpose();
  return RigidTransform(rt, -(rt * translation_), Unchecked{});
}

RigidTransform RigidTransform::leftPerturbed(const Vec6& xi) const {
  const RigidTransform composed = exp(xi) * (*this);
  return RigidTransform(orthonormalize(composed.rotation_), composed.translation_, Unchecked{});
}

Mat3 orthonormalize(const Mat3& r) {
  Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return u * v.transpose();
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw Error(ErrorCode::kInvalidArgument, "focal length must be positive");
  if (width <= 0 || height <= 0) throw Error(ErrorCode::kInvalidArgument, "image size must be positive");
  if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height)) {
    throw Error(ErrorCode::kInvalidArgument, "principal point outside the image");
  }
}

PixelBox PixelBox::fromPoints(std::span<const Vec2> pixels) {
  if (pixels.empty()) throw Error(ErrorCode::kInvalidArgument, "box from zero points");
  PixelBox box{pixels[0].x(), pixels[0].y(), pixels[0].x(), pixels[0].y()};
  for (const Vec2& p : pixels.subspan(1)) {
    box.x_min = std::min(box.x_min, p.x());
    box.y_min = std::min(box.y_min, p.y());
    box.x_max = std::max(box.x_max, p.x());
    box.y_max = std::max(box.y_max, p.y());
  }
  return box;
}

PixelBox PixelBox::clippedTo(const CameraIntrinsics& k) const {
  const double w = k.width;
  const double h = k.height;
  PixelBox out{std::clamp(x_min, 0.0, w), std::clamp(y_min, 0.0, h), std::clamp(x_max, 0.0, w),
               std::clamp(y_max, 0.0, h)};
  return out;
}

void PixelBox::validate() const {
  if (!(x_min <= x_max) || !(y_min <= y_max)) {
    throw Error(ErrorCode::kInvalidArgument, "pixel box has min > max");
  }
}

double boxIou(const PixelBox& a, const PixelBox& b) {
  const double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  if (!(uni > 0.0)) return 0.0;
  return inter / uni;
}

Plane transformPlane(const Plane& pi_w, const RigidTransform& t_cw) {
  const Vec3 n_c = t_cw.rotation() * pi_w.normal();
  const double d_c = pi_w.offset() - n_c.dot(t_cw.translation());
  return Plane::fromCoefficients(Vec4(n_c.x(), n_c.y(), n_c.z(), d_c));
}

PlaneAngles minimalParams(const Plane& pi) {
  const Vec3& n = pi.normal();
  double azimuth = (n.x() == 0.0 && n.y() == 0.0) ? 0.0 : std::atan2(n.y(), n.x());
  // atan2 returns -pi for (-x, -0.0); fold onto the half-open interval.
  if (azimuth <= -kPi) azimuth = kPi;
  return {azimuth, std::asin(std::clamp(n.z(), -1.0, 1.0)), pi.offset()};
}

Vec3 normalFromAngles(double azimuth, double elevation) {
  return {std::cos(elevation) * std::cos(azimuth), std::cos(elevation) * std::sin(azimuth),
          std::sin(elevation)};
}

Vec2 projectPoint(const Vec3& p_c, const CameraIntrinsics& k) {
  if (!(p_c.z() > 1e-6)) throw Error(ErrorCode::kBehindCamera, "depth " + std::to_string(p_c.z()));
  return {k.fx * p_c.x() / p_c.z() + k.cx, k.fy * p_c.y() / p_c.z() + k.cy};
}

std::pair<Vec3, Vec3> planeBasis(const Vec3& n) {
  int axis = 0;
  n.cwiseAbs().minCoeff(&axis);
  Vec3 e = Vec3::Zero();
  e[axis] = 1.0;
  const Vec3 u = n.cross(e).normalized();
  const Vec3 v = n.cross(u);
  return {u, v};
}

Vec3 centroid(std::span<const Vec3> points) {
  Vec3 c = Vec3::Zero();
  if (points.empty()) return c;
  for (const Vec3& p : points) c += p;
  return c / static_cast<double>(points.size());
}

}  // namespace planeslam
