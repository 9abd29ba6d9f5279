#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "planeslam/error.hpp"

namespace planeslam {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;

// Points are stored as plain vectors of Eigen fixed-size types; Vector3d has
// no alignment requirement so std::allocator is fine.
using PointCloud = std::vector<Vec3>;

inline constexpr double kPi = std::numbers::pi;

// Derived RNG seed for a (seed, a, b) triple; splitmix64 finalizer.
inline std::uint64_t mixSeed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (a + 1) + 0xbf58476d1ce4e5b9ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

// Wraps an angle into (-pi, pi].
template <typename S>
S wrapAngle(S a) {
  const S two_pi = S(2) * S(std::numbers::pi_v<long double>);
  const S pi = S(std::numbers::pi_v<long double>);
  a = std::fmod(a, two_pi);
  if (a <= -pi) a += two_pi;
  if (a > pi) a -= two_pi;
  return a;
}

template <typename S>
Eigen::Matrix<S, 3, 3> skew(const Eigen::Matrix<S, 3, 1>& v) {
  Eigen::Matrix<S, 3, 3> m;
  m << S(0), -v.z(), v.y(), v.z(), S(0), -v.x(), -v.y(), v.x(), S(0);
  return m;
}

// Rodrigues formula, exact for any angle.
template <typename S>
Eigen::Matrix<S, 3, 3> so3Exp(const Eigen::Matrix<S, 3, 1>& omega) {
  const S theta = omega.norm();
  const Eigen::Matrix<S, 3, 3> w = skew(omega);
  if (theta < S(1e-8)) {
    return Eigen::Matrix<S, 3, 3>::Identity() + w + S(0.5) * w * w;
  }
  const S a = std::sin(theta) / theta;
  const S b = (S(1) - std::cos(theta)) / (theta * theta);
  return Eigen::Matrix<S, 3, 3>::Identity() + a * w + b * w * w;
}

// Left Jacobian of SO(3); maps the translational tangent part to translation.
template <typename S>
Eigen::Matrix<S, 3, 3> so3LeftJacobian(const Eigen::Matrix<S, 3, 1>& omega) {
  const S theta = omega.norm();
  const Eigen::Matrix<S, 3, 3> w = skew(omega);
  if (theta < S(1e-8)) {
    return Eigen::Matrix<S, 3, 3>::Identity() + S(0.5) * w + w * w / S(6);
  }
  const S t2 = theta * theta;
  const S b = (S(1) - std::cos(theta)) / t2;
  const S c = (theta - std::sin(theta)) / (t2 * theta);
  return Eigen::Matrix<S, 3, 3>::Identity() + b * w + c * w * w;
}

/// Infinite plane in Hessian form: a point p lies on it iff n.p + d = 0.
///
/// Instances are always canonical: |n| = 1, d >= 0, and when d == 0 the
/// lexicographically larger of (n, -n) is kept.
class Plane {
 public:
  // The z = 0 plane.
  Plane();

  // Throws DegeneratePlane when the first three coefficients have norm <= 1e-12.
  static Plane fromCoefficients(const Vec4& raw);

  const Vec3& normal() const { return normal_; }
  double offset() const { return offset_; }
  Vec4 coefficients() const { return {normal_.x(), normal_.y(), normal_.z(), offset_}; }

  double signedDistance(const Vec3& p) const { return normal_.dot(p) + offset_; }

 private:
  Plane(const Vec3& n, double d) : normal_(n), offset_(d) {}

  Vec3 normal_;
  double offset_;
};

Plane makePlane(const Vec4& raw);

/// Line through `point` with unit `direction`.
class Line3D {
 public:
  // Throws InvalidArgument for a (near) zero direction.
  Line3D(const Vec3& point, const Vec3& direction);

  const Vec3& point() const { return point_; }
  const Vec3& direction() const { return direction_; }

  double distance(const Vec3& p) const;

 private:
  Vec3 point_;
  Vec3 direction_;
};

/// Rigid transform p' = R p + t with R in SO(3).
class RigidTransform {
 public:
  RigidTransform() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  // Validates R^T R = I and det R = +1 within 1e-9; throws InvalidArgument.
  RigidTransform(const Mat3& rotation, const Vec3& translation);

  static RigidTransform fromQuaternion(const Eigen::Quaterniond& q, const Vec3& translation);
  // SE(3) exponential of xi = (omega, v).
  static RigidTransform exp(const Vec6& xi);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Eigen::Quaterniond quaternion() const;

  Vec3 operator*(const Vec3& p) const { return rotation_ * p + translation_; }
  RigidTransform operator*(const RigidTransform& other) const;
  RigidTransform inverse() const;

  // exp(xi) * this, re-orthonormalized.
  RigidTransform leftPerturbed(const Vec6& xi) const;

 private:
  struct Unchecked {};
  RigidTransform(const Mat3& rotation, const Vec3& translation, Unchecked);

  Mat3 rotation_;
  Vec3 translation_;
};

// Returns R re-projected onto SO(3).
Mat3 orthonormalize(const Mat3& r);

struct CameraIntrinsics {
  double fx = 525.0;
  double fy = 525.0;
  double cx = 319.5;
  double cy = 239.5;
  int width = 640;
  int height = 480;

  // Throws InvalidArgument if focal lengths or principal point are out of range.
  void validate() const;
};

struct PixelBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  static PixelBox fromPoints(std::span<const Vec2> pixels);

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  bool contains(const Vec2& uv, double margin = 0.0) const {
    return uv.x() >= x_min - margin && uv.x() <= x_max + margin && uv.y() >= y_min - margin &&
           uv.y() <= y_max + margin;
  }
  PixelBox clippedTo(const CameraIntrinsics& k) const;
  void validate() const;
};

// Intersection over union; 0 for disjoint boxes or a zero-area union.
double boxIou(const PixelBox& a, const PixelBox& b);

// Camera-frame plane of a world plane: the image of pi_w under p -> T p.
Plane transformPlane(const Plane& pi_w, const RigidTransform& t_cw);

struct PlaneAngles {
  double azimuth;    // atan2(n_y, n_x), in (-pi, pi]; 0 at the poles
  double elevation;  // asin(n_z), in [-pi/2, pi/2]
  double offset;
};

PlaneAngles minimalParams(const Plane& pi);
Vec3 normalFromAngles(double azimuth, double elevation);

// Throws BehindCamera when p_c.z <= 1e-6.
Vec2 projectPoint(const Vec3& p_c, const CameraIntrinsics& k);

inline double pointPlaneDistance(const Vec3& p, const Plane& pi) { return pi.signedDistance(p); }

// Orthonormal (u, v) with u x v = n; deterministic for a given n.
std::pair<Vec3, Vec3> planeBasis(const Vec3& n);

Vec3 centroid(std::span<const Vec3> points);

}  // namespace planeslam
