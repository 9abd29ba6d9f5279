#include "planeslam/jacobian_audit.hpp"

#include <algorithm>
#include <cmath>

namespace planeslam {
namespace {

using LVec6 = Eigen::Matrix<long double, 6, 1>;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Vec3 randomUnit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(n(rng), n(rng), n(rng));
  } while (v.norm() < 1e-3);
  return v.normalized();
}

// Unit vector with |z| <= 0.8, so azimuth and elevation stay smooth.
Vec3 randomUnitAwayFromPoles(std::mt19937_64& rng) {
  Vec3 v;
  do {
    v = randomUnit(rng);
  } while (std::abs(v.z()) > 0.8);
  return v;
}

RigidTransform randomPose(std::mt19937_64& rng) {
  const Vec3 axis = randomUnit(rng);
  Vec6 xi;
  xi.head<3>() = axis * uniform(rng, 0.0, 0.6);
  for (int d = 3; d < 6; ++d) xi(d) = uniform(rng, -0.3, 0.3);
  return RigidTransform::exp(xi);
}

// Margin between the extreme projected coordinate and the runner-up.
double extremeGap(const std::array<Vec2, 4>& uv, int axis, bool max) {
  std::array<double, 4> c{};
  for (std::size_t i = 0; i < 4; ++i) c[i] = max ? -uv[i](axis) : uv[i](axis);
  std::sort(c.begin(), c.end());
  return c[1] - c[0];
}

}  // namespace

FactorInstance randomFactorInstance(FactorKind kind, const CameraIntrinsics& k, std::mt19937_64& rng) {
  for (;;) {
    FactorInstance inst;
    inst.T_cw = randomPose(rng);
    const RigidTransform t_wc = inst.T_cw.inverse();
    const Mat3& r = inst.T_cw.rotation();
    Factor& f = inst.factor;
    f.kind = kind;
    switch (kind) {
      case FactorKind::kPosePoint:
      case FactorKind::kPointPlane: {
        const Vec3 p_c(uniform(rng, -0.5, 0.5), uniform(rng, -0.4, 0.4), uniform(rng, 1.0, 3.0));
        f.p_w = t_wc * p_c;
        f.u_obs = projectPoint(p_c, k) + Vec2(uniform(rng, -5, 5), uniform(rng, -5, 5));
        const Vec3 n = randomUnit(rng);
        f.pi_c << n, uniform(rng, -2.0, 2.0);
        break;
      }
      case FactorKind::kPosePlane: {
        const Vec3 n_w = randomUnit(rng);
        const Vec3 n_p = r * n_w;
        if (std::abs(n_p.z()) > 0.8) continue;
        f.pi_w << n_w, uniform(rng, -2.0, 2.0);
        const Vec3 n_c = (n_p + 0.05 * randomUnit(rng)).normalized();
        if (std::abs(n_c.z()) > 0.85) continue;
        f.pi_c << n_c, uniform(rng, -2.0, 2.0);
        break;
      }
      case FactorKind::kBoxPlane: {
        // A tilted rectangle in front of the camera.
        const Vec3 centre(uniform(rng, -0.3, 0.3), uniform(rng, -0.2, 0.2), uniform(rng, 1.2, 2.5));
        const Vec3 n = (Vec3::UnitZ() + 0.5 * randomUnit(rng)).normalized();
        const auto [a, b] = planeBasis(n);
        const double ha = uniform(rng, 0.1, 0.3);
        const double hb = uniform(rng, 0.1, 0.3);
        const double spin = uniform(rng, 0.0, 2.0 * kPi);
        const Vec3 ea = std::cos(spin) * a + std::sin(spin) * b;
        const Vec3 eb = -std::sin(spin) * a + std::cos(spin) * b;
        const std::array<Vec3, 4> corners_c{centre - ha * ea - hb * eb, centre + ha * ea - hb * eb,
                                            centre + ha * ea + hb * eb, centre - ha * ea + hb * eb};
        std::array<Vec2, 4> uv;
        for (std::size_t i = 0; i < 4; ++i) {
          f.vertices_w[i] = t_wc * corners_c[i];
          uv[i] = projectPoint(corners_c[i], k);
        }
        if (extremeGap(uv, 0, false) < 1.0 || extremeGap(uv, 1, false) < 1.0 || extremeGap(uv, 0, true) < 1.0 ||
            extremeGap(uv, 1, true) < 1.0) {
          continue;
        }
        f.box_obs = PixelBox{uniform(rng, 0, 200), uniform(rng, 0, 200), uniform(rng, 300, 600), uniform(rng, 250, 450)};
        break;
      }
      case FactorKind::kPlaneParallel:
      case FactorKind::kPlanePerpendicular: {
        f.n_w = randomUnit(rng);
        const Vec3 n_p = r * f.n_w;
        if (std::abs(n_p.z()) > 0.8) continue;
        f.n_c = randomUnitAwayFromPoles(rng);
        if (kind == FactorKind::kPlanePerpendicular) {
          f.r_perp = RigidTransform::exp((Vec6() << randomUnit(rng) * (kPi / 2), Vec3::Zero()).finished()).rotation();
          if (std::abs((f.r_perp * f.n_c).z()) > 0.8) continue;
        }
        break;
      }
    }
    return inst;
  }
}

double jacobianError(const Factor& f, const RigidTransform& t_cw, const CameraIntrinsics& k) {
  const FactorJacobian analytic = jacobian(f, t_cw, k);
  const PoseT<long double> base = poseCast<long double>(t_cw);
  const long double h = 1e-7L;
  double worst = 0.0;
  for (int c = 0; c < 6; ++c) {
    LVec6 xi = LVec6::Zero();
    xi(c) = h;
    const auto plus = residualT<long double>(f, leftPerturb<long double>(base, xi), k);
    const auto minus = residualT<long double>(f, leftPerturb<long double>(base, LVec6(-xi)), k);
    for (int row = 0; row < plus.size(); ++row) {
      long double diff = plus(row) - minus(row);
      // Angle rows may straddle the wrap.
      if (diff > 3.0L) diff -= 2.0L * std::numbers::pi_v<long double>;
      if (diff < -3.0L) diff += 2.0L * std::numbers::pi_v<long double>;
      const double numeric = static_cast<double>(diff / (2.0L * h));
      const double err = std::abs(analytic(row, c) - numeric) / std::max(std::abs(numeric), 1e-3);
      worst = std::max(worst, err);
    }
  }
  return worst;
}

JacobianAudit auditJacobians(int instances_per_kind, std::uint64_t seed, const CameraIntrinsics& k) {
  JacobianAudit audit;
  audit.instances_per_kind = instances_per_kind;
  for (FactorKind kind : kAllFactorKinds) {
    std::mt19937_64 rng(mixSeed(seed, static_cast<std::uint64_t>(kind)));
    double worst = 0.0;
    for (int i = 0; i < instances_per_kind; ++i) {
      const FactorInstance inst = randomFactorInstance(kind, k, rng);
      worst = std::max(worst, jacobianError(inst.factor, inst.T_cw, k));
    }
    audit.max_error[kind] = worst;
  }
  return audit;
}

}  // namespace planeslam
