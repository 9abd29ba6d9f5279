#pragma once

#include <cstdint>
#include <map>
#include <random>

#include "planeslam/factor_graph.hpp"

namespace planeslam {

struct FactorInstance {
  Factor factor;
  RigidTransform T_cw;
};

// A random, evaluable instance of `kind`, kept away from the non-smooth
// points of its residual (min/max switches, poles of the normal angles).
FactorInstance randomFactorInstance(FactorKind kind, const CameraIntrinsics& k, std::mt19937_64& rng);

// Largest entry of |analytic - numeric| / max(|numeric|, 1e-3), with central
// differences of the residual in long double.
double jacobianError(const Factor& f, const RigidTransform& t_cw, const CameraIntrinsics& k);

struct JacobianAudit {
  std::map<FactorKind, double> max_error;
  int instances_per_kind = 0;
};

JacobianAudit auditJacobians(int instances_per_kind, std::uint64_t seed, const CameraIntrinsics& k);

}  // namespace planeslam
