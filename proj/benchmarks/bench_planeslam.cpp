#include <benchmark/benchmark.h>

#include <random>

#include "planeslam/association.hpp"
#include "planeslam/factor_graph.hpp"
#include "planeslam/jacobian_audit.hpp"
#include "planeslam/sim.hpp"

using namespace planeslam;

namespace {

const CameraIntrinsics kK;

void BM_Jacobian(benchmark::State& state) {
  const auto kind = kAllFactorKinds[static_cast<std::size_t>(state.range(0))];
  std::mt19937_64 rng(1);
  const FactorInstance inst = randomFactorInstance(kind, kK, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(residual(inst.factor, inst.T_cw, kK));
    benchmark::DoNotOptimize(jacobian(inst.factor, inst.T_cw, kK));
  }
  state.SetLabel(toString(kind));
}
BENCHMARK(BM_Jacobian)->DenseRange(0, kFactorKindCount - 1);

void BM_MannWhitneyGate(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 1.0);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<Vec3> a(n);
  std::vector<Vec3> b(n);
  for (Vec3& p : a) p = Vec3(g(rng), g(rng), g(rng));
  for (Vec3& p : b) p = Vec3(g(rng), g(rng), g(rng));
  const AssociationConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(mannWhitneyGate(a, b, cfg));
}
BENCHMARK(BM_MannWhitneyGate)->Arg(20)->Arg(100)->Arg(500);

// Association of one rendered frame against landmarks built from the scene.
void BM_AssociatePlanes(benchmark::State& state) {
  const Scene scene = generateScene(scenePreset("ambiguous-desk"));
  const RigidTransform t = lookAt(Vec3(1.2, 0.8, 1.2), Vec3::Zero());
  const SimulatedFrame f = renderFrame(scene, t, kK, NoiseSpec{}, 3);
  std::vector<PlaneLandmark> map;
  for (const ScenePlane& sp : scene.planes) {
    PlaneLandmark lm;
    lm.id = sp.id;
    lm.plane = sp.plane;
    lm.class_id = sp.class_id;
    lm.structure.vertices.assign(sp.vertices.begin(), sp.vertices.end());
    for (int i = 0; i < 4; ++i) {
      const Vec3& p = sp.vertices[static_cast<std::size_t>(i)];
      const Vec3& q = sp.vertices[static_cast<std::size_t>((i + 1) % 4)];
      for (int s = 0; s < 50; ++s) lm.edge_points.push_back(p + (q - p) * (s / 50.0));
    }
    map.push_back(lm);
  }
  const AssociationConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(associatePlanes(f.frame.observations, {}, map, {}, t, kK, cfg));
}
BENCHMARK(BM_AssociatePlanes);

// One full solve from a perturbed pose on PosePoint and PosePlane factors.
void BM_Optimize(benchmark::State& state) {
  const RigidTransform truth = lookAt(Vec3(1.2, 0.8, 1.2), Vec3::Zero());
  PoseProblem p;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.4, 0.4);
  for (int i = 0; i < state.range(0); ++i) {
    Factor f;
    f.kind = FactorKind::kPosePoint;
    f.p_w = Vec3(u(rng), u(rng), 0.0);
    f.u_obs = projectPoint(truth * f.p_w, kK);
    f.huber_delta = 2.0;
    p.factors.push_back(f);
  }
  Factor plane;
  plane.kind = FactorKind::kPosePlane;
  const Plane w = makePlane(Vec4(0, 0, 1, 0));
  const Plane c = transformPlane(w, truth);
  plane.pi_c = c.coefficients();
  plane.pi_w = ((truth.rotation() * w.normal()).dot(c.normal()) < 0 ? -1.0 : 1.0) * w.coefficients();
  plane.weight = 100;
  plane.huber_delta = 0.02;
  p.factors.push_back(plane);
  p.T_cw = truth.leftPerturbed((Vec6() << 0.02, -0.02, 0.01, 0.03, 0.02, -0.03).finished());
  for (auto _ : state) benchmark::DoNotOptimize(optimize(p, kK));
}
BENCHMARK(BM_Optimize)->Arg(50)->Arg(300);

}  // namespace
BENCHMARK_MAIN();
