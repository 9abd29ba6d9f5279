#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>

#include "planeslam/association.hpp"
#include "planeslam/factor_graph.hpp"
#include "planeslam/map.hpp"
#include "planeslam/plane_processing.hpp"
#include "planeslam/sim.hpp"

namespace planeslam {

enum class OdometryMode { kGtNoise, kConstantVelocity };
const char* toString(OdometryMode mode);

struct OdometryConfig {
  OdometryMode mode = OdometryMode::kGtNoise;
  // Per-frame noise on the ground-truth relative motion (gt-noise mode).
  double translation_sigma = 0.0;
  double rotation_sigma = 0.0;  // radians
};

struct OutputConfig {
  std::string dir = "out";
  bool dump_frames = false;
  bool dump_problems = false;
  bool trace = false;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  CameraIntrinsics intrinsics;

  std::string scene_preset = "ambiguous-desk";
  SceneSpec scene = scenePreset("ambiguous-desk");
  TrajectorySpec trajectory;
  NoiseSpec noise;
  RenderSettings render;
  OdometryConfig odometry;

  ProcessingConfig processing;
  std::set<int> unstructured_classes{3};
  AssociationConfig association;
  FactorConfig factors;
  SolverSettings solver;
  SolverSettings tracking{.max_iterations = 20, .outlier_rounds = 3};
  MapConfig map;
  int fuse_every = 5;

  OutputConfig output;

  void validate() const;
};

// Parses YAML text. Unknown keys and wrong types throw ConfigError naming the
// dotted key path.
PipelineConfig parseConfig(const std::string& yaml_text);
PipelineConfig loadConfig(const std::string& path);

}  // namespace planeslam
