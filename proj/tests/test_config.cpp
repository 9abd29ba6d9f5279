#include <gtest/gtest.h>

#include "planeslam/config.hpp"

using namespace planeslam;

namespace {

std::string configError(const std::string& yaml) {
  try {
    parseConfig(yaml);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfigError);
    return e.what();
  }
  ADD_FAILURE() << "accepted: " << yaml;
  return {};
}

}  // namespace

TEST(Config, EmptyDocumentGivesDefaults) {
  const PipelineConfig c = parseConfig("");
  EXPECT_EQ(c.seed, 0u);
  EXPECT_EQ(c.fuse_every, 5);
  EXPECT_EQ(c.association.mode, AssociationMode::kIntegrated);
  EXPECT_EQ(c.scene.objects.size(), 5u);
}

TEST(Config, ShippedConfigsLoad) {
  for (const char* name : {"ambiguous-desk.yaml", "noiseless.yaml", "ablation.yaml", "book-stack.yaml"}) {
    const PipelineConfig c = loadConfig(std::string(PLANESLAM_SOURCE_DIR) + "/configs/" + name);
    EXPECT_NO_THROW(c.validate()) << name;
  }
  const PipelineConfig desk = loadConfig(std::string(PLANESLAM_SOURCE_DIR) + "/configs/ambiguous-desk.yaml");
  EXPECT_EQ(desk.seed, 7u);
  EXPECT_EQ(desk.trajectory.frames, 100);
  EXPECT_NEAR(desk.odometry.rotation_sigma, deg2rad(0.2), 1e-15);
  EXPECT_NEAR(desk.association.beta_T, deg2rad(10), 1e-15);
  EXPECT_EQ(desk.output.dir, "out/ambiguous-desk");
}

TEST(Config, BookHeightOverridesBooksOnly) {
  const PipelineConfig c = parseConfig("scene: {preset: ambiguous-desk, book_height: 0.02}\n");
  for (const ObjectSpec& o : c.scene.objects) {
    if (o.class_id == 1) EXPECT_EQ(o.size.z(), 0.02);
    else EXPECT_NE(o.size.z(), 0.02);
  }
}

TEST(Config, ExplicitObjects) {
  const PipelineConfig c = parseConfig(
      "scene:\n"
      "  objects:\n"
      "    - {name: tray, class_id: 4, position: [0.1, 0.2], yaw_deg: 90, size: [0.3, 0.2, 0.05]}\n");
  ASSERT_EQ(c.scene.objects.size(), 1u);
  EXPECT_EQ(c.scene.objects[0].class_id, 4);
  EXPECT_NEAR(c.scene.objects[0].yaw, kPi / 2, 1e-15);
  EXPECT_EQ(c.scene.objects[0].size, Vec3(0.3, 0.2, 0.05));
}

TEST(Config, ErrorsNameTheKey) {
  EXPECT_NE(configError("trajectory: {frmes: 3}\n").find("trajectory.frmes"), std::string::npos);
  EXPECT_NE(configError("noise: {pixel_sigma: lots}\n").find("noise.pixel_sigma"), std::string::npos);
  EXPECT_NE(configError("scene: {preset: kitchen}\n").find("scene.preset"), std::string::npos);
  EXPECT_NE(configError("map: {fuse_every: 0}\n").find("map.fuse_every"), std::string::npos);
  EXPECT_NE(configError("scene: {objects: 3}\n").find("scene.objects"), std::string::npos);
  configError("seed: [1, 2\n");
  configError("association: {mode: sideways}\n");
}

TEST(Config, MissingFile) {
  try {
    loadConfig("/nonexistent/config.yaml");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfigError);
  }
}
