#include <fstream>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "visfuse/config.hpp"
#include "visfuse/error.hpp"

using namespace visfuse;

TEST(Config, Defaults) {
  const PipelineConfig c;
  EXPECT_EQ(c.voxel_size, (std::array<double, 3>{0.16, 0.08, 0.04}));
  EXPECT_EQ(c.frames_per_fragment, 9);
  EXPECT_EQ(c.window, 9);
  EXPECT_DOUBLE_EQ(c.lambda(1), 0.48);
  EXPECT_DOUBLE_EQ(c.lambda(3), 0.12);
  EXPECT_EQ(c.loss_weights, (std::array<double, 3>{1.0, 0.8, 0.64}));
  EXPECT_DOUBLE_EQ(c.d_max, 3.0);
  EXPECT_EQ(c.strategy, SparsifyStrategy::kSlidingWindow);
  EXPECT_EQ(c.residual_upsample, UpsampleMode::kNearest);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, ParseAndFormatRoundTrip) {
  const PipelineConfig c = parse_config(
      "# ablation\nstrategy = topk\nwindow = 5\nvoxel_size = 0.2, 0.1, 0.05  # coarser\n"
      "predictor = heuristic\nseed = 17\nlabel = demo\nzero_residual = true\n");
  EXPECT_EQ(c.strategy, SparsifyStrategy::kTopK);
  EXPECT_EQ(c.window, 5);
  EXPECT_DOUBLE_EQ(c.voxel_size[2], 0.05);
  EXPECT_EQ(c.predictor, PredictorMode::kHeuristic);
  EXPECT_EQ(c.seed, 17u);
  EXPECT_EQ(c.label, "demo");
  EXPECT_TRUE(c.zero_residual);
  const PipelineConfig again = parse_config(format_config(c));
  EXPECT_EQ(format_config(again), format_config(c));

  const auto dir = visfuse::testing::temp_dir("cfg");
  std::ofstream(dir / "a.cfg") << "window = 3\n";
  EXPECT_EQ(load_config(dir / "a.cfg").window, 3);
  EXPECT_THROW(load_config(dir / "missing.cfg"), IoError);
}

TEST(Config, ErrorsNameTheField) {
  const auto field_of = [](const std::string& text) {
    try {
      parse_config(text).validate();
    } catch (const ConfigError& e) {
      return e.field();
    }
    return std::string("<none>");
  };
  EXPECT_EQ(field_of("bogus = 1\n"), "bogus");
  EXPECT_EQ(field_of("window = abc\n"), "window");
  EXPECT_EQ(field_of("window = 0\n"), "window");
  EXPECT_EQ(field_of("voxel_size = 0.16, 0.1, 0.04\n"), "voxel_size");
  EXPECT_EQ(field_of("strategy = random\n"), "strategy");
  EXPECT_EQ(field_of("head = learned\n"), "head");
  EXPECT_EQ(field_of("predictor = external\n"), "external_dir");
  EXPECT_EQ(field_of("scene = room\ndataset = /tmp/x\n"), "scene");
}
