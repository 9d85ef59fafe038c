#include "test_util.hpp"

#include <gtest/gtest.h>

#include <set>
#include <sstream>

using namespace qct;

namespace {

PipelineConfig parse(const std::string &text) {
  std::istringstream in(text);
  return parse_config(in);
}

std::string error_key(const std::string &text) {
  try {
    parse(text);
  } catch (const ConfigError &e) {
    return e.key();
  }
  return "<no error>";
}

} // namespace

TEST(Config, DefaultsAreValid) {
  const PipelineConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.balloon.dt, 0.1);
  EXPECT_EQ(cfg.balloon.damping, 0.35);
  EXPECT_EQ(cfg.morph.grow_threshold, 130.0);
  EXPECT_EQ(cfg.precision.jitter_mm, 2.0);
  const auto vois = cfg.vois();
  ASSERT_EQ(vois.size(), 3u);
  EXPECT_EQ(vois[2].name, "midcyl");
  EXPECT_EQ(vois[2].height_fraction, 0.5);
  EXPECT_EQ(vois[2].radius_fraction, 0.6);
}

TEST(Config, ParsesKeysCommentsAndBlankLines) {
  const PipelineConfig cfg = parse("# comment\n"
                                   "\n"
                                   "balloon.dt = 0.05   # trailing\n"
                                   "  morph.grow_connectivity=6\n"
                                   "precision.fovs = 150, 300\n"
                                   "phantom.posterior_elements = false\n"
                                   "canal.posterior = 0, -1, 0\n"
                                   "io.out_dir = results/run 1\n"
                                   "run.seed = 42\n");
  EXPECT_EQ(cfg.balloon.dt, 0.05);
  EXPECT_EQ(cfg.morph.grow_connectivity, 6);
  EXPECT_EQ(cfg.precision.fovs, (std::vector<double>{150.0, 300.0}));
  EXPECT_FALSE(cfg.phantom.posterior_elements);
  EXPECT_EQ(cfg.canal.posterior, (Vec3{0, -1, 0}));
  EXPECT_EQ(cfg.out_dir, "results/run 1");
  EXPECT_EQ(cfg.seed, 42u);
}

TEST(Config, UnknownKeyIsRejected) {
  EXPECT_EQ(error_key("balloon.dtt = 0.1\n"), "balloon.dtt");
  EXPECT_EQ(error_key("dt = 0.1\n"), "dt");
}

TEST(Config, ErrorsNameTheOffendingKey) {
  EXPECT_EQ(error_key("balloon.dt = -0.1\n"), "balloon.dt");
  EXPECT_EQ(error_key("balloon.dt = 0\n"), "balloon.dt");
  EXPECT_EQ(error_key("balloon.damping = 1.0\n"), "balloon.damping");
  EXPECT_EQ(error_key("balloon.k_smooth = abc\n"), "balloon.k_smooth");
  EXPECT_EQ(error_key("balloon.k_image = 1.5x\n"), "balloon.k_image");
  EXPECT_EQ(error_key("balloon.k_pressure = -1\n"), "balloon.k_pressure");
  EXPECT_EQ(error_key("morph.grow_connectivity = 8\n"), "morph.grow_connectivity");
  EXPECT_EQ(error_key("precision.n_repeats = 1\n"), "precision.n_repeats");
  EXPECT_EQ(error_key("precision.fovs = 150,,300\n"), "precision.fovs");
  EXPECT_EQ(error_key("phantom.posterior_elements = maybe\n"), "phantom.posterior_elements");
  EXPECT_EQ(error_key("vois.midcyl_height = 1.5\n"), "vois.midcyl_height");
  EXPECT_EQ(error_key("calibration.slope = 0\n"), "calibration.slope");
  EXPECT_EQ(error_key("run.seed = -3\n"), "run.seed");
  EXPECT_EQ(error_key("canal.posterior = 1, 2\n"), "canal.posterior");
}

TEST(Config, MissingEqualsSignIsAnError) { EXPECT_THROW(parse("balloon.dt 0.1\n"), ConfigError); }

TEST(Config, MessageContainsKey) {
  try {
    parse("balloon.dt = -1\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError &e) {
    EXPECT_NE(std::string(e.what()).find("balloon.dt"), std::string::npos) << e.what();
  }
}

TEST(Config, DumpParseRoundTrip) {
  PipelineConfig cfg;
  set_config_value(cfg, "balloon.k_smooth", "7.25");
  set_config_value(cfg, "precision.fovs", "120,240.5");
  set_config_value(cfg, "phantom.curvature", "0.003");
  set_config_value(cfg, "phantom.spacing", "0.5,0.5,1");
  set_config_value(cfg, "calibration.intercept", "0.1");
  const std::string text = dump_config(cfg);
  const PipelineConfig back = parse(text);
  EXPECT_EQ(dump_config(back), text);
  EXPECT_EQ(back.balloon.k_smooth, 7.25);
  EXPECT_EQ(back.calibration.intercept, 0.1);
  EXPECT_EQ(back.phantom.spacing, (Vec3{0.5, 0.5, 1.0}));
  // Every key appears exactly once.
  std::istringstream in(text);
  std::set<std::string> keys;
  std::string line;
  while (std::getline(in, line))
    EXPECT_TRUE(keys.insert(line.substr(0, line.find(" = "))).second) << line;
  EXPECT_EQ(keys.size(), detail::config_fields().size());
}

TEST(Config, LoadConfigMissingFileIsInputError) {
  EXPECT_THROW(load_config("/nonexistent/qctseg.conf"), InputError);
}
