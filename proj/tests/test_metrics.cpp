#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace qct;

namespace {

PipelineConfig small_study(double jitter) {
  PipelineConfig cfg;
  cfg.precision.n_phantoms = 2;
  cfg.precision.n_repeats = 2;
  cfg.precision.jitter_mm = jitter;
  cfg.precision.fovs = {250.0};
  cfg.precision.matrix = 256;
  cfg.precision.threads = 1;
  return cfg;
}

} // namespace

TEST(VoiStats, UniformValueAndVolume) {
  const Volume<double> bmd(qct::testing::cube_grid(12), 120.0);
  LabelMask m(bmd.grid(), 0);
  for (int k = 0; k < 10; ++k)
    for (int j = 0; j < 10; ++j)
      for (int i = 0; i < 10; ++i)
        m.at(i, j, k) = 1;
  const VoiStats s = voi_stats(bmd, m);
  EXPECT_DOUBLE_EQ(s.mean, 120.0);
  EXPECT_DOUBLE_EQ(s.volume_cm3, 1.0);
  EXPECT_EQ(s.voxels, 1000u);
}

TEST(VoiStats, SingleVoxelAndAnisotropicVolume) {
  GridGeometry g = qct::testing::cube_grid(4);
  g.spacing = {0.5, 0.5, 2.0};
  Volume<double> bmd(g, 0.0);
  bmd.at(1, 2, 3) = 87.25;
  LabelMask m(g, 0);
  m.at(1, 2, 3) = 1;
  const VoiStats s = voi_stats(bmd, m);
  EXPECT_DOUBLE_EQ(s.mean, 87.25);
  EXPECT_DOUBLE_EQ(s.volume_cm3, 0.0005);
}

TEST(VoiStats, VolumeIsAdditiveOverDisjointMasks) {
  const auto g = qct::testing::cube_grid(12, 0.7);
  const Volume<double> bmd(g, 1.0);
  const LabelMask a = qct::testing::random_mask(g, 0.3, 11);
  LabelMask b(g, 0), u(g, 0);
  const LabelMask r = qct::testing::random_mask(g, 0.3, 12);
  for (std::size_t i = 0; i < u.size(); ++i) {
    b[i] = r[i] && !a[i];
    u[i] = a[i] || b[i];
  }
  EXPECT_NEAR(voi_stats(bmd, u).volume_cm3, voi_stats(bmd, a).volume_cm3 + voi_stats(bmd, b).volume_cm3, 1e-12);
}

TEST(VoiStats, Errors) {
  const Volume<double> bmd(qct::testing::cube_grid(3), 1.0);
  EXPECT_THROW(voi_stats(bmd, LabelMask(bmd.grid(), 0)), PipelineError);
  EXPECT_THROW(voi_stats(bmd, LabelMask(qct::testing::cube_grid(4), 1)), InputError);
}

TEST(CvPercent, Examples) {
  EXPECT_EQ(cv_percent({100.0, 100.0, 100.0}), 0.0);
  EXPECT_EQ(cv_percent({98.0, 100.0, 102.0}), 2.0);
  EXPECT_EQ(cv_percent({50.0, 50.0}), 0.0);
  // Sample SD of (1, 2, 3, 4) is sqrt(5/3).
  EXPECT_NEAR(cv_percent({1.0, 2.0, 3.0, 4.0}), 100.0 * std::sqrt(5.0 / 3.0) / 2.5, 1e-12);
}

TEST(CvPercent, ScaleInvariant) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(50.0, 150.0), k(0.01, 100.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(2 + trial % 5);
    for (auto &x : v)
      x = u(rng);
    const double c = k(rng);
    std::vector<double> w = v;
    for (auto &x : w)
      x *= c;
    EXPECT_NEAR(cv_percent(w), cv_percent(v), 1e-9);
  }
}

TEST(CvPercent, Errors) {
  EXPECT_THROW(cv_percent({1.0}), InputError);
  EXPECT_THROW(cv_percent({-1.0, 1.0}), InputError);
}

TEST(RmsCv, Examples) {
  EXPECT_EQ(rms_cv({2.5}).cv_percent, 2.5);
  EXPECT_NEAR(rms_cv({3.0, 4.0}).cv_percent, 3.5355, 1e-4);
  EXPECT_EQ(rms_cv({0.0, 0.0, 0.0}).cv_percent, 0.0);
  const std::vector<double> cvs{1.0, 2.0}, sds{3.0, 4.0};
  const RmsSummary s = rms_cv(cvs, sds);
  EXPECT_NEAR(s.sd, std::sqrt(12.5), 1e-12);
  EXPECT_EQ(s.n, 2u);
}

TEST(RmsCv, Errors) {
  EXPECT_THROW(rms_cv(std::span<const double>{}), InputError);
  const std::vector<double> cvs{1.0, 2.0}, sds{3.0};
  EXPECT_THROW(rms_cv(cvs, sds), InputError);
}

TEST(PrecisionStudy, JitterHelpers) {
  const std::vector<Vec3> pts{{1, 2, 3}, {4, 5, 6}};
  EXPECT_EQ(jitter_points(pts, 0.0, 9), pts);
  const auto a = jitter_points(pts, 2.0, 9), b = jitter_points(pts, 2.0, 9);
  EXPECT_EQ(a, b);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    EXPECT_LE(std::abs(a[i].x - pts[i].x), 2.0);
    EXPECT_LE(std::abs(a[i].y - pts[i].y), 2.0);
    EXPECT_LE(std::abs(a[i].z - pts[i].z), 2.0);
  }
  EXPECT_NE(jitter_points(pts, 2.0, 10), a);
  EXPECT_NE(derive_seed(1, {0, 0, 1}), derive_seed(1, {0, 1, 0}));
}

TEST(PrecisionStudy, ZeroJitterGivesAllZeroCvs) {
  const PrecisionReport rep = precision_study(small_study(0.0));
  EXPECT_TRUE(rep.failures.empty());
  ASSERT_EQ(rep.cells.size(), rep.voi_names.size() * 1);
  for (const auto &c : rep.cells) {
    EXPECT_EQ(c.n_effective, 2);
    EXPECT_EQ(c.bmd.cv_percent, 0.0) << c.voi;
    EXPECT_EQ(c.volume.cv_percent, 0.0) << c.voi;
    EXPECT_EQ(c.bmd.sd, 0.0);
    EXPECT_EQ(c.volume.sd, 0.0);
  }
}

TEST(PrecisionStudy, StructureAndReproducibility) {
  PipelineConfig cfg = small_study(2.0);
  cfg.precision.fovs = {150.0, 250.0};
  const PrecisionReport a = precision_study(cfg);
  const PrecisionReport b = precision_study(cfg);
  const std::size_t nv = a.voi_names.size();
  EXPECT_EQ(nv, cfg.vois().size());
  EXPECT_EQ(a.cells.size(), nv * 2);
  EXPECT_EQ(a.rows.size(), 2u * 2u * nv * 2u);
  for (const auto &c : a.cells) {
    EXPECT_GE(c.bmd.cv_percent, 0.0);
    EXPECT_GE(c.volume.cv_percent, 0.0);
    // Aggregation reproduces the RMS of the retained per-phantom CVs.
    EXPECT_DOUBLE_EQ(c.bmd.cv_percent, root_mean_square(c.bmd.per_phantom_cv));
    EXPECT_DOUBLE_EQ(c.volume.sd, root_mean_square(c.volume.per_phantom_sd));
  }
  EXPECT_EQ(precision_csv(a), precision_csv(b));
  EXPECT_EQ(precision_json(a, cfg).dump(2), precision_json(b, cfg).dump(2));
}
