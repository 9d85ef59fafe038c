#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

using namespace qct;
using qct::testing::TempDir;

namespace {

PhantomSpec noiseless(double curvature = 0.0) {
  PhantomSpec s;
  s.noise_sigma = 0.0;
  s.curvature = curvature;
  return s;
}

// Independent oracle: distance from p to the densely sampled true axis.
double distance_to_samples(const Vec3 &p, const std::vector<Vec3> &pts) {
  double best = 1e300;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    for (int s = 0; s <= 20; ++s) {
      const Vec3 q = pts[i] + (pts[i + 1] - pts[i]) * (s / 20.0);
      best = std::min(best, distance(p, q));
    }
  }
  return best;
}

} // namespace

TEST(Seeds, ReadsPointsInFileOrder) {
  TempDir dir("seeds");
  {
    std::ofstream out(dir / "s.txt");
    out << "# centers\n1 2 3\n\n  4.5 5.5 6.5  # mid\n-7 8e1 9\n";
  }
  const auto pts = read_seeds(dir / "s.txt");
  ASSERT_EQ(pts.size(), 3u);
  EXPECT_EQ(pts[0], (Vec3{1, 2, 3}));
  EXPECT_EQ(pts[1], (Vec3{4.5, 5.5, 6.5}));
  EXPECT_EQ(pts[2], (Vec3{-7, 80, 9}));
}

TEST(Seeds, RejectsEmptyMalformedAndMissing) {
  TempDir dir("seeds");
  { std::ofstream out(dir / "empty.txt"); }
  EXPECT_THROW(read_seeds(dir / "empty.txt"), InputError);
  {
    std::ofstream out(dir / "one.txt");
    out << "1 2 3\n";
  }
  EXPECT_THROW(read_seeds(dir / "one.txt"), InputError);
  {
    std::ofstream out(dir / "bad.txt");
    out << "1 2 3\n4 five 6\n";
  }
  EXPECT_THROW(read_seeds(dir / "bad.txt"), InputError);
  {
    std::ofstream out(dir / "extra.txt");
    out << "1 2 3\n4 5 6 7\n";
  }
  EXPECT_THROW(read_seeds(dir / "extra.txt"), InputError);
  EXPECT_THROW(read_seeds(dir / "absent.txt"), InputError);
}

TEST(Seeds, PhantomCentersRoundTrip) {
  TempDir dir("seeds");
  PhantomSpec s = noiseless(0.003);
  const auto [vol, gt] = generate_phantom(s);
  write_seeds(gt.centers(), dir / "c.txt");
  const auto back = read_seeds(dir / "c.txt");
  ASSERT_EQ(back.size(), gt.frames.size());
  for (std::size_t i = 0; i < back.size(); ++i)
    EXPECT_LT(distance(back[i], gt.frames[i].center), 1e-6);
}

TEST(Canal, StraightPhantomWithinOneMillimetre) {
  const auto [vol, gt] = generate_phantom(noiseless());
  const auto centers = gt.centers();
  const auto line = detect_canal_centerline(vol, centers);
  ASSERT_GE(line.size(), 2u);
  for (const auto &p : line)
    EXPECT_LT(distance_to_samples(p, gt.canal_axis), 1.0) << p;
  EXPECT_GE(line.front().z, centers.front().z);
  EXPECT_LE(line.back().z, centers.back().z);
  for (std::size_t i = 1; i < line.size(); ++i)
    EXPECT_LT(line[i].z, line[i - 1].z);
}

TEST(Canal, CurvedPhantomWithinBallRadius) {
  const auto [vol, gt] = generate_phantom(noiseless(0.002));
  const RollingBallParams prm;
  const auto line = detect_canal_centerline(vol, gt.centers(), prm);
  double worst = 0;
  for (const auto &p : line)
    worst = std::max(worst, distance_to_samples(p, gt.canal_axis));
  EXPECT_LT(worst, prm.radius);
}

TEST(Canal, NoisyPhantomStaysNearAxis) {
  PhantomSpec s;
  s.noise_sigma = 15.0;
  const auto [vol, gt] = generate_phantom(s);
  const auto line = detect_canal_centerline(vol, gt.centers());
  for (const auto &p : line)
    EXPECT_LT(distance_to_samples(p, gt.canal_axis), 1.5);
}

// Regression: the ball used to extrapolate its drift through the open
// stretches between arches and wander out of the canal.
TEST(Canal, JitteredSeedsStayNearAxis) {
  const auto [vol, gt] = generate_phantom(PhantomSpec{});
  for (std::uint64_t seed = 100; seed < 112; ++seed) {
    const auto line = detect_canal_centerline(vol, jitter_points(gt.centers(), 2.0, seed));
    double worst = 0.0;
    for (const auto &p : line)
      worst = std::max(worst, distance_to_samples(p, gt.canal_axis));
    EXPECT_LT(worst, 1.5) << "jitter seed " << seed;
  }
}

TEST(Canal, UniformVolumeIsAnError) {
  const HuVolume vol(qct::testing::cube_grid(64), 30.f);
  const std::vector<Vec3> centers{{32, 20, 50}, {32, 20, 14}};
  EXPECT_THROW(detect_canal_centerline(vol, centers), Error);
  EXPECT_THROW(detect_canal_centerline(vol, {centers[0]}), InputError);
}

TEST(DiskPlanes, NoiselessPlanesLieInsideTheGaps) {
  const PhantomSpec s = noiseless();
  const auto [vol, gt] = generate_phantom(s);
  const auto centers = gt.centers();
  const auto planes = fit_disk_planes(vol, centers);
  ASSERT_EQ(planes.size(), centers.size() - 1);
  for (std::size_t i = 0; i < planes.size(); ++i) {
    const Vec3 mid = (centers[i] + centers[i + 1]) * 0.5;
    const double along = dot(planes[i].point - mid, normalized(centers[i] - centers[i + 1]));
    EXPECT_LT(std::abs(along), s.disk_gap / 2);
    // Voxelized gap: slices strictly between the two bodies' bone slices.
    double upper_bottom = 1e300, lower_top = -1e300;
    const GridGeometry &g = vol.grid();
    for (std::size_t idx = 0; idx < g.size(); ++idx) {
      const double z = g.center(g.unravel(idx)).z;
      if (gt.total[idx] == i + 1)
        upper_bottom = std::min(upper_bottom, z);
      if (gt.body[idx] == i + 2)
        lower_top = std::max(lower_top, z);
    }
    EXPECT_GT(planes[i].point.z, lower_top);
    EXPECT_LT(planes[i].point.z, upper_bottom);
    EXPECT_LT(std::abs(planes[i].point.z - 0.5 * (upper_bottom + lower_top)), 0.5);
    EXPECT_LT(planes[i].normal.z, 0.0) << "normal must point caudally";
  }
}

TEST(DiskPlanes, SymmetricGapGivesMidplane) {
  // Two bone slabs mirrored about z = 32 on the voxel grid.
  const GridGeometry g = qct::testing::cube_grid(64);
  HuVolume vol(g, 30.f);
  for (int k = 0; k < 64; ++k)
    for (int j = 0; j < 64; ++j)
      for (int i = 0; i < 64; ++i) {
        const Vec3 p = g.center(i, j, k);
        const bool disk = std::hypot(p.x - 32, p.y - 32) <= 12;
        if (disk && ((p.z > 10 && p.z < 26) || (p.z > 38 && p.z < 54)))
          vol.at(i, j, k) = 600.f;
      }
  const auto planes = fit_disk_planes(vol, std::vector<Vec3>{{32, 32, 46}, {32, 32, 18}});
  ASSERT_EQ(planes.size(), 1u);
  EXPECT_LT(std::abs(planes[0].point.z - 32.0), 0.5);
  EXPECT_NEAR(planes[0].normal.z, -1.0, 1e-12);
}

TEST(DiskPlanes, CurvedPhantomNormalsFollowTheColumn) {
  const PhantomSpec s = noiseless(0.004);
  const auto [vol, gt] = generate_phantom(s);
  const auto centers = gt.centers();
  const auto planes = fit_disk_planes(vol, centers);
  for (std::size_t i = 0; i < planes.size(); ++i) {
    const Vec3 dir = normalized(centers[i + 1] - centers[i]);
    EXPECT_GT(dot(planes[i].normal, dir), std::cos(30.0 * kPi / 180.0));
    const Vec3 mid = (centers[i] + centers[i + 1]) * 0.5;
    EXPECT_LT(distance(planes[i].point, mid), s.disk_gap / 2);
  }
}

TEST(DiskPlanes, FlatObjectiveFallsBackToMidpoint) {
  const HuVolume vol(qct::testing::cube_grid(64), 500.f);
  const std::vector<Vec3> centers{{32, 30, 50}, {33, 31, 14}};
  const auto planes = fit_disk_planes(vol, centers);
  ASSERT_EQ(planes.size(), 1u);
  const Vec3 mid = (centers[0] + centers[1]) * 0.5;
  EXPECT_LT(distance(planes[0].point, mid), 1e-9);
  const Vec3 dir = normalized(centers[1] - centers[0]);
  EXPECT_NEAR(dot(planes[0].normal, dir), 1.0, 1e-12);
  EXPECT_THROW(fit_disk_planes(vol, std::vector<Vec3>{{1, 1, 1}, {1, 1, 1}}), InputError);
}

TEST(Cylinders, RadiusFromCanalDistance) {
  const std::vector<Vec3> centers{{0, 0, 40}, {0, 0, 0}};
  const std::vector<Plane> planes{{{0, 0, 20}, {0, 0, -1}}};
  const std::vector<Vec3> canal{{0, 30, 60}, {0, 30, -20}};
  CylinderParams prm;
  prm.margin = 5.0;
  const auto cyl = build_cylinders(centers, planes, canal, prm);
  ASSERT_EQ(cyl.size(), 2u);
  EXPECT_DOUBLE_EQ(cyl[0].radius, 25.0);
  EXPECT_DOUBLE_EQ(cyl[1].radius, 25.0);
  EXPECT_NEAR(norm(cyl[0].axis), 1.0, 1e-9);
  prm.margin = 25.0;
  EXPECT_THROW(build_cylinders(centers, planes, canal, prm), PipelineError);
  EXPECT_THROW(build_cylinders(centers, {}, canal, {}), InputError);
}

TEST(Cylinders, CapsSplitAPointOnTheSharedPlane) {
  const std::vector<Vec3> centers{{0, 0, 40}, {0, 0, 0}};
  const std::vector<Plane> planes{{{0, 0, 20}, {0, 0, -1}}};
  const std::vector<Vec3> canal{{0, 30, 60}, {0, 30, -20}};
  const auto cyl = build_cylinders(centers, planes, canal, {});
  const Vec3 on_plane{1, 1, 20};
  EXPECT_NE(cyl[0].contains(on_plane), cyl[1].contains(on_plane));
  EXPECT_TRUE(cyl[0].contains(centers[0]));
  EXPECT_TRUE(cyl[1].contains(centers[1]));
  EXPECT_FALSE(cyl[0].contains({0, 0, 19}));
  EXPECT_TRUE(cyl[0].contains(cyl[0].clamp({100, 0, 0})));
}

namespace {

void check_cylinders_on_phantom(double curvature) {
  const auto [vol, gt] = generate_phantom(noiseless(curvature));
  const auto centers = gt.centers();
  const auto canal = detect_canal_centerline(vol, centers);
  const auto planes = fit_disk_planes(vol, centers);
  const auto cyl = build_cylinders(centers, planes, canal);
  ASSERT_EQ(cyl.size(), centers.size());
  const GridGeometry &g = vol.grid();
  std::vector<LabelMask> masks;
  for (std::size_t i = 0; i < cyl.size(); ++i) {
    EXPECT_TRUE(cyl[i].contains(centers[i]));
    masks.push_back(cylinder_mask(g, cyl[i]));
  }
  for (std::size_t idx = 0; idx < g.size(); ++idx) {
    int owners = 0;
    for (const auto &m : masks)
      owners += m[idx];
    ASSERT_LE(owners, 1) << "voxel " << idx;
    if (gt.body[idx]) {
      ASSERT_TRUE(masks[gt.body[idx] - 1u][idx]) << "body voxel " << idx << " outside its cylinder";
    }
  }
  // The crop box covers every cylinder voxel.
  for (std::size_t i = 0; i < cyl.size(); ++i) {
    const IndexBox box = cylinder_bounds(g, cyl[i], 0);
    std::size_t inside_box = 0;
    for (int k = box.lo.k; k < box.hi.k; ++k)
      for (int j = box.lo.j; j < box.hi.j; ++j)
        for (int ii = box.lo.i; ii < box.hi.i; ++ii)
          inside_box += masks[i].at(ii, j, k);
    EXPECT_EQ(inside_box, count_nonzero(masks[i]));
  }
}

} // namespace

TEST(Cylinders, StraightPhantomContainsBodiesAndIsDisjoint) { check_cylinders_on_phantom(0.0); }

TEST(Cylinders, CurvedPhantomContainsBodiesAndIsDisjoint) { check_cylinders_on_phantom(0.004); }
