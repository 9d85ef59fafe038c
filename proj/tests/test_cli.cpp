// Runs the built command-line tool as a subprocess.
#include "test_util.hpp"

#include <gtest/gtest.h>
#include "json.hpp"

#include <cstdlib>
#include <sys/wait.h>

#ifndef QCT_CLI_PATH
#error "QCT_CLI_PATH must point at the qctseg executable"
#endif

using namespace qct;
using qct::testing::read_file;
using qct::testing::TempDir;

namespace {

struct CliRun {
  int code = -1;
  std::string output;
};

CliRun run_cli(const std::string &args, const TempDir &dir) {
  const auto log = dir / "cli_output.txt";
  const std::string cmd = std::string("\"") + QCT_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.output = read_file(log);
  return r;
}

std::string q(const std::filesystem::path &p) { return "\"" + p.string() + "\""; }

void write(const std::filesystem::path &p, const std::string &text) {
  std::ofstream out(p);
  out << text;
}

} // namespace

TEST(Cli, UsageErrorsExitOne) {
  TempDir dir("cli_usage");
  EXPECT_EQ(run_cli("", dir).code, 1);
  EXPECT_EQ(run_cli("frobnicate", dir).code, 1);
  EXPECT_EQ(run_cli("phantom --seed notanumber", dir).code, 1);
  EXPECT_EQ(run_cli("--help", dir).code, 0);
}

TEST(Cli, NegativeBalloonDtNamesTheKey) {
  TempDir dir("cli_dt");
  write(dir / "bad.conf", "balloon.dt = -0.1\n");
  const CliRun r = run_cli("phantom --config " + q(dir / "bad.conf") + " --out-dir " + q(dir / "out"), dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("balloon.dt"), std::string::npos) << r.output;

  const CliRun s = run_cli("phantom --set balloon.dt=-1 --out-dir " + q(dir / "out"), dir);
  EXPECT_EQ(s.code, 1);
  EXPECT_NE(s.output.find("balloon.dt"), std::string::npos) << s.output;
}

TEST(Cli, UnknownConfigKeyExitsOne) {
  TempDir dir("cli_key");
  write(dir / "bad.conf", "ballon.dt = 0.1\n");
  const CliRun r = run_cli("phantom --config " + q(dir / "bad.conf"), dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("ballon.dt"), std::string::npos) << r.output;
}

TEST(Cli, MissingInputsExitTwo) {
  TempDir dir("cli_input");
  EXPECT_EQ(run_cli("phantom --config " + q(dir / "nope.conf"), dir).code, 2);
  write(dir / "seeds.txt", "10 10 10\n20 20 20\n");
  EXPECT_EQ(run_cli("segment --volume " + q(dir / "nope.hdr") + " --seeds " + q(dir / "seeds.txt") + " --out-dir " +
                        q(dir / "out"),
                    dir)
                .code,
            2);
}

TEST(Cli, SegmentWithoutVolumeIsAConfigError) {
  TempDir dir("cli_novol");
  const CliRun r = run_cli("segment --out-dir " + q(dir / "out"), dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("io.volume"), std::string::npos) << r.output;
}

TEST(Cli, PipelineFailureExitsThree) {
  TempDir dir("cli_pipe");
  save_volume(HuVolume(qct::testing::cube_grid(64), 30.f), dir / "flat.hdr", Dtype::i16);
  write(dir / "seeds.txt", "32 20 50\n32 20 14\n");
  const CliRun r = run_cli("segment --volume " + q(dir / "flat.hdr") + " --seeds " + q(dir / "seeds.txt") +
                            " --out-dir " + q(dir / "out"),
                        dir);
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.output.find("canal"), std::string::npos) << r.output;
}

TEST(Cli, PhantomThenSegmentNoiseless) {
  TempDir dir("cli_seg");
  const auto ph = dir / "ph";
  CliRun r = run_cli("phantom --set phantom.noise_sigma=0 --out-dir " + q(ph), dir);
  ASSERT_EQ(r.code, 0) << r.output;
  for (const char *f : {"phantom.hdr", "phantom.raw", "gt_total.hdr", "gt_body.hdr", "gt_processes.hdr",
                        "gt_trabecular.hdr", "gt_material.hdr", "seeds.txt", "canal_axis.txt", "ground_truth.json"})
    EXPECT_TRUE(std::filesystem::exists(ph / f)) << f;
  const auto truth = nlohmann::json::parse(read_file(ph / "ground_truth.json"));
  const double analytic_mm3 = truth.at("analytic_body_volume_mm3").get<double>();
  EXPECT_NEAR(analytic_mm3, kPi * 15 * 10 * 25, 1e-6);

  const auto out = dir / "seg";
  r = run_cli("segment --volume " + q(ph / "phantom.hdr") + " --seeds " + q(ph / "seeds.txt") + " --out-dir " + q(out),
              dir);
  ASSERT_EQ(r.code, 0) << r.output;
  for (const char *stage : {"canal", "disk_planes", "balloon", "separation", "vcs"})
    EXPECT_NE(r.output.find(std::string("stage ") + stage), std::string::npos) << stage;
  for (const char *f : {"measurements.csv", "segmentation.json", "mask_body.hdr", "mask_trabecular.hdr",
                        "balloon_L1.obj", "balloon_L3.obj"})
    EXPECT_TRUE(std::filesystem::exists(out / f)) << f;

  const auto seg = nlohmann::json::parse(read_file(out / "segmentation.json"));
  EXPECT_EQ(seg.at("spec_version"), "1.0");
  ASSERT_EQ(seg.at("levels").size(), 3u);
  for (const auto &level : seg.at("levels")) {
    double total_cm3 = -1;
    for (const auto &m : level.at("measurements"))
      if (m.at("voi") == "total")
        total_cm3 = m.at("volume_cm3").get<double>();
    EXPECT_NEAR(total_cm3 * 1000.0 / analytic_mm3, 1.0, 0.05) << level.at("level");
    EXPECT_EQ(level.at("frame").at("axes").size(), 3u);
  }

  // export writes the same artifacts without the report.
  const auto ex = dir / "ex";
  r = run_cli("-q export --volume " + q(ph / "phantom.hdr") + " --seeds " + q(ph / "seeds.txt") + " --out-dir " + q(ex),
              dir);
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(std::filesystem::exists(ex / "balloon_L2.obj"));
  EXPECT_TRUE(std::filesystem::exists(ex / "mask_total.hdr"));
  EXPECT_FALSE(std::filesystem::exists(ex / "segmentation.json"));
  EXPECT_EQ(read_file(ex / "mask_body.hdr"), read_file(out / "mask_body.hdr"));
  EXPECT_EQ(read_file(ex / "mask_body.raw"), read_file(out / "mask_body.raw"));
}

TEST(Cli, PrecisionZeroJitterIsAllZeroAndReproducible) {
  TempDir dir("cli_prec");
  write(dir / "small.conf", "precision.n_phantoms = 2\n"
                            "precision.n_repeats = 2\n"
                            "precision.jitter_mm = 0\n"
                            "precision.fovs = 250\n"
                            "precision.matrix = 256\n");
  const std::string base = "-q precision --config " + q(dir / "small.conf") + " --seed 3 --out-dir ";
  ASSERT_EQ(run_cli(base + q(dir / "a"), dir).code, 0);
  ASSERT_EQ(run_cli(base + q(dir / "b"), dir).code, 0);
  EXPECT_EQ(read_file(dir / "a" / "precision.csv"), read_file(dir / "b" / "precision.csv"));
  EXPECT_EQ(read_file(dir / "a" / "precision.json"), read_file(dir / "b" / "precision.json"));

  const auto rep = nlohmann::json::parse(read_file(dir / "a" / "precision.json"));
  EXPECT_EQ(rep.at("seed"), 3);
  ASSERT_EQ(rep.at("results").size(), 3u);
  for (const auto &cell : rep.at("results")) {
    EXPECT_EQ(cell.at("bmd").at("cv_percent").get<double>(), 0.0);
    EXPECT_EQ(cell.at("volume").at("cv_percent").get<double>(), 0.0);
  }
}
