// qctseg command line: phantom | segment | precision | export.
//
// Exit codes: 0 success, 1 configuration error, 2 input error, 3 pipeline failure.

#include "CLI11.hpp"

#include "qctseg/qctseg.hpp"

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace qct;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::vector<std::string> overrides;
};

void add_common(CLI::App *cmd, Common &c) {
  cmd->add_option("--config", c.config, "configuration file (section.key = value lines)");
  cmd->add_option("--seed", c.seed, "global rng seed (overrides run.seed)");
  cmd->add_option("--out-dir", c.out_dir, "output directory (overrides io.out_dir)");
  cmd->add_option("--set", c.overrides, "override one key, e.g. --set balloon.dt=0.05")->take_all();
}

PipelineConfig resolve(const Common &c) {
  PipelineConfig cfg;
  if (!c.config.empty()) {
    std::ifstream in(c.config);
    if (!in)
      throw InputError("cannot open config file '" + c.config + "'");
    cfg = parse_config(in);
  }
  for (const auto &kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError(kv, "--set expects key=value");
    set_config_value(cfg, detail::trim(kv.substr(0, eq)), kv.substr(eq + 1));
  }
  if (c.seed)
    cfg.seed = *c.seed;
  if (!c.out_dir.empty())
    cfg.out_dir = c.out_dir;
  cfg.validate();
  return cfg;
}

void write_lines(const fs::path &path, const std::vector<Vec3> &pts, const std::string &header) {
  std::ofstream out(path);
  if (!out)
    throw InputError("cannot write '" + path.string() + "'");
  out << "# " << header << '\n';
  out.precision(17);
  for (const auto &p : pts)
    out << p.x << ' ' << p.y << ' ' << p.z << '\n';
}

int cmd_phantom(const Common &c, Log &log) {
  const PipelineConfig cfg = resolve(c);
  PhantomSpec spec = cfg.phantom;
  spec.seed = cfg.seed;
  const fs::path dir = cfg.out_dir;
  fs::create_directories(dir);
  detail::Stopwatch sw;
  const auto [vol, gt] = generate_phantom(spec);
  log.info("stage phantom done in " + detail::fmt_seconds(sw.seconds()));
  save_volume(vol, dir / "phantom.hdr", Dtype::i16);
  save_volume(gt.total, dir / "gt_total.hdr", Dtype::u8);
  save_volume(gt.body, dir / "gt_body.hdr", Dtype::u8);
  save_volume(gt.processes, dir / "gt_processes.hdr", Dtype::u8);
  save_volume(gt.trabecular, dir / "gt_trabecular.hdr", Dtype::u8);
  save_volume(gt.material, dir / "gt_material.hdr", Dtype::u8);
  write_seeds(gt.centers(), dir / "seeds.txt");
  write_lines(dir / "canal_axis.txt", gt.canal_axis, "true canal axis (mm), cranial to caudal");
  nlohmann::ordered_json j;
  j["spec_version"] = kReportSchemaVersion;
  j["analytic_body_volume_mm3"] = analytic_volume(spec);
  j["analytic_bmd_mg_cm3"] = analytic_bmd(spec, cfg.calibration);
  j["levels"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < gt.frames.size(); ++i)
    j["levels"].push_back({{"level", level_name(i)},
                           {"center", detail::vec_json(gt.frames[i].center)},
                           {"axial", detail::vec_json(gt.frames[i].axial)},
                           {"posterior", detail::vec_json(gt.frames[i].posterior)}});
  detail::write_text(dir / "ground_truth.json", j.dump(2) + "\n");
  log.info("wrote phantom to " + dir.string());
  return 0;
}

struct SegmentInputs {
  std::string volume;
  std::string seeds;
};

SegmentationResult run_segment(const PipelineConfig &cfg, const SegmentInputs &in, HuVolume &vol, Log &log) {
  const std::string vpath = in.volume.empty() ? cfg.volume_path : in.volume;
  const std::string spath = in.seeds.empty() ? cfg.seeds_path : in.seeds;
  if (vpath.empty())
    throw ConfigError("io.volume", "no input volume (use --volume or io.volume)");
  if (spath.empty())
    throw ConfigError("io.seeds", "no seed file (use --seeds or io.seeds)");
  vol = load_volume<float>(vpath);
  const auto centers = read_seeds(spath);
  log.info("loaded " + vpath + " and " + std::to_string(centers.size()) + " centers");
  detail::Stopwatch sw;
  SegmentationResult res = segment(vol, centers, cfg, &log);
  log.info("pipeline done in " + detail::fmt_seconds(sw.seconds()));
  return res;
}

int cmd_segment(const Common &c, const SegmentInputs &in, Log &log) {
  const PipelineConfig cfg = resolve(c);
  HuVolume vol;
  const SegmentationResult res = run_segment(cfg, in, vol, log);
  write_segmentation_report(res, cfg, cfg.out_dir);
  write_segmentation_artifacts(res, vol.grid(), cfg.out_dir);
  log.info("wrote segmentation to " + cfg.out_dir);
  return 0;
}

int cmd_export(const Common &c, const SegmentInputs &in, Log &log) {
  const PipelineConfig cfg = resolve(c);
  HuVolume vol;
  const SegmentationResult res = run_segment(cfg, in, vol, log);
  write_segmentation_artifacts(res, vol.grid(), cfg.out_dir);
  log.info("wrote meshes and masks to " + cfg.out_dir);
  return 0;
}

int cmd_precision(const Common &c, Log &log) {
  const PipelineConfig cfg = resolve(c);
  detail::Stopwatch sw;
  const PrecisionReport rep = precision_study(cfg, &log);
  log.info("precision study done in " + detail::fmt_seconds(sw.seconds()));
  write_precision_report(rep, cfg, cfg.out_dir);
  for (const auto &cell : rep.cells)
    log.info("voi " + cell.voi + " fov " + detail::num(cell.fov_mm) + ": BMD %CV " + detail::num(cell.bmd.cv_percent) +
             ", volume %CV " + detail::num(cell.volume.cv_percent) + " (n=" + std::to_string(cell.n_effective) + ")");
  log.info("wrote precision report to " + cfg.out_dir);
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Vertebral QCT segmentation and precision analysis"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "suppress the stage log");

  Common phantom_opts, segment_opts, precision_opts, export_opts;
  SegmentInputs segment_in, export_in;
  auto *phantom = app.add_subcommand("phantom", "generate a synthetic phantom with ground truth");
  add_common(phantom, phantom_opts);
  auto *seg = app.add_subcommand("segment", "segment one volume from a seed file");
  add_common(seg, segment_opts);
  seg->add_option("--volume", segment_in.volume, "volume header file");
  seg->add_option("--seeds", segment_in.seeds, "vertebra centers, one 'x y z' per line");
  auto *prec = app.add_subcommand("precision", "repeat-analysis precision study on phantoms");
  add_common(prec, precision_opts);
  auto *exp = app.add_subcommand("export", "write balloon meshes (OBJ) and u8 masks");
  add_common(exp, export_opts);
  exp->add_option("--volume", export_in.volume, "volume header file");
  exp->add_option("--seeds", export_in.seeds, "vertebra centers, one 'x y z' per line");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  Log log(quiet ? nullptr : &std::cerr);
  try {
    if (phantom->parsed())
      return cmd_phantom(phantom_opts, log);
    if (seg->parsed())
      return cmd_segment(segment_opts, segment_in, log);
    if (prec->parsed())
      return cmd_precision(precision_opts, log);
    if (exp->parsed())
      return cmd_export(export_opts, export_in, log);
  } catch (const ConfigError &e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const InputError &e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const PipelineError &e) {
    std::cerr << "pipeline error: " << e.what() << '\n';
    return 3;
  } catch (const Error &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::filesystem::filesystem_error &e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
