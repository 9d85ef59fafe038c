// CSV/JSON reports and segmentation artifacts (masks, meshes).
#pragma once

#include "json.hpp"

#include "errors.hpp"
#include "mesh.hpp"
#include "pipeline.hpp"
#include "precision.hpp"
#include "volume_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

namespace qct {

inline constexpr const char *kReportSchemaVersion = "1.0";

inline constexpr const char *kSurrogateNote =
    "Surrogate study: synthetic vertebral phantoms with known geometry replace patient scans; "
    "FOV variation is simulated by in-plane resampling.";

inline constexpr const char *kSdDefinition = "RMS over phantoms of the per-phantom sample SD (n-1) across repeats";

namespace detail {

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline void write_text(const std::filesystem::path &path, const std::string &text) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw InputError("cannot write '" + path.string() + "'");
  out << text;
  if (!out)
    throw InputError("failed writing '" + path.string() + "'");
}

inline nlohmann::ordered_json vec_json(const Vec3 &v) { return nlohmann::ordered_json::array({v.x, v.y, v.z}); }

inline std::string voi_description(const VoiSpec &s) {
  switch (s.kind) {
  case VoiSpec::Kind::whole_body:
    return "segmented vertebral body (total volume)";
  case VoiSpec::Kind::whole_trabecular:
    return "whole trabecular compartment";
  case VoiSpec::Kind::cylinder:
    return "elliptic cylinder along the vertebral z-axis centered at O; height " + num(s.height_fraction) +
           " x body height, semi-axes " + num(s.radius_fraction) +
           " x body half-extents along x and y; intersected with the trabecular compartment";
  }
  return {};
}

} // namespace detail

// ---------------------------------------------------------------------------
// Precision study

inline std::string precision_csv(const PrecisionReport &rep) {
  std::string s = "phantom,fov_mm,voi,repeat,status,bmd_mg_cm3,volume_cm3\n";
  for (const auto &r : rep.rows) {
    s += std::to_string(r.phantom) + "," + detail::num(r.fov_mm) + "," + r.voi + "," + std::to_string(r.repeat) + "," +
         (r.ok ? "ok" : "failed") + "," + (r.ok ? detail::num(r.bmd) : "") + "," +
         (r.ok ? detail::num(r.volume_cm3) : "") + "\n";
  }
  return s;
}

inline nlohmann::ordered_json precision_json(const PrecisionReport &rep, const PipelineConfig &cfg) {
  using J = nlohmann::ordered_json;
  J j;
  j["spec_version"] = kReportSchemaVersion;
  j["study"] = kSurrogateNote;
  j["sd_definition"] = kSdDefinition;
  j["cv_definition"] = "per phantom: 100 * sample SD / mean over repeats of the level-averaged value; "
                       "aggregated as the RMS over phantoms";
  j["n_phantoms"] = rep.n_phantoms;
  j["n_repeats"] = rep.n_repeats;
  j["seed_jitter_mm"] = rep.jitter_mm;
  j["seed"] = cfg.seed;
  J vois = J::object();
  for (const auto &v : cfg.vois())
    vois[v.name] = detail::voi_description(v);
  j["vois"] = vois;
  J results = J::array();
  for (const auto &c : rep.cells) {
    J cell;
    cell["voi"] = c.voi;
    cell["fov_mm"] = c.fov_mm;
    cell["n_effective"] = c.n_effective;
    cell["phantoms"] = c.phantoms;
    auto quantity = [](const QuantitySummary &q, const char *unit) {
      J o;
      o["cv_percent"] = q.cv_percent;
      o["sd"] = q.sd;
      o["sd_unit"] = unit;
      o["per_phantom_cv_percent"] = q.per_phantom_cv;
      o["per_phantom_sd"] = q.per_phantom_sd;
      return o;
    };
    cell["bmd"] = quantity(c.bmd, "mg/cm3");
    cell["volume"] = quantity(c.volume, "cm3");
    results.push_back(cell);
  }
  j["results"] = results;
  j["failures"] = rep.failures;
  j["warnings"] = rep.warnings;
  return j;
}

inline void write_precision_report(const PrecisionReport &rep, const PipelineConfig &cfg,
                                   const std::filesystem::path &dir) {
  detail::write_text(dir / "precision.csv", precision_csv(rep));
  detail::write_text(dir / "precision.json", precision_json(rep, cfg).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Segmentation

inline std::string measurements_csv(const SegmentationResult &res) {
  std::string s = "level,voi,bmd_mg_cm3,volume_cm3,voxels\n";
  for (const auto &m : res.measurements)
    s += m.level + "," + m.voi + "," + detail::num(m.stats.mean) + "," + detail::num(m.stats.volume_cm3) + "," +
         std::to_string(m.stats.voxels) + "\n";
  return s;
}

inline nlohmann::ordered_json segmentation_json(const SegmentationResult &res, const PipelineConfig &cfg) {
  using J = nlohmann::ordered_json;
  J j;
  j["spec_version"] = kReportSchemaVersion;
  J vois = J::object();
  for (const auto &v : cfg.vois())
    vois[v.name] = detail::voi_description(v);
  j["vois"] = vois;
  J canal = J::array();
  for (const auto &p : res.landmarks.canal)
    canal.push_back(detail::vec_json(p));
  j["canal_centerline"] = canal;
  J planes = J::array();
  for (const auto &p : res.landmarks.disk_planes)
    planes.push_back({{"point", detail::vec_json(p.point)}, {"normal", detail::vec_json(p.normal)}});
  j["disk_planes"] = planes;
  J levels = J::array();
  for (const auto &v : res.vertebrae) {
    J l;
    l["level"] = v.level;
    l["center"] = detail::vec_json(v.cylinder.base);
    l["cylinder"] = {{"axis", detail::vec_json(v.cylinder.axis)}, {"radius", v.cylinder.radius}};
    l["balloon"] = {{"converged", v.balloon.converged},
                    {"iterations", v.balloon.iterations},
                    {"vertices", v.balloon.mesh.vertex_count()},
                    {"enclosed_volume_mm3", enclosed_volume(v.balloon.mesh)}};
    l["separation_erosions"] = v.separation_erosions;
    // Origin, then the x, y and z axes as row vectors.
    l["frame"] = {{"origin", detail::vec_json(v.frame.origin)},
                  {"axes", J::array({detail::vec_json(v.frame.x), detail::vec_json(v.frame.y), detail::vec_json(v.frame.z)})}};
    J m = J::array();
    for (const auto &meas : res.measurements)
      if (meas.level == v.level)
        m.push_back({{"voi", meas.voi},
                     {"bmd_mg_cm3", meas.stats.mean},
                     {"volume_cm3", meas.stats.volume_cm3},
                     {"voxels", meas.stats.voxels}});
    l["measurements"] = m;
    levels.push_back(l);
  }
  j["levels"] = levels;
  j["warnings"] = res.warnings;
  return j;
}

/// Label masks on the full grid (label = level index + 1) and one OBJ per balloon.
inline void write_segmentation_artifacts(const SegmentationResult &res, const GridGeometry &grid,
                                         const std::filesystem::path &dir) {
  std::filesystem::create_directories(dir);
  LabelMask total(grid, 0), body(grid, 0), processes(grid, 0), trabecular(grid, 0);
  for (std::size_t i = 0; i < res.vertebrae.size(); ++i) {
    const auto &v = res.vertebrae[i];
    const auto label = static_cast<std::uint8_t>(i + 1);
    paste_label(total, v.total, v.box, label);
    paste_label(body, v.body, v.box, label);
    paste_label(processes, v.processes, v.box, label);
    paste_label(trabecular, v.trabecular, v.box, label);
    write_obj(v.balloon.mesh, dir / ("balloon_" + v.level + ".obj"));
  }
  save_volume(total, dir / "mask_total.hdr", Dtype::u8);
  save_volume(body, dir / "mask_body.hdr", Dtype::u8);
  save_volume(processes, dir / "mask_processes.hdr", Dtype::u8);
  save_volume(trabecular, dir / "mask_trabecular.hdr", Dtype::u8);
}

inline void write_segmentation_report(const SegmentationResult &res, const PipelineConfig &cfg,
                                      const std::filesystem::path &dir) {
  detail::write_text(dir / "measurements.csv", measurements_csv(res));
  detail::write_text(dir / "segmentation.json", segmentation_json(res, cfg).dump(2) + "\n");
}

} // namespace qct
