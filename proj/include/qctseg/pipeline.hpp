// End-to-end segmentation of one volume from operator-marked centers:
// landmarks, per-vertebra balloon and voxel refinement, frames, VOIs and
// measurements. Every stage is timed and logged.
#pragma once

#include "balloon.hpp"
#include "config.hpp"
#include "errors.hpp"
#include "landmarks.hpp"
#include "metrics.hpp"
#include "morphology.hpp"
#include "phantom.hpp"
#include "vcs.hpp"
#include "volume.hpp"
#include "voxelize.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>
#include <mutex>
#include <string>
#include <vector>

namespace qct {

/// Line-oriented logger shared between threads. A null stream silences it.
class Log {
public:
  explicit Log(std::ostream *out = nullptr) : out_(out) {}

  void info(const std::string &msg) { write("info", msg); }
  void warn(const std::string &msg) { write("warn", msg); }

private:
  void write(const char *level, const std::string &msg) {
    if (!out_)
      return;
    std::lock_guard lock(mu_);
    *out_ << '[' << level << "] " << msg << '\n';
    out_->flush();
  }
  std::ostream *out_;
  std::mutex mu_;
};

struct StageTiming {
  std::string stage;
  std::string level; ///< empty for whole-volume stages
  double seconds = 0.0;
};

struct VoiMeasurement {
  std::string level;
  std::string voi;
  VoiStats stats;
};

struct VertebraResult {
  std::string level;
  Cylinder cylinder;
  IndexBox box; ///< crop of the input grid the masks below live on
  BalloonResult balloon;
  LabelMask total;
  LabelMask body;
  LabelMask processes;
  LabelMask trabecular;
  int separation_erosions = 0;
  Vec3 cov;
  VCSFrame frame;
  std::vector<NamedMask> vois;
};

struct SegmentationResult {
  LandmarkSet landmarks;
  std::vector<VertebraResult> vertebrae;
  std::vector<VoiMeasurement> measurements;
  std::vector<StageTiming> timings;
  std::vector<std::string> warnings;
};

namespace detail {

class Stopwatch {
public:
  Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

private:
  std::chrono::steady_clock::time_point t0_;
};

inline std::string fmt_seconds(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f s", s);
  return buf;
}

/// Largest 26-connected component (first in scan order on ties).
inline LabelMask largest_component(const LabelMask &m) {
  const Components c = connected_components(m, 26);
  LabelMask out(m.grid(), 0);
  if (c.count() == 0)
    return out;
  std::size_t best = 0;
  for (std::size_t i = 1; i < c.count(); ++i)
    if (c.sizes[i] > c.sizes[best])
      best = i;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (c.label[i] == static_cast<int>(best))
      out[i] = 1;
  return out;
}

inline LabelMask mask_and(const LabelMask &a, const LabelMask &b) {
  LabelMask out(a.grid(), 0);
  for (std::size_t i = 0; i < a.size(); ++i)
    out[i] = (a[i] && b[i]) ? 1 : 0;
  return out;
}

} // namespace detail

/// Runs the full pipeline. Stage failures are rethrown as PipelineError
/// naming the stage and, where applicable, the vertebra level.
template <typename T>
SegmentationResult segment(const Volume<T> &vol, const std::vector<Vec3> &centers, const PipelineConfig &cfg,
                           Log *log = nullptr) {
  cfg.validate();
  SegmentationResult res;
  Log silent;
  Log &lg = log ? *log : silent;

  auto stage = [&](const std::string &name, const std::string &level, auto &&fn) {
    detail::Stopwatch sw;
    try {
      fn();
    } catch (const ConfigError &) {
      throw;
    } catch (const Error &e) {
      throw PipelineError("stage '" + name + "'" + (level.empty() ? "" : " (" + level + ")") + ": " + e.what());
    }
    const double s = sw.seconds();
    res.timings.push_back({name, level, s});
    lg.info("stage " + name + (level.empty() ? "" : " " + level) + " done in " + detail::fmt_seconds(s));
  };

  if (centers.size() < 2)
    throw InputError("segment: need at least 2 vertebra centers");
  LandmarkSet &lm = res.landmarks;
  lm.centers = centers;
  stage("canal", "", [&] { lm.canal = detect_canal_centerline(vol, centers, cfg.canal); });
  stage("disk_planes", "", [&] { lm.disk_planes = fit_disk_planes(vol, centers, cfg.planes); });
  stage("cylinders", "", [&] { lm.cylinders = build_cylinders(centers, lm.disk_planes, lm.canal, cfg.cylinder); });

  const GridGeometry &grid = vol.grid();
  for (std::size_t i = 0; i < centers.size(); ++i) {
    VertebraResult vr;
    vr.level = level_name(i);
    vr.cylinder = lm.cylinders[i];
    Volume<T> sub;
    LabelMask cyl_mask;
    stage("crop", vr.level, [&] {
      vr.box = cylinder_bounds(grid, vr.cylinder, 2);
      sub = crop(vol, vr.box);
      cyl_mask = cylinder_mask(sub.grid(), vr.cylinder);
    });
    stage("balloon", vr.level, [&] {
      vr.balloon = run_balloon(sub, vr.cylinder, cfg.balloon);
      if (!vr.balloon.converged) {
        const std::string w = vr.level + ": balloon hit the iteration cap (" + std::to_string(vr.balloon.iterations) +
                              ") without converging; last displacement " +
                              std::to_string(vr.balloon.last_displacement) + " mm";
        res.warnings.push_back(w);
        lg.warn(w);
      }
    });
    stage("volume_growing", vr.level, [&] {
      const EnclosedMask enclosed = mesh_enclosed_mask(vr.balloon.mesh, sub.grid());
      const auto seeds = select_seeds(sub, enclosed.surface, cfg.morph.seed_threshold);
      LabelMask grown = volume_grow(sub, seeds, cfg.morph.grow_threshold, cfg.morph.grow_connectivity, &cyl_mask);
      LabelMask closed = detail::mask_and(close_mask(grown, StructuringElement::n26()), cyl_mask);
      vr.total = detail::largest_component(detail::mask_and(fill_holes(closed), cyl_mask));
    });
    stage("separation", vr.level, [&] {
      Separation s = separate_processes(vr.total, StructuringElement::n6(), &vr.cylinder);
      vr.body = std::move(s.body);
      vr.processes = std::move(s.processes);
      vr.separation_erosions = s.erosions;
    });
    stage("trabecular", vr.level, [&] {
      vr.trabecular = trabecular_compartment(sub, vr.body, cfg.morph.cortical_threshold, cfg.morph.peel_mm);
      vr.cov = center_of_volume(vr.body);
    });
    res.vertebrae.push_back(std::move(vr));
  }

  std::vector<Vec3> covs;
  for (const auto &v : res.vertebrae)
    covs.push_back(v.cov);
  std::vector<VCSFrame> frames;
  stage("vcs", "", [&] { frames = build_frames(covs, lm.canal); });

  const auto specs = cfg.vois();
  for (std::size_t i = 0; i < res.vertebrae.size(); ++i) {
    VertebraResult &vr = res.vertebrae[i];
    vr.frame = frames[i];
    stage("vois", vr.level, [&] {
      vr.vois = define_vois(vr.frame, vr.body, vr.trabecular, specs);
      const Volume<double> bmd = calibrate(crop(vol, vr.box), cfg.calibration);
      for (const auto &voi : vr.vois)
        res.measurements.push_back({vr.level, voi.name, voi_stats(bmd, voi.mask)});
    });
  }
  return res;
}

} // namespace qct
