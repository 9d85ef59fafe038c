// Repeat-analysis precision on synthetic phantoms.
//
// For each phantom and FOV the pipeline runs n_repeats times with seed
// points jittered uniformly in a cube of half-width jitter_mm around the
// true centers. Per repeat, each VOI's BMD and volume are averaged over the
// levels; per phantom the %CV over repeats follows; phantoms are then
// aggregated by RMS.
#pragma once

#include "config.hpp"
#include "errors.hpp"
#include "metrics.hpp"
#include "phantom.hpp"
#include "pipeline.hpp"
#include "volume.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace qct {

/// splitmix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts) {
  std::uint64_t s = mix_seed(base);
  for (auto p : parts)
    s = mix_seed(s ^ mix_seed(p + 0x632be59bd9b4e019ULL));
  return s;
}

/// Phantoms of varying body size and column curvature around `base`. The
/// canal offset follows the body depth so the body-to-arch gap stays fixed.
inline std::vector<PhantomSpec> make_phantom_set(const PhantomSpec &base, int n, std::uint64_t seed) {
  std::vector<PhantomSpec> out;
  std::mt19937_64 rng(derive_seed(seed, {0x5048414eULL}));
  std::uniform_real_distribution<double> ua(14.0, 17.0), ub(10.0, 13.0), uh(22.0, 26.0), uk(0.0, 0.004);
  for (int i = 0; i < n; ++i) {
    PhantomSpec s = base;
    s.body_a = ua(rng);
    s.body_b = ub(rng);
    s.body_h = uh(rng);
    s.curvature = uk(rng);
    s.canal_offset = base.canal_offset + (s.body_b - base.body_b);
    s.seed = derive_seed(seed, {0x4e4f495345ULL, static_cast<std::uint64_t>(i)});
    s.validate();
    out.push_back(s);
  }
  return out;
}

/// True centers plus uniform jitter in [-half_width, half_width]^3.
inline std::vector<Vec3> jitter_points(const std::vector<Vec3> &pts, double half_width, std::uint64_t seed) {
  std::vector<Vec3> out = pts;
  if (half_width <= 0.0)
    return out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-half_width, half_width);
  for (auto &p : out) {
    const double dx = u(rng), dy = u(rng), dz = u(rng);
    p += Vec3{dx, dy, dz};
  }
  return out;
}

struct PrecisionRow {
  int phantom = 0;
  double fov_mm = 0.0;
  std::string voi;
  int repeat = 0;
  bool ok = false;
  double bmd = 0.0;        ///< mg/cm^3, mean over levels
  double volume_cm3 = 0.0; ///< mean over levels
};

struct QuantitySummary {
  double cv_percent = 0.0; ///< RMS over phantoms of the per-phantom %CV
  double sd = 0.0;         ///< RMS over phantoms of the per-phantom sample SD
  std::vector<double> per_phantom_cv;
  std::vector<double> per_phantom_sd;
};

struct PrecisionCell {
  std::string voi;
  double fov_mm = 0.0;
  int n_effective = 0; ///< phantoms with at least two successful repeats
  std::vector<int> phantoms;
  QuantitySummary bmd;
  QuantitySummary volume;
};

struct PrecisionReport {
  int n_phantoms = 0;
  int n_repeats = 0;
  double jitter_mm = 0.0;
  std::vector<std::string> voi_names;
  std::vector<PrecisionRow> rows; ///< phantom, fov, voi, repeat order
  std::vector<PrecisionCell> cells; ///< voi-major, then FOV
  std::vector<std::string> failures;
  std::vector<std::string> warnings;
};

/// One pipeline run of the study; throws on failure.
inline std::vector<std::pair<std::string, VoiStats>> precision_run(const HuVolume &vol, const std::vector<Vec3> &seeds,
                                                                   const PipelineConfig &cfg) {
  const SegmentationResult r = segment(vol, seeds, cfg);
  std::vector<std::pair<std::string, VoiStats>> avg;
  for (const auto &spec : cfg.vois()) {
    double bmd = 0.0, vol_cm3 = 0.0;
    int n = 0;
    for (const auto &m : r.measurements)
      if (m.voi == spec.name) {
        bmd += m.stats.mean;
        vol_cm3 += m.stats.volume_cm3;
        ++n;
      }
    avg.push_back({spec.name, {bmd / n, vol_cm3 / n, 0}});
  }
  return avg;
}

inline PrecisionReport precision_study(const PipelineConfig &cfg, Log *log = nullptr) {
  cfg.validate();
  const PrecisionParams &pp = cfg.precision;
  const auto phantoms = make_phantom_set(cfg.phantom, pp.n_phantoms, cfg.seed);
  const auto vois = cfg.vois();
  const std::size_t nv = vois.size(), nf = pp.fovs.size(), nr = static_cast<std::size_t>(pp.n_repeats);
  const std::size_t np = phantoms.size();

  PrecisionReport rep;
  rep.n_phantoms = pp.n_phantoms;
  rep.n_repeats = pp.n_repeats;
  rep.jitter_mm = pp.jitter_mm;
  for (const auto &v : vois)
    rep.voi_names.push_back(v.name);

  // Result slots indexed by (phantom, fov, repeat); filled in any order.
  struct Slot {
    bool ok = false;
    std::vector<std::pair<std::string, VoiStats>> values;
    std::string error;
  };
  std::vector<Slot> slots(np * nf * nr);
  auto slot_index = [&](std::size_t p, std::size_t f, std::size_t r) { return (p * nf + f) * nr + r; };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t task = next.fetch_add(1);
      if (task >= np * nf)
        return;
      const std::size_t p = task / nf, f = task % nf;
      HuVolume vol;
      std::vector<Vec3> truth;
      try {
        auto [v0, gt] = generate_phantom(phantoms[p]);
        vol = resample_fov(v0, ScanSpec{pp.fovs[f], pp.matrix, pp.slice_thickness});
        truth = gt.centers();
      } catch (const Error &e) {
        for (std::size_t r = 0; r < nr; ++r)
          slots[slot_index(p, f, r)].error = std::string("phantom/resample: ") + e.what();
        continue;
      }
      for (std::size_t r = 0; r < nr; ++r) {
        Slot &s = slots[slot_index(p, f, r)];
        const auto seeds = jitter_points(truth, pp.jitter_mm, derive_seed(cfg.seed, {p, f, r}));
        try {
          s.values = precision_run(vol, seeds, cfg);
          s.ok = true;
        } catch (const Error &e) {
          s.error = e.what();
        }
        if (log) {
          const std::string what = "precision phantom " + std::to_string(p + 1) + " fov " +
                                   detail::format_double(pp.fovs[f]) + " repeat " + std::to_string(r + 1);
          if (s.ok)
            log->info(what + " ok");
          else
            log->warn(what + " failed and is excluded: " + s.error);
        }
      }
    }
  };
  unsigned threads = pp.threads > 0 ? static_cast<unsigned>(pp.threads) : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(np * nf));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back(worker);
    for (auto &t : pool)
      t.join();
  }

  // Deterministic reduction in index order.
  for (std::size_t p = 0; p < np; ++p)
    for (std::size_t f = 0; f < nf; ++f)
      for (std::size_t r = 0; r < nr; ++r) {
        const Slot &s = slots[slot_index(p, f, r)];
        if (!s.ok)
          rep.failures.push_back("phantom " + std::to_string(p + 1) + " fov " + detail::format_double(pp.fovs[f]) +
                                 " repeat " + std::to_string(r + 1) + ": " + s.error);
        for (std::size_t v = 0; v < nv; ++v) {
          PrecisionRow row{static_cast<int>(p + 1), pp.fovs[f], vois[v].name, static_cast<int>(r + 1), s.ok, 0.0, 0.0};
          if (s.ok) {
            row.bmd = s.values[v].second.mean;
            row.volume_cm3 = s.values[v].second.volume_cm3;
          }
          rep.rows.push_back(row);
        }
      }

  for (std::size_t v = 0; v < nv; ++v)
    for (std::size_t f = 0; f < nf; ++f) {
      PrecisionCell cell;
      cell.voi = vois[v].name;
      cell.fov_mm = pp.fovs[f];
      for (std::size_t p = 0; p < np; ++p) {
        std::vector<double> bmd, vol;
        for (std::size_t r = 0; r < nr; ++r) {
          const Slot &s = slots[slot_index(p, f, r)];
          if (s.ok) {
            bmd.push_back(s.values[v].second.mean);
            vol.push_back(s.values[v].second.volume_cm3);
          }
        }
        if (bmd.size() < 2) {
          rep.warnings.push_back("voi " + cell.voi + " fov " + detail::format_double(cell.fov_mm) + ": phantom " +
                                 std::to_string(p + 1) + " excluded (" + std::to_string(bmd.size()) +
                                 " successful repeats)");
          continue;
        }
        cell.phantoms.push_back(static_cast<int>(p + 1));
        cell.bmd.per_phantom_cv.push_back(cv_percent(bmd));
        cell.bmd.per_phantom_sd.push_back(sample_sd(bmd));
        cell.volume.per_phantom_cv.push_back(cv_percent(vol));
        cell.volume.per_phantom_sd.push_back(sample_sd(vol));
      }
      cell.n_effective = static_cast<int>(cell.phantoms.size());
      if (cell.n_effective > 0) {
        const auto b = rms_cv(cell.bmd.per_phantom_cv, cell.bmd.per_phantom_sd);
        const auto w = rms_cv(cell.volume.per_phantom_cv, cell.volume.per_phantom_sd);
        cell.bmd.cv_percent = b.cv_percent;
        cell.bmd.sd = b.sd;
        cell.volume.cv_percent = w.cv_percent;
        cell.volume.sd = w.sd;
      } else {
        rep.warnings.push_back("voi " + cell.voi + " fov " + detail::format_double(cell.fov_mm) +
                               ": no phantom has two successful repeats");
      }
      rep.cells.push_back(std::move(cell));
    }
  if (log)
    for (const auto &w : rep.warnings)
      log->warn(w);
  return rep;
}

} // namespace qct
