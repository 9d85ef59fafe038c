// VOI measurements and repeatability statistics.
#pragma once

#include "errors.hpp"
#include "volume.hpp"

#include <cmath>
#include <numeric>
#include <span>
#include <vector>

namespace qct {

struct VoiStats {
  double mean = 0.0;       ///< calibrated units (mg/cm^3)
  double volume_cm3 = 0.0; ///< voxel count * voxel volume / 1000
  std::size_t voxels = 0;
};

inline VoiStats voi_stats(const Volume<double> &calibrated, const LabelMask &mask) {
  if (!(calibrated.grid() == mask.grid()))
    throw InputError("voi_stats: mask grid differs from the volume grid");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) {
      sum += calibrated[i];
      ++n;
    }
  if (n == 0)
    throw PipelineError("voi_stats: empty VOI");
  return {sum / static_cast<double>(n), static_cast<double>(n) * mask.grid().voxel_volume() / 1000.0, n};
}

inline double mean(std::span<const double> v) {
  if (v.empty())
    throw InputError("mean of an empty sample");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1 denominator).
inline double sample_sd(std::span<const double> v) {
  if (v.size() < 2)
    throw InputError("sample SD needs at least 2 values");
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v)
    ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// 100 * sample SD / mean.
inline double cv_percent(std::span<const double> v) {
  if (v.size() < 2)
    throw InputError("cv_percent needs at least 2 values");
  const double m = mean(v);
  if (m == 0.0)
    throw InputError("cv_percent: zero mean");
  return 100.0 * sample_sd(v) / std::abs(m);
}

inline double cv_percent(std::initializer_list<double> v) { return cv_percent(std::span<const double>(v.begin(), v.size())); }

inline double root_mean_square(std::span<const double> v) {
  if (v.empty())
    throw InputError("root mean square of an empty sample");
  double ss = 0.0;
  for (double x : v)
    ss += x * x;
  return std::sqrt(ss / static_cast<double>(v.size()));
}

struct RmsSummary {
  double cv_percent = 0.0; ///< RMS of per-patient %CV
  double sd = 0.0;         ///< RMS of per-patient sample SDs
  std::size_t n = 0;
};

/// RMS aggregation over patients. `sds` may be empty, in which case sd = 0.
inline RmsSummary rms_cv(std::span<const double> cvs, std::span<const double> sds = {}) {
  if (cvs.empty())
    throw InputError("rms_cv: no per-patient CVs");
  if (!sds.empty() && sds.size() != cvs.size())
    throw InputError("rms_cv: CV and SD counts differ");
  return {root_mean_square(cvs), sds.empty() ? 0.0 : root_mean_square(sds), cvs.size()};
}

inline RmsSummary rms_cv(std::initializer_list<double> cvs) {
  return rms_cv(std::span<const double>(cvs.begin(), cvs.size()));
}

} // namespace qct
