// Pipeline configuration: every module parameter, paths and the global seed.
//
// File format: one `section.key = value` per line, `#` starts a comment.
// Unknown keys and malformed values are errors naming the key.
#pragma once

#include "balloon.hpp"
#include "errors.hpp"
#include "landmarks.hpp"
#include "phantom.hpp"
#include "vcs.hpp"
#include "volume.hpp"
#include "volume_io.hpp"

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

namespace qct {

struct MorphParams {
  double seed_threshold = 300.0;     ///< HU; balloon-surface voxels at or above seed the growing
  double grow_threshold = 130.0;     ///< HU
  double cortical_threshold = 350.0; ///< HU; local erosion of the cortical shell
  double peel_mm = 1.0;              ///< subcortical peel depth
  int grow_connectivity = 26;

  void validate() const {
    if (!(seed_threshold >= grow_threshold))
      throw ConfigError("morph.seed_threshold", "must be >= morph.grow_threshold");
    if (peel_mm < 0.0 || !std::isfinite(peel_mm))
      throw ConfigError("morph.peel_mm", "must be >= 0");
    if (grow_connectivity != 6 && grow_connectivity != 18 && grow_connectivity != 26)
      throw ConfigError("morph.grow_connectivity", "must be 6, 18 or 26");
  }
};

struct PrecisionParams {
  int n_phantoms = 10;
  int n_repeats = 3;
  double jitter_mm = 2.0; ///< half-width of the uniform seed jitter cube
  std::vector<double> fovs{150.0, 250.0, 350.0};
  int matrix = 512;
  double slice_thickness = 1.0;
  int threads = 0; ///< 0 = hardware concurrency

  void validate() const {
    if (n_phantoms < 1)
      throw ConfigError("precision.n_phantoms", "must be >= 1");
    if (n_repeats < 2)
      throw ConfigError("precision.n_repeats", "must be >= 2");
    if (jitter_mm < 0.0 || !std::isfinite(jitter_mm))
      throw ConfigError("precision.jitter_mm", "must be >= 0");
    if (fovs.empty())
      throw ConfigError("precision.fovs", "must list at least one FOV");
    for (double f : fovs)
      if (!(f > 0.0))
        throw ConfigError("precision.fovs", "FOVs must be > 0");
    if (matrix < 1)
      throw ConfigError("precision.matrix", "must be >= 1");
    if (!(slice_thickness > 0.0))
      throw ConfigError("precision.slice_thickness", "must be > 0");
    if (threads < 0)
      throw ConfigError("precision.threads", "must be >= 0");
  }
};

struct PipelineConfig {
  CalibrationParams calibration;
  RollingBallParams canal;
  PlaneFitParams planes;
  CylinderParams cylinder;
  BalloonParams balloon;
  MorphParams morph;
  double midcyl_height = 0.5;
  double midcyl_radius = 0.6;
  PrecisionParams precision;
  PhantomSpec phantom;

  std::string volume_path;
  std::string seeds_path;
  std::string out_dir = "out";
  std::uint64_t seed = 1;

  std::vector<VoiSpec> vois() const {
    return {VoiSpec::whole_body(), VoiSpec::whole_trabecular(), VoiSpec::cylinder("midcyl", midcyl_height, midcyl_radius)};
  }

  void validate() const;
};

namespace detail {

template <typename T> T parse_number(const std::string &key, const std::string &text) {
  T v{};
  const std::string t = trim(text);
  const char *first = t.data();
  const char *last = t.data() + t.size();
  if (!t.empty() && *first == '+')
    ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || t.empty())
    throw ConfigError(key, "cannot parse '" + t + "' as a number");
  if constexpr (std::is_floating_point_v<T>)
    if (!std::isfinite(v))
      throw ConfigError(key, "must be finite");
  return v;
}

inline bool parse_bool(const std::string &key, const std::string &text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes" || t == "on")
    return true;
  if (t == "false" || t == "0" || t == "no" || t == "off")
    return false;
  throw ConfigError(key, "cannot parse '" + t + "' as a boolean");
}

inline std::vector<double> parse_list(const std::string &key, const std::string &text) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ','))
    out.push_back(parse_number<double>(key, item));
  return out;
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline std::string format_list(const std::vector<double> &v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i)
    s += (i ? ", " : "") + format_double(v[i]);
  return s;
}

struct ConfigField {
  std::string key;
  std::function<void(PipelineConfig &, const std::string &)> set;
  std::function<std::string(const PipelineConfig &)> get;
};

template <typename M> ConfigField num_field(std::string key, M member) {
  using T = std::remove_cvref_t<decltype(std::declval<PipelineConfig &>().*member)>;
  return {key, [key, member](PipelineConfig &c, const std::string &v) { c.*member = parse_number<T>(key, v); },
          [member](const PipelineConfig &c) {
            if constexpr (std::is_floating_point_v<T>)
              return format_double(c.*member);
            else
              return std::to_string(c.*member);
          }};
}

/// Field nested one struct deep: cfg.*outer.*inner.
template <typename O, typename I> ConfigField nested_num(std::string key, O outer, I inner) {
  using T = std::remove_cvref_t<decltype((std::declval<PipelineConfig &>().*outer).*inner)>;
  return {key, [key, outer, inner](PipelineConfig &c, const std::string &v) { (c.*outer).*inner = parse_number<T>(key, v); },
          [outer, inner](const PipelineConfig &c) {
            if constexpr (std::is_floating_point_v<T>)
              return format_double((c.*outer).*inner);
            else
              return std::to_string((c.*outer).*inner);
          }};
}

inline ConfigField vec3_field(std::string key, std::function<Vec3 &(PipelineConfig &)> ref) {
  return {key,
          [key, ref](PipelineConfig &c, const std::string &v) {
            const auto xs = parse_list(key, v);
            if (xs.size() != 3)
              throw ConfigError(key, "expects three comma-separated numbers");
            ref(c) = {xs[0], xs[1], xs[2]};
          },
          [ref](const PipelineConfig &c) {
            const Vec3 p = ref(const_cast<PipelineConfig &>(c));
            return format_list({p.x, p.y, p.z});
          }};
}

inline ConfigField string_field(std::string key, std::string PipelineConfig::*member) {
  return {key, [member](PipelineConfig &c, const std::string &v) { c.*member = trim(v); },
          [member](const PipelineConfig &c) { return c.*member; }};
}

inline const std::vector<ConfigField> &config_fields() {
  using C = PipelineConfig;
  static const std::vector<ConfigField> fields = [] {
    std::vector<ConfigField> f;
    f.push_back(nested_num("calibration.slope", &C::calibration, &CalibrationParams::slope));
    f.push_back(nested_num("calibration.intercept", &C::calibration, &CalibrationParams::intercept));

    f.push_back(nested_num("canal.radius", &C::canal, &RollingBallParams::radius));
    f.push_back(nested_num("canal.step", &C::canal, &RollingBallParams::step));
    f.push_back(nested_num("canal.threshold", &C::canal, &RollingBallParams::threshold));
    f.push_back(nested_num("canal.search_window", &C::canal, &RollingBallParams::search_window));
    f.push_back(vec3_field("canal.posterior", [](C &c) -> Vec3 & { return c.canal.posterior; }));
    f.push_back(nested_num("canal.recenter_iterations", &C::canal, &RollingBallParams::recenter_iterations));

    f.push_back(nested_num("planes.slab", &C::planes, &PlaneFitParams::slab));
    f.push_back(nested_num("planes.bone_threshold", &C::planes, &PlaneFitParams::bone_threshold));
    f.push_back(nested_num("planes.slab_radius", &C::planes, &PlaneFitParams::slab_radius));
    f.push_back(nested_num("planes.t_min", &C::planes, &PlaneFitParams::t_min));
    f.push_back(nested_num("planes.t_max", &C::planes, &PlaneFitParams::t_max));

    f.push_back(nested_num("cylinder.margin", &C::cylinder, &CylinderParams::margin));
    f.push_back(nested_num("cylinder.r_min", &C::cylinder, &CylinderParams::r_min));

    using B = BalloonParams;
    f.push_back(nested_num("balloon.mass", &C::balloon, &B::mass));
    f.push_back(nested_num("balloon.damping", &C::balloon, &B::damping));
    f.push_back(nested_num("balloon.dt", &C::balloon, &B::dt));
    f.push_back(nested_num("balloon.k_smooth", &C::balloon, &B::k_smooth));
    f.push_back(nested_num("balloon.k_image", &C::balloon, &B::k_image));
    f.push_back(nested_num("balloon.k_pressure", &C::balloon, &B::k_pressure));
    f.push_back(nested_num("balloon.profile_out", &C::balloon, &B::profile_out));
    f.push_back(nested_num("balloon.profile_in", &C::balloon, &B::profile_in));
    f.push_back(nested_num("balloon.profile_step", &C::balloon, &B::profile_step));
    f.push_back(nested_num("balloon.min_gradient", &C::balloon, &B::min_gradient));
    f.push_back(nested_num("balloon.max_edge_length", &C::balloon, &B::max_edge_length));
    f.push_back(nested_num("balloon.epsilon", &C::balloon, &B::epsilon));
    f.push_back(nested_num("balloon.patience", &C::balloon, &B::patience));
    f.push_back(nested_num("balloon.max_iterations", &C::balloon, &B::max_iterations));
    f.push_back(nested_num("balloon.refine_every", &C::balloon, &B::refine_every));
    f.push_back(nested_num("balloon.init_radius", &C::balloon, &B::init_radius));
    f.push_back(nested_num("balloon.init_subdivisions", &C::balloon, &B::init_subdivisions));

    f.push_back(nested_num("morph.seed_threshold", &C::morph, &MorphParams::seed_threshold));
    f.push_back(nested_num("morph.grow_threshold", &C::morph, &MorphParams::grow_threshold));
    f.push_back(nested_num("morph.cortical_threshold", &C::morph, &MorphParams::cortical_threshold));
    f.push_back(nested_num("morph.peel_mm", &C::morph, &MorphParams::peel_mm));
    f.push_back(nested_num("morph.grow_connectivity", &C::morph, &MorphParams::grow_connectivity));

    f.push_back(num_field("vois.midcyl_height", &C::midcyl_height));
    f.push_back(num_field("vois.midcyl_radius", &C::midcyl_radius));

    using P = PrecisionParams;
    f.push_back(nested_num("precision.n_phantoms", &C::precision, &P::n_phantoms));
    f.push_back(nested_num("precision.n_repeats", &C::precision, &P::n_repeats));
    f.push_back(nested_num("precision.jitter_mm", &C::precision, &P::jitter_mm));
    f.push_back({"precision.fovs",
                 [](C &c, const std::string &v) { c.precision.fovs = parse_list("precision.fovs", v); },
                 [](const C &c) { return format_list(c.precision.fovs); }});
    f.push_back(nested_num("precision.matrix", &C::precision, &P::matrix));
    f.push_back(nested_num("precision.slice_thickness", &C::precision, &P::slice_thickness));
    f.push_back(nested_num("precision.threads", &C::precision, &P::threads));

    using S = PhantomSpec;
    f.push_back(nested_num("phantom.n_vertebrae", &C::phantom, &S::n_vertebrae));
    f.push_back(nested_num("phantom.body_a", &C::phantom, &S::body_a));
    f.push_back(nested_num("phantom.body_b", &C::phantom, &S::body_b));
    f.push_back(nested_num("phantom.body_h", &C::phantom, &S::body_h));
    f.push_back(nested_num("phantom.disk_gap", &C::phantom, &S::disk_gap));
    f.push_back(nested_num("phantom.cortical_thickness", &C::phantom, &S::cortical_thickness));
    f.push_back(nested_num("phantom.pedicle_radius", &C::phantom, &S::pedicle_radius));
    f.push_back(nested_num("phantom.arch_thickness", &C::phantom, &S::arch_thickness));
    f.push_back(nested_num("phantom.arch_height_fraction", &C::phantom, &S::arch_height_fraction));
    f.push_back(nested_num("phantom.process_length", &C::phantom, &S::process_length));
    f.push_back(nested_num("phantom.process_half_thickness", &C::phantom, &S::process_half_thickness));
    f.push_back(nested_num("phantom.canal_radius", &C::phantom, &S::canal_radius));
    f.push_back(nested_num("phantom.canal_offset", &C::phantom, &S::canal_offset));
    f.push_back(nested_num("phantom.curvature", &C::phantom, &S::curvature));
    f.push_back({"phantom.posterior_elements",
                 [](C &c, const std::string &v) { c.phantom.posterior_elements = parse_bool("phantom.posterior_elements", v); },
                 [](const C &c) { return std::string(c.phantom.posterior_elements ? "true" : "false"); }});
    f.push_back(nested_num("phantom.cortical_window", &C::phantom, &S::cortical_window));
    f.push_back(nested_num("phantom.hu_trabecular", &C::phantom, &S::hu_trabecular));
    f.push_back(nested_num("phantom.hu_cortical", &C::phantom, &S::hu_cortical));
    f.push_back(nested_num("phantom.hu_soft", &C::phantom, &S::hu_soft));
    f.push_back(nested_num("phantom.hu_disk", &C::phantom, &S::hu_disk));
    f.push_back(nested_num("phantom.noise_sigma", &C::phantom, &S::noise_sigma));
    f.push_back({"phantom.dims",
                 [](C &c, const std::string &v) {
                   const auto xs = parse_list("phantom.dims", v);
                   if (xs.size() != 3)
                     throw ConfigError("phantom.dims", "expects three comma-separated integers");
                   for (int a = 0; a < 3; ++a) {
                     if (xs[a] != std::floor(xs[a]) || xs[a] < 1 || xs[a] > 1e5)
                       throw ConfigError("phantom.dims", "entries must be positive integers");
                     c.phantom.dims[static_cast<std::size_t>(a)] = static_cast<int>(xs[a]);
                   }
                 },
                 [](const C &c) {
                   return std::to_string(c.phantom.dims[0]) + ", " + std::to_string(c.phantom.dims[1]) + ", " +
                          std::to_string(c.phantom.dims[2]);
                 }});
    f.push_back(vec3_field("phantom.spacing", [](C &c) -> Vec3 & { return c.phantom.spacing; }));

    f.push_back(string_field("io.volume", &C::volume_path));
    f.push_back(string_field("io.seeds", &C::seeds_path));
    f.push_back(string_field("io.out_dir", &C::out_dir));
    f.push_back(num_field("run.seed", &C::seed));
    return f;
  }();
  return fields;
}

} // namespace detail

inline void PipelineConfig::validate() const {
  calibration.validate();
  auto positive = [](double v, const char *key) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw ConfigError(key, "must be > 0");
  };
  positive(canal.radius, "canal.radius");
  positive(canal.step, "canal.step");
  positive(canal.search_window, "canal.search_window");
  if (norm(Vec3{canal.posterior.x, canal.posterior.y, 0.0}) <= 0.0)
    throw ConfigError("canal.posterior", "needs a nonzero in-plane (x, y) component");
  if (canal.recenter_iterations < 0)
    throw ConfigError("canal.recenter_iterations", "must be >= 0");
  positive(planes.slab, "planes.slab");
  positive(planes.slab_radius, "planes.slab_radius");
  if (!(planes.t_min > 0.0 && planes.t_min < planes.t_max && planes.t_max < 1.0))
    throw ConfigError("planes.t_min", "need 0 < t_min < t_max < 1");
  if (cylinder.margin < 0.0)
    throw ConfigError("cylinder.margin", "must be >= 0");
  positive(cylinder.r_min, "cylinder.r_min");
  balloon.validate();
  morph.validate();
  for (const auto &v : vois())
    v.validate();
  precision.validate();
  phantom.validate();
}

/// Sets one key; throws ConfigError naming the key when unknown or malformed.
inline void set_config_value(PipelineConfig &cfg, const std::string &key, const std::string &value) {
  for (const auto &f : detail::config_fields())
    if (f.key == key) {
      f.set(cfg, value);
      return;
    }
  throw ConfigError(key, "unknown configuration key");
}

/// Parses `section.key = value` lines over the defaults and validates.
inline PipelineConfig parse_config(std::istream &in, PipelineConfig cfg = {}) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    line = detail::trim(line);
    if (line.empty())
      continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(detail::trim(line), "line " + std::to_string(lineno) + ": expected 'section.key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    set_config_value(cfg, key, line.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

inline PipelineConfig load_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw InputError("cannot open config file '" + path.string() + "'");
  return parse_config(in);
}

/// Every key with its effective value, one per line, in a fixed order.
inline std::string dump_config(const PipelineConfig &cfg) {
  std::string out;
  for (const auto &f : detail::config_fields())
    out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

} // namespace qct
