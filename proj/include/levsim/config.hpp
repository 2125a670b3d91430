#pragma once

#include <json.hpp>

#include <array>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "levsim/analysis.hpp"
#include "levsim/dynamics.hpp"
#include "levsim/fieldmodel.hpp"
#include "levsim/transduction.hpp"

namespace levsim {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct FitOptions {
  double box_half = 45e-6;        // [m] sampling half-extent about equilibrium
  int grid_points = 7;            // samples per axis
  double validity_radius = 150e-6;
};

struct AnalysisOptions {
  double chunk_seconds = 10.0;
  double segment_seconds = 10.0;
  double quiet_percentile = 0.30;
  double band_halfwidth_hz = 4.0;      // fundamental band half width about predictions
  double harmonic_halfwidth_hz = 2.0;  // band half width about 2f predictions
  int histogram_bins = 30;
};

struct MasterConfig {
  CoilAssembly geometry;
  double surface_z = 0.0;  // chip surface the particle rests on before lift-off [m]
  ParticleSpec particle;
  SearchBox search_box;
  FitOptions fit;
  SimConfig sim;
  Vec3 target_rms;  // steady-state RMS displacement targets [m]
  PickupModel pickup;
  bool pickup_noise = true;
  TransferChain chain;
  AnalysisOptions analysis;
  std::string output_dir = "out";

  void validate() const {
    geometry.validate();
    particle.validate();
    chain.validate();
    if (!(search_box.lo.x < search_box.hi.x && search_box.lo.y < search_box.hi.y &&
          search_box.lo.z < search_box.hi.z))
      throw ConfigError("search_box_m: lo must be below hi on every axis");
    if (!(fit.box_half > 0.0) || fit.grid_points < 4)
      throw ConfigError("fit: box_half_m must be > 0 and grid_points >= 4");
    if (!(sim.timestep > 0.0)) throw ConfigError("simulation.timestep_s must be > 0");
    if (!(sim.sample_rate > 0.0)) throw ConfigError("simulation.sample_rate_hz must be > 0");
    if (!(analysis.chunk_seconds >= analysis.segment_seconds))
      throw ConfigError("analysis.chunk_seconds must be >= segment_seconds");
    for (int i = 0; i < 3; ++i)
      if (target_rms[i] < 0.0) throw ConfigError("simulation.target_rms_m must be >= 0");
  }
};

namespace detail {

// j.at with a path-addressed error message.
inline const nlohmann::json& jfield(const nlohmann::json& j, const std::string& key,
                                    const std::string& path) {
  if (!j.contains(key)) throw ConfigError("missing config key: " + path + "." + key);
  return j.at(key);
}

template <typename T>
T jget(const nlohmann::json& j, const std::string& key, const std::string& path) {
  try {
    return jfield(j, key, path).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad value at " + path + "." + key + ": " + e.what());
  }
}

template <typename T>
T jget_or(const nlohmann::json& j, const std::string& key, const std::string& path, T fallback) {
  if (!j.contains(key)) return fallback;
  return jget<T>(j, key, path);
}

inline Vec3 jvec3(const nlohmann::json& j, const std::string& key, const std::string& path) {
  const auto a = jget<std::array<double, 3>>(j, key, path);
  return {a[0], a[1], a[2]};
}

} // namespace detail

inline MasterConfig parse_master_config(const nlohmann::json& j) {
  using detail::jfield;
  using detail::jget;
  using detail::jget_or;
  using detail::jvec3;
  MasterConfig c;

  const auto& geo = jfield(j, "geometry", "");
  for (std::size_t i = 0; i < jfield(geo, "loops", "geometry").size(); ++i) {
    const auto& jl = geo.at("loops").at(i);
    const std::string p = "geometry.loops[" + std::to_string(i) + "]";
    Loop l;
    l.radius = jget<double>(jl, "radius_m", p);
    l.z = jget<double>(jl, "z_m", p);
    l.x0 = jget_or<double>(jl, "x0_m", p, 0.0);
    l.y0 = jget_or<double>(jl, "y0_m", p, 0.0);
    l.polarity = jget<int>(jl, "polarity", p);
    c.geometry.loops.push_back(l);
  }
  c.geometry.windings = jget<int>(geo, "windings", "geometry");
  c.geometry.current = jget<double>(geo, "current_a", "geometry");
  c.geometry.reference_radius = jget<double>(geo, "reference_radius_m", "geometry");
  c.surface_z = jget_or<double>(geo, "surface_z_m", "geometry", 0.0);

  const auto& part = jfield(j, "particle", "");
  c.particle.radius = jget<double>(part, "radius_m", "particle");
  c.particle.density = jget<double>(part, "density_kg_m3", "particle");

  const auto& box = jfield(j, "search_box_m", "");
  c.search_box.lo = jvec3(box, "lo", "search_box_m");
  c.search_box.hi = jvec3(box, "hi", "search_box_m");

  if (j.contains("fit")) {
    const auto& f = j.at("fit");
    c.fit.box_half = jget_or<double>(f, "box_half_m", "fit", c.fit.box_half);
    c.fit.grid_points = jget_or<int>(f, "grid_points", "fit", c.fit.grid_points);
    c.fit.validity_radius = jget_or<double>(f, "validity_radius_m", "fit", c.fit.validity_radius);
  }

  const auto& sim = jfield(j, "simulation", "");
  c.sim.timestep = jget<double>(sim, "timestep_s", "simulation");
  c.sim.duration = jget<double>(sim, "duration_s", "simulation");
  c.sim.sample_rate = jget<double>(sim, "sample_rate_hz", "simulation");
  c.sim.quality_factors = jvec3(sim, "quality_factors", "simulation");
  c.target_rms = jvec3(sim, "target_rms_m", "simulation");
  c.sim.rng_seed = jget_or<std::uint64_t>(sim, "seed", "simulation", 1);

  const auto& pu = jfield(j, "pickup", "");
  c.pickup.u = jvec3(pu, "u_phi0_per_m2", "pickup");
  c.pickup.v = jvec3(pu, "v_phi0_per_m", "pickup");
  c.pickup.w = jget_or<double>(pu, "w_phi0", "pickup", 0.0);
  c.pickup_noise = jget_or<bool>(pu, "noise", "pickup", true);

  const auto& sq = jfield(j, "squid", "");
  c.chain.L_pickup = jget<double>(sq, "L_pickup_h", "squid");
  c.chain.L_input = jget<double>(sq, "L_input_h", "squid");
  c.chain.L_parasitic = jget<double>(sq, "L_parasitic_h", "squid");
  c.chain.M_input = jget<double>(sq, "M_input_h", "squid");
  c.chain.M_Finput = jget<double>(sq, "M_Finput_h", "squid");
  c.chain.R_F = jget<double>(sq, "R_F_ohm", "squid");
  c.chain.noise_floor = jget_or<double>(sq, "noise_floor_phi0_rthz", "squid", 0.0);

  if (j.contains("analysis")) {
    const auto& an = j.at("analysis");
    auto& o = c.analysis;
    o.chunk_seconds = jget_or<double>(an, "chunk_seconds", "analysis", o.chunk_seconds);
    o.segment_seconds = jget_or<double>(an, "segment_seconds", "analysis", o.segment_seconds);
    o.quiet_percentile = jget_or<double>(an, "quiet_percentile", "analysis", o.quiet_percentile);
    o.band_halfwidth_hz = jget_or<double>(an, "band_halfwidth_hz", "analysis", o.band_halfwidth_hz);
    o.harmonic_halfwidth_hz =
        jget_or<double>(an, "harmonic_halfwidth_hz", "analysis", o.harmonic_halfwidth_hz);
    o.histogram_bins = jget_or<int>(an, "histogram_bins", "analysis", o.histogram_bins);
  }

  c.output_dir = jget_or<std::string>(j, "output_dir", "", c.output_dir);
  c.validate();
  return c;
}

/// Parse "a.b.c=value" and apply to the JSON tree; value parsed as JSON,
/// falling back to string.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("--set expects path=value, got: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  nlohmann::json* node = &j;
  std::istringstream keys(path);
  std::string key;
  std::string walked;
  while (std::getline(keys, key, '.')) {
    if (key.empty()) throw ConfigError("--set: empty key in path " + path);
    walked += (walked.empty() ? "" : ".") + key;
    if (keys.peek() == EOF) {
      nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
      (*node)[key] = parsed.is_discarded() ? nlohmann::json(value) : parsed;
      return;
    }
    if (!node->contains(key)) (*node)[key] = nlohmann::json::object();
    node = &(*node)[key];
  }
}

inline nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("malformed JSON in " + path);
  return j;
}

/// FNV-1a over the canonical dump; stamped into every output for idempotence.
inline std::uint64_t config_hash(const nlohmann::json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

} // namespace levsim
