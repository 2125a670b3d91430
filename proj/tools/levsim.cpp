// Command-line front end: field mapping, potential fitting, simulation,
// analysis and the end-to-end reproduction pipeline, all driven by one JSON
// config.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "levsim/config.hpp"
#include "levsim/pipeline.hpp"

using namespace levsim;
namespace fs = std::filesystem;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::vector<std::string> overrides;
};

CLI::App* add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "master config JSON")->required();
  cmd->add_option("--out", args.out_dir, "output directory (default from config)");
  cmd->add_option("--seed", args.seed, "override simulation.seed")->each([&](const std::string&) {
    args.seed_set = true;
  });
  cmd->add_option("--set", args.overrides, "override config value, path.to.key=value");
  return cmd;
}

struct Loaded {
  MasterConfig cfg;
  nlohmann::json raw;
  std::uint64_t hash = 0;
  fs::path out;
};

Loaded load(const CommonArgs& args) {
  Loaded l;
  l.raw = load_json_file(args.config_path);
  for (const auto& ov : args.overrides) apply_override(l.raw, ov);
  if (args.seed_set) l.raw["simulation"]["seed"] = args.seed;
  l.cfg = parse_master_config(l.raw);
  l.hash = config_hash(l.raw);
  l.out = args.out_dir.empty() ? fs::path(l.cfg.output_dir) : fs::path(args.out_dir);
  fs::create_directories(l.out);
  return l;
}

void write_json(const fs::path& path, nlohmann::json j, std::uint64_t hash) {
  j["config_hash"] = hash;
  std::ofstream out(path);
  out << j.dump(2) << "\n";
}

std::FILE* open_csv(const fs::path& path, const std::string& header, std::uint64_t hash) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot write " + path.string());
  std::fprintf(f, "# config_hash=%016llx\n%s\n", static_cast<unsigned long long>(hash),
               header.c_str());
  return f;
}

nlohmann::json fit_json(const PotentialFit& fit) {
  nlohmann::json j;
  j["mass_kg"] = fit.model.mass;
  j["origin_m"] = {fit.model.origin.x, fit.model.origin.y, fit.model.origin.z};
  j["frequency_hz"] = {fit.model.omega.x / (2 * pi), fit.model.omega.y / (2 * pi),
                       fit.model.omega.z / (2 * pi)};
  j["omega_rad_s"] = {fit.model.omega.x, fit.model.omega.y, fit.model.omega.z};
  std::vector<double> beta, gp;
  for (int i = 0; i <= 2; ++i)
    for (int jj = i; jj <= 2; ++jj)
      for (int k = jj; k <= 2; ++k) beta.push_back(fit.model.beta(i, jj, k));
  for (int i = 0; i <= 2; ++i)
    for (int jj = i; jj <= 2; ++jj)
      for (int k = jj; k <= 2; ++k)
        for (int l = k; l <= 2; ++l) gp.push_back(fit.model.gamma_prime(i, jj, k, l));
  j["beta_sorted_tuples"] = beta;
  j["gamma_prime_sorted_tuples"] = gp;
  j["rms_residual_n"] = fit.rms_residual;
  j["rms_force_n"] = fit.rms_force;
  j["condition_number"] = fit.condition_number;
  const GammaMatrix g = pulling_matrix(fit.model);
  j["pulling_gamma_s2m2"] = {g(0, 0), g(0, 1), g(0, 2), g(1, 0), g(1, 1),
                             g(1, 2), g(2, 0), g(2, 1), g(2, 2)};
  return j;
}

int cmd_fieldmap(const CommonArgs& args) {
  const Loaded l = load(args);
  const TrapReport trap = characterize_trap(l.cfg);
  write_json(l.out / "fieldmap_report.json", trap_report_json(trap), l.hash);

  // Field and gradient-norm grid on the two symmetry planes through the zero.
  std::FILE* f = open_csv(l.out / "fieldmap.csv", "x_m,y_m,z_m,Bx_T,By_T,Bz_T,Bnorm_T", l.hash);
  const Vec3 c = trap.field_zero;
  const Vec3 ext = l.cfg.search_box.extent();
  const int n = 41;
  for (int plane = 0; plane < 2; ++plane)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        Vec3 r = c;
        const double a = -0.5 + i / (n - 1.0), b = -0.5 + j / (n - 1.0);
        if (plane == 0) {
          r.x += a * ext.x;
          r.y += b * ext.y;
        } else {
          r.y += a * ext.y;
          r.z += b * ext.z;
        }
        const Vec3 B = field_at(l.cfg.geometry, r).B;
        std::fprintf(f, "%.9e,%.9e,%.9e,%.6e,%.6e,%.6e,%.6e\n", r.x, r.y, r.z, B.x, B.y, B.z,
                     B.norm());
      }
  std::fclose(f);

  std::printf("frequencies_hz %.3f %.3f %.3f\n", trap.omega.x / (2 * pi), trap.omega.y / (2 * pi),
              trap.omega.z / (2 * pi));
  std::printf("zeta %.5f %.5f %.5f\n", trap.zeta.x, trap.zeta.y, trap.zeta.z);
  std::printf("lift_force_nN_at_0.8A %.2f\n", trap.lift_force * 1e9);
  return 0;
}

int cmd_fit_potential(const CommonArgs& args) {
  const Loaded l = load(args);
  const TrapReport trap = characterize_trap(l.cfg);
  const PotentialFit fit = fit_trap_potential(l.cfg, trap.equilibrium);
  write_json(l.out / "potential_fit.json", fit_json(fit), l.hash);
  std::printf("frequencies_hz %.3f %.3f %.3f rms_residual_rel %.3e\n",
              fit.model.omega.x / (2 * pi), fit.model.omega.y / (2 * pi),
              fit.model.omega.z / (2 * pi), fit.rms_residual / fit.rms_force);
  return 0;
}

int cmd_simulate(const CommonArgs& args) {
  const Loaded l = load(args);
  const TrapReport trap = characterize_trap(l.cfg);
  const PotentialFit fit = fit_trap_potential(l.cfg, trap.equilibrium);
  SimConfig sim = l.cfg.sim;
  sim.drive_psd = steady_state_tune(fit.model, sim, l.cfg.target_rms,
                                    std::min(l.cfg.sim.duration, 120.0));
  const Trajectory traj = integrate(fit.model, sim);
  const VoltageTrace volts = transduce(l.cfg.pickup, l.cfg.chain, traj, l.cfg.pickup_noise,
                                       sim.rng_seed ^ 0x9e3779b97f4a7c15ULL);

  std::FILE* f = open_csv(l.out / "voltage.csv", "t_s,volts", l.hash);
  for (std::size_t k = 0; k < volts.volts.size(); ++k)
    std::fprintf(f, "%.6f,%.9e\n", k / volts.sample_rate, volts.volts[k]);
  std::fclose(f);

  nlohmann::json meta;
  meta["drive_psd_n2_hz"] = {sim.drive_psd.x, sim.drive_psd.y, sim.drive_psd.z};
  meta["sample_rate_hz"] = volts.sample_rate;
  meta["samples"] = volts.volts.size();
  meta["fit"] = fit_json(fit);
  write_json(l.out / "simulate_meta.json", meta, l.hash);
  std::printf("wrote %zu samples at %.0f Hz\n", volts.volts.size(), volts.sample_rate);
  return 0;
}

int cmd_analyze(const CommonArgs& args, const std::string& trace_path) {
  const Loaded l = load(args);
  const TrapReport trap = characterize_trap(l.cfg);
  const PotentialFit fit = fit_trap_potential(l.cfg, trap.equilibrium);

  std::ifstream in(trace_path.empty() ? (l.out / "voltage.csv").string() : trace_path);
  if (!in) throw std::runtime_error("cannot open voltage trace");
  std::vector<double> volts;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line[0] == 't') continue;
    const auto comma = line.find(',');
    volts.push_back(std::stod(line.substr(comma + 1)));
  }

  const PredictedBands bands = predict_bands(fit.model, l.cfg.target_rms, l.cfg.analysis);
  const auto seg = static_cast<std::size_t>(l.cfg.analysis.segment_seconds * l.cfg.sim.sample_rate);
  const auto chunks = chunk_analysis(volts, l.cfg.sim.sample_rate, l.cfg.analysis.chunk_seconds,
                                     bands.fundamental, seg, {},
                                     l.cfg.analysis.harmonic_halfwidth_hz);

  std::FILE* f = open_csv(l.out / "chunks.csv",
                          "t_start_s,f_x_hz,f_y_hz,f_z_hz,area_x_v2,area_y_v2,area_z_v2,complete",
                          l.hash);
  for (const auto& c : chunks)
    std::fprintf(f, "%.1f,%.6f,%.6f,%.6f,%.6e,%.6e,%.6e,%d\n", c.t_start, c.peaks[0].frequency,
                 c.peaks[1].frequency, c.peaks[2].frequency, c.peaks[0].area, c.peaks[1].area,
                 c.peaks[2].area, c.complete() ? 1 : 0);
  std::fclose(f);

  const PullingStudy study = pulling_study(chunks, l.cfg.analysis.quiet_percentile);
  const Mat3 coeff = pulling_coefficients(to_mat3(pulling_matrix(fit.model)), fit.model.omega);
  const Vec3 eta = efficiencies_from_slopes(study.slopes, coeff);
  nlohmann::json j;
  j["slopes_hz_per_v2"] = {study.slopes(0, 0), study.slopes(0, 1), study.slopes(0, 2),
                           study.slopes(1, 0), study.slopes(1, 1), study.slopes(1, 2),
                           study.slopes(2, 0), study.slopes(2, 1), study.slopes(2, 2)};
  j["eta_m2_per_v2"] = {eta.x, eta.y, eta.z};
  j["chunks_used"] = study.chunks_used;
  write_json(l.out / "pulling_fit.json", j, l.hash);
  std::printf("chunks %zu eta %.3e %.3e %.3e\n", chunks.size(), eta.x, eta.y, eta.z);
  return 0;
}

int cmd_reproduce(const CommonArgs& args) {
  const Loaded l = load(args);
  const ReproduceResult r = reproduce(l.cfg);

  nlohmann::json rep;
  rep["trap"] = trap_report_json(r.trap);
  rep["fit"] = fit_json(r.fit);
  rep["drive_psd_n2_hz"] = {r.drive_psd.x, r.drive_psd.y, r.drive_psd.z};
  rep["eta_fitted_m2_per_v2"] = {r.eta.x, r.eta.y, r.eta.z};
  rep["eta_chain_m2_per_v2"] = {r.eta_true.x, r.eta_true.y, r.eta_true.z};
  rep["mode_energy_j"] = {r.mode_energy.x, r.mode_energy.y, r.mode_energy.z};
  rep["tau_energy_s"] = r.tau_energy;
  rep["quality_factors"] = r.quality;
  rep["hist_sup_cdf_distance"] = r.hist_distance;

  nlohmann::json checks;
  auto check = [&](const std::string& name, bool ok) {
    checks[name] = ok ? "pass" : "fail";
    return ok;
  };
  bool all = true;
  const double zt[3] = {0.04, 0.06, 0.12};
  double zeta_sorted[3] = {std::min(r.trap.zeta.x, r.trap.zeta.y),
                           std::max(r.trap.zeta.x, r.trap.zeta.y), r.trap.zeta.z};
  bool zok = true;
  for (int i = 0; i < 3; ++i) zok = zok && std::abs(zeta_sorted[i] / zt[i] - 1.0) < 0.25;
  all &= check("zeta_within_25pct_of_paper", zok);
  all &= check("lift_within_factor2_of_300nN",
               r.trap.lift_force > 150e-9 && r.trap.lift_force < 600e-9);
  bool eok = true;
  for (int i = 0; i < 3; ++i) eok = eok && std::abs(r.eta[i] / r.eta_true[i] - 1.0) < 0.20;
  all &= check("eta_recovered_within_20pct", eok);
  bool hok = true;
  for (int i = 0; i < 3; ++i) hok = hok && r.hist_distance[i] < 0.15;
  all &= check("hist_distance_below_0p15", hok);
  double emax = std::max({r.mode_energy.x, r.mode_energy.y, r.mode_energy.z});
  double emin = std::min({r.mode_energy.x, r.mode_energy.y, r.mode_energy.z});
  all &= check("mode_energy_ratios_within_3", emax / emin < 3.0);
  bool tok = true;
  for (int i = 0; i < 3; ++i) tok = tok && r.tau_energy[i] > 3.0 && r.tau_energy[i] < 300.0;
  all &= check("tau_energy_tens_of_seconds", tok);
  rep["checks"] = checks;
  rep["all_pass"] = all;
  write_json(l.out / "reproduce_report.json", rep, l.hash);

  // Histogram CSV per mode.
  for (int i = 0; i < 3; ++i) {
    if (r.observed_hist[i].counts.empty()) continue;
    std::FILE* f = open_csv(l.out / ("histogram_" + std::string(1, "xyz"[i]) + ".csv"),
                            "f_lo_hz,f_hi_hz,observed,model", l.hash);
    for (std::size_t b = 0; b < r.observed_hist[i].counts.size(); ++b)
      std::fprintf(f, "%.6f,%.6f,%.0f,%.0f\n", r.observed_hist[i].edges[b],
                   r.observed_hist[i].edges[b + 1], r.observed_hist[i].counts[b],
                   r.model_hist[i].counts[b]);
    std::fclose(f);
  }

  for (auto it = checks.begin(); it != checks.end(); ++it)
    std::printf("%-34s %s\n", it.key().c_str(), it.value().get<std::string>().c_str());
  return all ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"levitated-microsphere trap simulator and analysis pipeline"};
  app.require_subcommand(1);

  CommonArgs fieldmap_args, fit_args, sim_args, analyze_args, repro_args;
  std::string trace_path;

  add_common(app.add_subcommand("fieldmap", "map the trap field and report zeta/frequencies"),
             fieldmap_args);
  add_common(app.add_subcommand("fit-potential", "fit the quartic trap potential"), fit_args);
  add_common(app.add_subcommand("simulate", "tune drives, integrate, write voltage trace"),
             sim_args);
  add_common(app.add_subcommand("analyze", "chunk a voltage trace and fit pulling"), analyze_args)
      ->add_option("--trace", trace_path, "voltage CSV path");
  add_common(app.add_subcommand("reproduce", "full end-to-end pipeline with checks"), repro_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("fieldmap")) return cmd_fieldmap(fieldmap_args);
    if (app.got_subcommand("fit-potential")) return cmd_fit_potential(fit_args);
    if (app.got_subcommand("simulate")) return cmd_simulate(sim_args);
    if (app.got_subcommand("analyze")) return cmd_analyze(analyze_args, trace_path);
    if (app.got_subcommand("reproduce")) return cmd_reproduce(repro_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
