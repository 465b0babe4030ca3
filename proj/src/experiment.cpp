#include "csl/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>

#include "csl/creation.hpp"
#include "csl/energy_stress.hpp"
#include "csl/form_factor.hpp"
#include "csl/gravity.hpp"
#include "csl/master_equation.hpp"
#include "csl/trajectories.hpp"

namespace csl {

namespace {

const std::vector<std::string> kLatticeKeys = {"dim", "n", "dx", "dt", "n_steps", "periodic"};
const std::vector<std::string> kCollapseKeys = {"lambda", "a", "m0", "masses"};
const std::vector<std::string> kRunKeys = {"seed",   "n_traj", "threads",      "out_dir",
                                           "format", "mode",   "record_every", "threshold"};

// settings shared by every subcommand after CLI overrides
struct RunSettings {
  std::uint64_t seed = 1;
  std::size_t n_traj = 1000;
  int threads = 1;
  std::filesystem::path out_dir = "out";
  std::string format = "csv";
  std::string mode;
  int record_every = 1;
  double threshold = 0.99;
};

RunSettings run_settings(const Config& cfg, const ExperimentOptions& opt) {
  cfg.check_keys("run", kRunKeys);
  RunSettings s;
  const long long seed = cfg.get_int("run", "seed", 1);
  if (seed < 0) cfg.fail("run", "seed", "must be >= 0");
  s.seed = opt.seed ? *opt.seed : static_cast<std::uint64_t>(seed);
  const long long n_traj = cfg.get_int("run", "n_traj", 1000);
  if (n_traj < 0) cfg.fail("run", "n_traj", "must be >= 0");
  s.n_traj = static_cast<std::size_t>(n_traj);
  const long long threads = cfg.get_int("run", "threads", 1);
  if (threads < 1) cfg.fail("run", "threads", "must be >= 1");
  s.threads = opt.threads ? *opt.threads : static_cast<int>(threads);
  if (s.threads < 1) throw ConfigError("--threads must be >= 1");
  s.out_dir = opt.out_dir ? *opt.out_dir : std::filesystem::path(cfg.get_string("run", "out_dir", "out"));
  s.format = opt.format ? *opt.format : cfg.get_string("run", "format", "csv");
  if (s.format != "csv" && s.format != "json") {
    if (opt.format) throw ConfigError("--format must be csv or json, got '" + s.format + "'");
    cfg.fail("run", "format", "must be csv or json");
  }
  s.mode = opt.mode ? *opt.mode : cfg.get_string("run", "mode", "");
  const long long every = cfg.get_int("run", "record_every", 1);
  if (every < 1) cfg.fail("run", "record_every", "must be >= 1");
  s.record_every = static_cast<int>(every);
  s.threshold = cfg.get_double("run", "threshold", 0.99);
  if (!(s.threshold > 0.5 && s.threshold < 1.0)) cfg.fail("run", "threshold", "must lie in (0.5, 1)");
  return s;
}

double positive(const Config& cfg, const std::string& sec, const std::string& key, double fallback) {
  const double v = cfg.get_double(sec, key, fallback);
  if (!(v > 0.0)) cfg.fail(sec, key, "must be > 0");
  return v;
}

double non_negative(const Config& cfg, const std::string& sec, const std::string& key, double fallback) {
  const double v = cfg.get_double(sec, key, fallback);
  if (!(v >= 0.0)) cfg.fail(sec, key, "must be >= 0");
  return v;
}

int int_at_least(const Config& cfg, const std::string& sec, const std::string& key, long long fallback, long long lo) {
  const long long v = cfg.get_int(sec, key, fallback);
  if (v < lo) cfg.fail(sec, key, "must be >= " + std::to_string(lo));
  return static_cast<int>(v);
}

struct Branches {
  std::vector<Configuration> configs;
  std::vector<cplx> amplitudes;
};

// branch_0, branch_1, ... hold flat coordinate lists (dim numbers per particle)
Branches branches_from_config(const Config& cfg, const LatticeSpec& lattice) {
  Branches b;
  for (int k = 0;; ++k) {
    const std::string key = "branch_" + std::to_string(k);
    if (!cfg.has("scenario", key)) break;
    auto xs = cfg.get_doubles("scenario", key);
    if (xs.size() % static_cast<std::size_t>(lattice.dim) != 0)
      cfg.fail("scenario", key, "needs " + std::to_string(lattice.dim) + " coordinates per particle");
    Configuration c;
    for (std::size_t i = 0; i < xs.size(); i += static_cast<std::size_t>(lattice.dim)) {
      std::array<double, 3> x{0.0, 0.0, 0.0};
      for (int d = 0; d < lattice.dim; ++d) x[static_cast<std::size_t>(d)] = xs[i + static_cast<std::size_t>(d)];
      std::size_t cell = 0;
      try {
        cell = lattice.cell_at(x);
      } catch (const ConfigError& e) {
        cfg.fail("scenario", key, e.what());
      }
      auto it = std::find_if(c.sites.begin(), c.sites.end(), [&](const Occupation& o) { return o.cell == cell; });
      if (it != c.sites.end()) {
        it->count += 1.0;
      } else {
        c.sites.push_back({cell, 1.0, 0});
      }
    }
    b.configs.push_back(std::move(c));
  }
  if (b.configs.size() < 2) cfg.fail("scenario", "branch_0", "at least two branches (branch_0, branch_1) are required");
  for (const auto& k : cfg.keys("scenario"))
    if (k.rfind("branch_", 0) == 0) {
      const std::string idx = k.substr(7);
      if (idx.empty() || !std::all_of(idx.begin(), idx.end(), ::isdigit) ||
          std::stoul(idx) >= b.configs.size())
        cfg.fail("scenario", k, "branch keys must be numbered consecutively from 0");
    }
  auto amps = cfg.get_doubles("scenario", "amplitudes");
  if (amps.size() != b.configs.size())
    cfg.fail("scenario", "amplitudes", "needs one entry per branch (" + std::to_string(b.configs.size()) + ")");
  auto phases = cfg.get_doubles("scenario", "phases", std::vector<double>(amps.size(), 0.0));
  if (phases.size() != amps.size()) cfg.fail("scenario", "phases", "needs one entry per branch");
  double norm = 0.0;
  for (std::size_t r = 0; r < amps.size(); ++r) {
    b.amplitudes.push_back(std::polar(amps[r], phases[r]));
    norm += amps[r] * amps[r];
  }
  if (std::abs(norm - 1.0) > 1e-9) cfg.fail("scenario", "amplitudes", "squared amplitudes must sum to 1");
  return b;
}

Json table_json(const Table& t) {
  Json j;
  j["columns"] = t.columns;
  j["rows"] = Json::array();
  for (const auto& row : t.rows) j["rows"].push_back(row);
  return j;
}

Json outcomes_json(const std::vector<std::size_t>& counts, const std::vector<double>& freq,
                   const std::vector<double>& err) {
  Json arr = Json::array();
  for (std::size_t k = 0; k < counts.size(); ++k) {
    Json o;
    if (k + 1 == counts.size()) {
      o["outcome"] = "undecided";
    } else {
      o["outcome"] = k;
    }
    o["count"] = counts[k];
    o["frequency"] = freq[k];
    o["stderr"] = err[k];
    arr.push_back(o);
  }
  return arr;
}

struct Output {
  Json body;
  Table series;
  std::vector<std::string> warnings;
};

// ---- collapse: trajectory ensemble on branch superpositions

std::vector<std::string> branch_keys(const Config& cfg, std::vector<std::string> extra) {
  for (const auto& k : cfg.keys("scenario"))
    if (k.rfind("branch_", 0) == 0) extra.push_back(k);
  return extra;
}

TrajectoryConfig branch_trajectory_config(const Config& cfg, const RunSettings& rs, const LatticeSpec& l,
                                          const CollapseParams& p, const Branches& b) {
  SmearingKernel kernel(l, p.a);
  TrajectoryConfig tc;
  tc.channels = branch_channels(kernel, p, b.configs);
  if (cfg.has("scenario", "energies")) {
    auto e = cfg.get_doubles("scenario", "energies");
    if (e.size() != b.configs.size()) cfg.fail("scenario", "energies", "needs one entry per branch");
    tc.H = build_hamiltonian(GravityBranches{e}, l);
  } else {
    tc.H = build_hamiltonian(ZeroHamiltonian{b.configs.size()}, l);
  }
  tc.lambda = p.lambda;
  tc.dt = l.dt;
  tc.n_steps = l.n_steps;
  tc.record_every = rs.record_every;
  tc.psi0 = CVector(static_cast<Eigen::Index>(b.amplitudes.size()));
  for (std::size_t r = 0; r < b.amplitudes.size(); ++r) tc.psi0[static_cast<Eigen::Index>(r)] = b.amplitudes[r];
  tc.collapse_threshold = rs.threshold;
  return tc;
}

Output collapse_experiment(const Config& cfg, const RunSettings& rs, const LatticeSpec& l, const CollapseParams& p) {
  cfg.check_keys("scenario", branch_keys(cfg, {"amplitudes", "phases", "energies"}));
  const Branches b = branches_from_config(cfg, l);
  TrajectoryConfig tc = branch_trajectory_config(cfg, rs, l, p, b);
  if (rs.n_traj < 1) cfg.fail("run", "n_traj", "collapse needs at least one trajectory");
  auto sum = run_ensemble(tc, rs.n_traj, rs.seed, rs.threads);
  const std::size_t nb = b.configs.size();

  Output out;
  out.body["command"] = "collapse";
  out.body["n_traj"] = sum.n_traj;
  out.body["lambda"] = p.lambda;
  out.body["t_max"] = l.dt * l.n_steps;
  out.body["threshold"] = sum.threshold;
  out.body["classifier"] = "sticky threshold at finite t";
  out.body["outcomes"] = outcomes_json(sum.outcome_counts, sum.outcome_frequency, sum.outcome_stderr);
  Json born = Json::array();
  for (auto c : b.amplitudes) born.push_back(std::norm(c));
  out.body["born_weights"] = born;
  out.body["decoherence_rates"] = Json::array();
  const Eigen::MatrixXd D = dephasing_matrix(tc.channels, p.lambda);
  for (std::size_t r = 0; r < nb; ++r)
    for (std::size_t s = r + 1; s < nb; ++s)
      out.body["decoherence_rates"].push_back({{"r", r}, {"s", s}, {"rate", D(r, s)}});

  out.series.columns = {"t"};
  for (std::size_t r = 0; r < nb; ++r) {
    out.series.columns.push_back("p_" + std::to_string(r));
    out.series.columns.push_back("p_" + std::to_string(r) + "_stderr");
  }
  for (std::size_t k = 0; k < sum.times.size(); ++k) {
    std::vector<double> row{sum.times[k]};
    for (std::size_t r = 0; r < nb; ++r) {
      row.push_back(sum.mean_weights[k][r]);
      row.push_back(sum.stderr_weights[k][r]);
    }
    out.series.add_row(std::move(row));
  }
  const std::size_t undecided = sum.outcome_counts.back();
  if (undecided > 0)
    out.warnings.push_back(std::to_string(undecided) + " trajectories undecided at t_max; lengthen the run");
  return out;
}

// ---- lindblad: deterministic ensemble dynamics for the same branch scenarios

Output lindblad_experiment(const Config& cfg, const RunSettings& rs, const LatticeSpec& l, const CollapseParams& p) {
  cfg.check_keys("scenario", branch_keys(cfg, {"amplitudes", "phases", "energies", "step_tolerance"}));
  const Branches b = branches_from_config(cfg, l);
  TrajectoryConfig tc = branch_trajectory_config(cfg, rs, l, p, b);
  auto model = lindblad_model(tc.H, tc.channels, p.lambda);
  MasterOptions mo;
  mo.dt = l.dt;
  mo.t_max = l.dt * l.n_steps;
  mo.record_every = rs.record_every;
  mo.step_tolerance = cfg.get_double("scenario", "step_tolerance", 1e-8);
  const CMatrix rho0 = tc.psi0 * tc.psi0.adjoint();
  auto sol = integrate_master(rho0, model, mo);
  const std::size_t nb = b.configs.size();

  Output out;
  out.body["command"] = "lindblad";
  out.body["lambda"] = p.lambda;
  out.body["t_max"] = mo.t_max;
  out.body["dt"] = mo.dt;
  out.body["max_step_error"] = sol.max_step_error;
  Json pairs = Json::array();
  for (std::size_t r = 0; r < nb; ++r)
    for (std::size_t s = r + 1; s < nb; ++s) {
      std::vector<double> logs;
      for (const auto& rho : sol.rho) logs.push_back(std::log(std::abs(rho(r, s))));
      Json pj{{"r", r}, {"s", s}, {"rate", model.D(r, s)}};
      if (std::abs(rho0(r, s)) > 0.0) pj["measured_rate"] = -fit_slope(sol.times, logs);
      pairs.push_back(pj);
    }
  out.body["decoherence_rates"] = pairs;
  Json pop = Json::array();
  for (std::size_t r = 0; r < nb; ++r) pop.push_back(sol.rho.back()(r, r).real());
  out.body["final_populations"] = pop;

  out.series.columns = {"t"};
  for (std::size_t r = 0; r < nb; ++r)
    for (std::size_t s = r; s < nb; ++s) {
      const std::string base = "rho_" + std::to_string(r) + "_" + std::to_string(s);
      out.series.columns.push_back(base + "_re");
      out.series.columns.push_back(base + "_im");
    }
  for (std::size_t k = 0; k < sol.times.size(); ++k) {
    std::vector<double> row{sol.times[k]};
    for (std::size_t r = 0; r < nb; ++r)
      for (std::size_t s = r; s < nb; ++s) {
        row.push_back(sol.rho[k](r, s).real());
        row.push_back(sol.rho[k](r, s).imag());
      }
    out.series.add_row(std::move(row));
  }
  return out;
}

// ---- creation: oscillator field with a linear source

Output creation_experiment(const Config& cfg, const RunSettings& rs, const LatticeSpec& l, const CollapseParams& p) {
  cfg.check_keys("scenario", {"m", "g", "g_width", "t_max", "n_max"});
  const std::string mode = rs.mode.empty() ? "ode" : rs.mode;
  if (mode != "ode" && mode != "closed" && mode != "trajectory")
    throw ConfigError("creation mode must be ode, closed or trajectory, got '" + mode + "'");
  const double m = positive(cfg, "scenario", "m", 1.0);
  const double g0 = cfg.get_double("scenario", "g");
  const double g_width = non_negative(cfg, "scenario", "g_width", 0.0);
  const double t_max = positive(cfg, "scenario", "t_max", l.dt * l.n_steps);
  // source profile g(z); a zero width means a uniform source
  std::vector<double> g(l.n_cells(), g0);
  if (g_width > 0.0)
    for (std::size_t z = 0; z < g.size(); ++z) {
      const auto x = l.position(z);
      const double r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
      g[z] = g0 * std::exp(-r2 / (2.0 * g_width * g_width));
    }
  const std::size_t centre = l.cell_at({0.0, 0.0, 0.0});
  const CreationSite site{m, p.lambda, g[centre]};
  const double kappa = 0.5 * p.lambda;

  Output out;
  out.body["command"] = "creation";
  out.body["mode"] = mode;
  out.body["m"] = m;
  out.body["g"] = g0;
  out.body["lambda"] = p.lambda;
  out.body["t_max"] = t_max;
  out.body["asymptotic_slope"] = site.g * site.g * p.lambda * m / (m * m + kappa * kappa);
  out.series.columns = {"t", "xi_re", "xi_im", "n_mean", "e_density", "ew_density"};

  auto ew = [&](double t) { return creation_wfield_energy(l, centre, t, m, p.lambda, p.a, g); };
  if (mode == "trajectory") {
    const int n_max = int_at_least(cfg, "scenario", "n_max", 12, 1);
    if (rs.n_traj < 1) cfg.fail("run", "n_traj", "trajectory mode needs at least one trajectory");
    auto tr = creation_trajectory_mode(site, n_max, t_max, l.dt, rs.n_traj, rs.seed, rs.threads, rs.record_every);
    out.series.columns.insert(out.series.columns.end(), {"xi_re_stderr", "xi_im_stderr", "n_stderr"});
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
      const double h = m * tr.mean_n[k] + 2.0 * site.g * tr.mean_xi[k].real();
      out.series.add_row({tr.times[k], tr.mean_xi[k].real(), tr.mean_xi[k].imag(), tr.mean_n[k], h, ew(tr.times[k]),
                          tr.stderr_xi_re[k], tr.stderr_xi_im[k], tr.stderr_n[k]});
    }
    out.body["n_traj"] = rs.n_traj;
    out.body["n_max"] = n_max;
    out.body["max_top_occupation"] = tr.max_top_occupation;
    if (tr.truncation_warning)
      out.warnings.push_back("Fock truncation: top-level occupation " + format_double(tr.max_top_occupation) +
                             " exceeds 1e-6; raise n_max");
    return out;
  }

  std::vector<CreationState> states;
  if (mode == "ode") {
    states = creation_ode_integrate(site, t_max, l.dt, rs.record_every);
  } else {
    const long steps = std::lround(t_max / l.dt);
    for (long s = 0; s <= steps; s += rs.record_every) states.push_back(creation_mean_fields(s * l.dt, site));
    if (steps % rs.record_every != 0) states.push_back(creation_mean_fields(steps * l.dt, site));
  }
  double max_err = 0.0;
  for (const auto& st : states) {
    const auto cf = creation_mean_fields(st.t, site);
    max_err = std::max({max_err, std::abs(st.xi - cf.xi), std::abs(st.n - cf.n), std::abs(st.h - cf.h)});
    out.series.add_row({st.t, st.xi.real(), st.xi.imag(), st.n, st.h, ew(st.t)});
  }
  out.body["max_error_vs_closed_form"] = max_err;
  out.body["final_energy_rate"] = states.back().h_rate;
  // whole-lattice energy bookkeeping at the final time
  const double tf = states.back().t;
  double e_w = 0.0;
  for (std::size_t x = 0; x < l.n_cells(); ++x)
    e_w += l.cell_volume() * creation_wfield_energy(l, x, tf, m, p.lambda, p.a, g);
  const double e_p = creation_particle_energy(l, tf, m, p.lambda, g);
  out.body["particle_energy"] = e_p;
  out.body["wfield_energy"] = e_w;
  out.body["energy_cancellation"] = e_p != 0.0 ? std::abs(e_p + e_w) / std::abs(e_p) : std::abs(e_w);
  return out;
}

// ---- gravity: proper-time collapse of static mass superpositions

Output gravity_experiment(const Config& cfg, const RunSettings& rs, const LatticeSpec& l, const CollapseParams& p) {
  cfg.check_keys("scenario", branch_keys(cfg, {"amplitudes", "phases", "gm", "variant", "times"}));
  GravityScenario sc;
  sc.lattice = l;
  sc.params = p;
  const Branches b = branches_from_config(cfg, l);
  sc.branches = b.configs;
  sc.amplitudes = b.amplitudes;
  sc.gm = non_negative(cfg, "scenario", "gm", 0.0);
  const std::string variant = cfg.get_string("scenario", "variant", "point");
  if (variant == "point") {
    sc.variant = PotentialVariant::point;
  } else if (variant == "smeared") {
    sc.variant = PotentialVariant::smeared;
  } else {
    cfg.fail("scenario", "variant", "must be point or smeared");
  }
  const std::string mode_name = rs.mode.empty() ? "rescaled" : rs.mode;
  GravityMode mode = GravityMode::rescaled;
  if (mode_name == "smeared-clock") {
    mode = GravityMode::smeared_clock;
  } else if (mode_name != "rescaled") {
    throw ConfigError("gravity mode must be rescaled or smeared-clock, got '" + mode_name + "'");
  }
  auto times = cfg.get_doubles("scenario", "times", {l.dt * l.n_steps});
  for (double t : times)
    if (!(t > 0.0)) cfg.fail("scenario", "times", "entries must be > 0");
  if (rs.n_traj < 1) cfg.fail("run", "n_traj", "gravity needs at least one trajectory");
  auto run = gravity_collapse_run(sc, times, mode, rs.seed, rs.n_traj, rs.threads, rs.threshold);
  auto rates = gravity_decay_rate(sc, mode, 0, 1, &run);

  Output out;
  out.body["command"] = "gravity";
  out.body["mode"] = mode_name;
  out.body["variant"] = variant;
  out.body["gm"] = sc.gm;
  out.body["n_traj"] = run.n_traj;
  out.body["outcomes"] = outcomes_json(run.outcome_counts, run.outcome_frequency, run.outcome_stderr);
  Json born = Json::array();
  for (auto c : b.amplitudes) born.push_back(std::norm(c));
  out.body["born_weights"] = born;
  Json rj;
  rj["oracle"] = rates.oracle;
  rj["flat"] = rates.flat;
  rj["asymmetric_reading"] = rates.asymmetric_reading;
  rj["symmetric_reading"] = rates.symmetric_reading;
  rj["simulated"] = rates.simulated;
  rj["simulated_stderr"] = rates.simulated_stderr;
  rj["relative_difference"] = rates.relative_difference;
  out.body["rates_0_1"] = rj;

  out.series.columns = {"t", "log_coherence_0_1", "log_coherence_0_1_stderr", "log_coherence_0_1_oracle",
                        "rho_0_0", "rho_0_0_stderr"};
  for (std::size_t k = 0; k < run.times.size(); ++k)
    out.series.add_row({run.times[k], run.log_coherence[k](0, 1), run.log_coherence_stderr[k](0, 1),
                        run.log_coherence_oracle[k](0, 1), run.mean_rho[k](0, 0).real(), run.stderr_rho_re[k](0, 0)});
  return out;
}

// ---- formfactor: regularised G, Omega-quadrature grid and the smeared spatial integral

Output formfactor_experiment(const Config& cfg, const RunSettings&) {
  cfg.check_keys("scenario", {"t1", "t2", "width", "radius", "eps", "grid_n", "sigma_min", "sigma_max", "t1_min",
                              "t1_max", "grid_eps"});
  const double T1 = cfg.get_double("scenario", "t1", 0.5);
  const double T2 = cfg.get_double("scenario", "t2", 1.0);
  const double width = positive(cfg, "scenario", "width", 1.0);
  const double radius = positive(cfg, "scenario", "radius", 40.0);
  const double eps = positive(cfg, "scenario", "eps", 0.01);
  const int grid_n = int_at_least(cfg, "scenario", "grid_n", 20, 1);
  const double smin = cfg.get_double("scenario", "sigma_min", -0.2);
  const double smax = cfg.get_double("scenario", "sigma_max", 2.0);
  const double tmin = positive(cfg, "scenario", "t1_min", 0.5);
  const double tmax = positive(cfg, "scenario", "t1_max", 2.0);
  const double geps = positive(cfg, "scenario", "grid_eps", 1e-4);
  if (!(smax > smin)) cfg.fail("scenario", "sigma_max", "must exceed sigma_min");
  if (!(tmax >= tmin)) cfg.fail("scenario", "t1_max", "must be >= t1_min");

  Output out;
  out.series.columns = {"sigma", "t1", "omega_quadrature", "braced", "relative_error"};
  double max_rel = 0.0, max_anti = 0.0;
  for (int i = 0; i < grid_n; ++i)
    for (int j = 0; j < grid_n; ++j) {
      const double s = grid_n == 1 ? smin : smin + (smax - smin) * i / (grid_n - 1);
      const double t = grid_n == 1 ? tmin : tmin + (tmax - tmin) * j / (grid_n - 1);
      const double q = omega_quadrature(s, t, geps);
      const double br = braced_factor(s, t, geps);
      const double rel = std::abs(q + br) / std::max(std::abs(br), 1e-300);
      max_rel = std::max(max_rel, rel);
      out.series.add_row({s, t, q, br, rel});
      // t1 <-> t2 swaps sigma's sign and the two T's
      const double ga = g_closed({s, t, T2, geps});
      const double gb = g_closed({-s, T2, t, geps});
      max_anti = std::max(max_anti, std::abs(ga + gb) / std::max(std::abs(ga), 1e-300));
    }
  auto res = g_spatial_integral(T1, T2, width, eps, radius);
  auto flip = g_spatial_integral(T2, T1, width, eps, radius);

  out.body["command"] = "formfactor";
  out.body["grid_n"] = grid_n;
  out.body["grid_eps"] = geps;
  out.body["omega_grid_max_relative_error"] = max_rel;
  out.body["antisymmetry_max_relative"] = max_anti;
  Json sj;
  sj["t1"] = res.T1;
  sj["t2"] = res.T2;
  sj["width"] = res.width;
  sj["radius"] = res.radius;
  sj["eps"] = res.eps;
  sj["values"] = res.values;
  sj["extrapolated_two_point"] = res.extrapolated_two;
  sj["extrapolated"] = res.extrapolated;
  sj["converged"] = res.converged;
  sj["expected"] = res.expected;
  sj["relative_error"] = res.relative_error;
  sj["swapped_extrapolated"] = flip.extrapolated;
  out.body["spatial_integral"] = sj;
  if (!res.converged) out.warnings.push_back("eps extrapolation of the spatial integral did not settle within 10%");
  return out;
}

// ---- tensors: continuity residuals, interacting momentum balance, energy gain

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v)
    if (std::isfinite(x)) m = std::max(m, std::abs(x));
  return m;
}

Output tensors_experiment(const Config& cfg, const RunSettings& rs, const LatticeSpec& l, const CollapseParams& p) {
  cfg.check_keys("scenario", {"m", "width", "k0", "centre", "v0", "range", "reduced"});
  const std::string mode = rs.mode.empty() ? "continuity" : rs.mode;
  const double m = positive(cfg, "scenario", "m", 1.0);
  const double width = positive(cfg, "scenario", "width", 1.0);
  auto k0v = cfg.get_doubles("scenario", "k0", {0.0, 0.0, 0.0});
  auto cv = cfg.get_doubles("scenario", "centre", {0.0, 0.0, 0.0});
  std::array<double, 3> k0{}, centre{};
  for (std::size_t i = 0; i < 3; ++i) {
    k0[i] = i < k0v.size() ? k0v[i] : 0.0;
    centre[i] = i < cv.size() ? cv[i] : 0.0;
  }
  Output out;
  out.body["command"] = "tensors";
  out.body["mode"] = mode;

  if (mode == "continuity") {
    double rm[2], re[2];
    std::vector<double> base_m, base_e;
    for (int h = 0; h < 2; ++h) {
      LatticeSpec lh = l;
      lh.n = l.n << h;
      lh.dx = l.dx / (1 << h);
      auto H = build_hamiltonian(FreeLattice{m}, lh);
      CVector psi = gaussian_packet(lh, centre, width, k0) / std::sqrt(lh.cell_volume());
      auto a = mass_continuity_residual(psi, H, lh, m);
      auto e = energy_continuity_residual(psi, H, lh, m);
      rm[h] = max_abs(a);
      re[h] = max_abs(e);
      if (h == 0) {
        base_m = a;
        base_e = e;
      }
    }
    out.body["mass_residual"] = {rm[0], rm[1]};
    out.body["energy_residual"] = {re[0], re[1]};
    out.body["mass_ratio"] = rm[0] / rm[1];
    out.body["energy_ratio"] = re[0] / re[1];
    out.series.columns = {"cell", "mass_residual", "energy_residual"};
    for (std::size_t c = 0; c < base_m.size(); ++c)
      if (std::isfinite(base_m[c]) && std::isfinite(base_e[c]))
        out.series.add_row({static_cast<double>(c), base_m[c], base_e[c]});
    return out;
  }

  if (mode == "interacting") {
    if (l.dim != 1) cfg.fail("lattice", "dim", "interacting mode runs on a 1-D lattice");
    const double V0 = cfg.get_double("scenario", "v0", 2.0);
    const double s = positive(cfg, "scenario", "range", 1.0);
    auto V = [=](double x) { return V0 * std::exp(-x * x / (2.0 * s * s)); };
    auto dVdx = [=](double x) { return -V0 * x / (s * s) * std::exp(-x * x / (2.0 * s * s)); };
    double r[2], f[2];
    PairMomentumBalance first;
    for (int h = 0; h < 2; ++h) {
      LatticeSpec lh = l;
      lh.n = l.n << h;
      lh.dx = l.dx / (1 << h);
      lh.periodic = false;
      auto H = build_hamiltonian(PairPotential{m, V}, lh);
      auto p1 = gaussian_packet(lh, {centre[0] - 1.0, 0.0, 0.0}, width, {k0[0], 0.0, 0.0});
      auto p2 = gaussian_packet(lh, {centre[0] + 1.0, 0.0, 0.0}, width, {-k0[0], 0.0, 0.0});
      const auto n = static_cast<Eigen::Index>(lh.n);
      CVector psi(n * n);
      for (Eigen::Index a = 0; a < n; ++a)
        for (Eigen::Index c = 0; c < n; ++c) psi[a * n + c] = p1[a] * p2[c] / lh.dx;
      auto bal = pair_momentum_balance(psi, H, lh, m, dVdx);
      r[h] = max_abs(bal.residual);
      f[h] = max_abs(bal.force);
      if (h == 0) first = bal;
    }
    out.body["residual"] = {r[0], r[1]};
    out.body["force_scale"] = {f[0], f[1]};
    out.body["residual_ratio"] = r[0] / r[1];
    out.series.columns = {"cell", "momentum_rate", "force", "residual"};
    for (std::size_t c = 0; c < first.residual.size(); ++c)
      if (std::isfinite(first.residual[c]))
        out.series.add_row({static_cast<double>(c), first.momentum_rate[c], first.force[c], first.residual[c]});
    return out;
  }

  if (mode == "energy") {
    EnergyGainScenario sc;
    sc.lattice = l;
    sc.m = m;
    sc.packet_width = width;
    sc.k0 = k0;
    sc.record_every = rs.record_every;
    const bool reduced = cfg.get_bool("scenario", "reduced", l.dim == 3);
    auto res = reduced ? energy_gain_reduced(sc, p) : energy_gain_full(sc, p);
    auto drift = ledger_check(res.series.e_particle, res.series.e_wfield);
    out.body["solver"] = reduced ? "translation_reduced" : "full_density_matrix";
    out.body["measured_slope"] = res.measured_slope;
    out.body["analytic_slope"] = res.analytic;
    out.body["lattice_slope"] = res.lattice;
    out.body["relative_to_analytic"] = (res.measured_slope - res.analytic) / res.analytic;
    out.body["ledger_drift"] = drift.max_drift;
    out.series.columns = {"t", "e_particle", "e_wfield", "e_total"};
    for (std::size_t k = 0; k < res.series.t.size(); ++k)
      out.series.add_row({res.series.t[k], res.series.e_particle[k], res.series.e_wfield[k],
                          res.series.e_particle[k] + res.series.e_wfield[k]});
    return out;
  }
  throw ConfigError("tensors mode must be continuity, interacting or energy, got '" + mode + "'");
}

}  // namespace

const std::vector<std::string>& experiment_commands() {
  static const std::vector<std::string> names = {"collapse", "lindblad", "creation", "gravity", "formfactor", "tensors"};
  return names;
}

LatticeSpec lattice_from_config(const Config& cfg) {
  cfg.check_keys("lattice", kLatticeKeys);
  LatticeSpec l;
  l.dim = static_cast<int>(cfg.get_int("lattice", "dim", 1));
  if (l.dim != 1 && l.dim != 3) cfg.fail("lattice", "dim", "must be 1 or 3");
  l.n = int_at_least(cfg, "lattice", "n", 1, 1);
  l.dx = positive(cfg, "lattice", "dx", 1.0);
  l.dt = positive(cfg, "lattice", "dt", 0.01);
  l.n_steps = int_at_least(cfg, "lattice", "n_steps", 100, 1);
  l.periodic = cfg.get_bool("lattice", "periodic", true);
  l.validate();
  return l;
}

CollapseParams collapse_from_config(const Config& cfg) {
  cfg.check_keys("collapse", kCollapseKeys);
  CollapseParams p;
  p.lambda = non_negative(cfg, "collapse", "lambda", 1.0);
  p.a = positive(cfg, "collapse", "a", 1.0);
  p.m0 = positive(cfg, "collapse", "m0", 1.0);
  if (cfg.has("collapse", "masses")) {
    p.masses = cfg.get_doubles("collapse", "masses");
    for (double m : p.masses)
      if (!(m >= 0.0)) cfg.fail("collapse", "masses", "entries must be >= 0");
  }
  p.validate();
  return p;
}

ExperimentResult run_experiment(const Config& cfg, const ExperimentOptions& options) {
  const auto& cmds = experiment_commands();
  if (std::find(cmds.begin(), cmds.end(), options.command) == cmds.end())
    throw ConfigError("unknown subcommand '" + options.command + "'");
  const RunSettings rs = run_settings(cfg, options);
  const LatticeSpec l = lattice_from_config(cfg);
  const CollapseParams p = collapse_from_config(cfg);

  Output out;
  if (options.command == "collapse") {
    out = collapse_experiment(cfg, rs, l, p);
  } else if (options.command == "lindblad") {
    out = lindblad_experiment(cfg, rs, l, p);
  } else if (options.command == "creation") {
    out = creation_experiment(cfg, rs, l, p);
  } else if (options.command == "gravity") {
    out = gravity_experiment(cfg, rs, l, p);
  } else if (options.command == "formfactor") {
    out = formfactor_experiment(cfg, rs);
  } else {
    out = tensors_experiment(cfg, rs, l, p);
  }

  if (!out.warnings.empty()) out.body["warnings"] = out.warnings;
  const std::string hash = fnv1a_hex(options.command + "\n" + cfg.canonical());

  ExperimentResult result;
  result.summary_text = emit_summary(out.body, hash, rs.seed);
  result.summary = parse_summary(result.summary_text);
  result.warnings = out.warnings;
  std::string series;
  if (rs.format == "csv") {
    series = emit_csv(out.series);
  } else {
    const Json tj = table_json(out.series);
    check_finite(tj, "timeseries");
    series = tj.dump(2) + "\n";
  }

  OutputTransaction tx(rs.out_dir);
  tx.stage("summary.json", result.summary_text);
  tx.stage(rs.format == "csv" ? "timeseries.csv" : "timeseries.json", series);
  result.files = tx.commit();
  return result;
}

ExperimentResult run_experiment(const std::filesystem::path& config_path, const ExperimentOptions& options) {
  return run_experiment(Config::load(config_path), options);
}

int exit_code_for(std::exception_ptr error) {
  try {
    std::rethrow_exception(error);
  } catch (const ConfigError&) {
    return 2;
  } catch (const InvariantViolation&) {
    return 3;
  } catch (const IoError&) {
    return 4;
  } catch (...) {
    return 1;
  }
}

}  // namespace csl
