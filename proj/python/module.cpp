#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "csl/creation.hpp"
#include "csl/energy_stress.hpp"
#include "csl/experiment.hpp"
#include "csl/form_factor.hpp"
#include "csl/gravity.hpp"
#include "csl/master_equation.hpp"
#include "csl/trajectories.hpp"

namespace py = pybind11;
using namespace csl;

namespace {

py::object to_python(const Json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

// one particle of species 0 per coordinate tuple
std::vector<Configuration> make_branches(const LatticeSpec& l, const std::vector<std::vector<double>>& branches) {
  std::vector<Configuration> out;
  for (const auto& b : branches) {
    if (b.size() % static_cast<std::size_t>(l.dim) != 0)
      throw ConfigError("branch coordinates must come in groups of lattice.dim");
    Configuration c;
    for (std::size_t i = 0; i < b.size(); i += static_cast<std::size_t>(l.dim)) {
      std::array<double, 3> x{0.0, 0.0, 0.0};
      for (int d = 0; d < l.dim; ++d) x[static_cast<std::size_t>(d)] = b[i + static_cast<std::size_t>(d)];
      c.sites.push_back({l.cell_at(x), 1.0, 0});
    }
    out.push_back(std::move(c));
  }
  return out;
}

CVector make_state(const std::vector<cplx>& amps) {
  CVector psi(static_cast<Eigen::Index>(amps.size()));
  for (std::size_t i = 0; i < amps.size(); ++i) psi[static_cast<Eigen::Index>(i)] = amps[i];
  return psi;
}

py::dict collapse_ensemble(const LatticeSpec& l, const CollapseParams& p, const std::vector<std::vector<double>>& br,
                           const std::vector<cplx>& amps, std::size_t n_traj, std::uint64_t seed, int threads,
                           double threshold, int record_every, bool store_states) {
  SmearingKernel kernel(l, p.a);
  TrajectoryConfig tc;
  tc.channels = branch_channels(kernel, p, make_branches(l, br));
  tc.H = build_hamiltonian(ZeroHamiltonian{amps.size()}, l);
  tc.lambda = p.lambda;
  tc.dt = l.dt;
  tc.n_steps = l.n_steps;
  tc.record_every = record_every;
  tc.psi0 = make_state(amps);
  tc.collapse_threshold = threshold;
  tc.store_states = store_states;
  EnsembleSummary s;
  {
    py::gil_scoped_release release;
    s = run_ensemble(tc, n_traj, seed, threads);
  }
  py::dict d;
  d["times"] = s.times;
  d["mean_weights"] = s.mean_weights;
  d["stderr_weights"] = s.stderr_weights;
  d["outcome_counts"] = s.outcome_counts;
  d["outcome_frequency"] = s.outcome_frequency;
  d["outcome_stderr"] = s.outcome_stderr;
  if (store_states) d["mean_rho"] = s.mean_rho;
  return d;
}

py::dict lindblad(const LatticeSpec& l, const CollapseParams& p, const std::vector<std::vector<double>>& br,
                  const std::vector<cplx>& amps, int record_every) {
  SmearingKernel kernel(l, p.a);
  auto ch = branch_channels(kernel, p, make_branches(l, br));
  auto model = lindblad_model(build_hamiltonian(ZeroHamiltonian{amps.size()}, l), ch, p.lambda);
  MasterOptions mo;
  mo.dt = l.dt;
  mo.t_max = l.dt * l.n_steps;
  mo.record_every = record_every;
  CVector psi = make_state(amps);
  auto sol = integrate_master(CMatrix(psi * psi.adjoint()), model, mo);
  py::dict d;
  d["times"] = sol.times;
  d["rho"] = sol.rho;
  d["dephasing"] = model.D;
  return d;
}

py::dict creation_state(const CreationState& s) {
  py::dict d;
  d["t"] = s.t;
  d["xi"] = s.xi;
  d["n"] = s.n;
  d["h"] = s.h;
  d["n_rate"] = s.n_rate;
  d["h_rate"] = s.h_rate;
  return d;
}

}  // namespace

PYBIND11_MODULE(csl_lab, m) {
  m.doc() = "Continuous spontaneous localization lab: lattice collapse dynamics and diagnostics";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<InvariantViolation>(m, "InvariantViolation", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  py::class_<LatticeSpec>(m, "LatticeSpec")
      .def(py::init([](int dim, int n, double dx, double dt, int n_steps, bool periodic) {
             LatticeSpec l;
             l.dim = dim;
             l.n = n;
             l.dx = dx;
             l.dt = dt;
             l.n_steps = n_steps;
             l.periodic = periodic;
             l.validate();
             return l;
           }),
           py::arg("dim") = 1, py::arg("n") = 1, py::arg("dx") = 1.0, py::arg("dt") = 1.0, py::arg("n_steps") = 1,
           py::arg("periodic") = true)
      .def_readwrite("dim", &LatticeSpec::dim)
      .def_readwrite("n", &LatticeSpec::n)
      .def_readwrite("dx", &LatticeSpec::dx)
      .def_readwrite("dt", &LatticeSpec::dt)
      .def_readwrite("n_steps", &LatticeSpec::n_steps)
      .def_readwrite("periodic", &LatticeSpec::periodic)
      .def("cell_volume", &LatticeSpec::cell_volume)
      .def("n_cells", &LatticeSpec::n_cells)
      .def("position", &LatticeSpec::position)
      .def("cell_at", &LatticeSpec::cell_at);

  py::class_<CollapseParams>(m, "CollapseParams")
      .def(py::init([](double lambda, double a, double m0, std::vector<double> masses) {
             CollapseParams p{lambda, a, m0, std::move(masses)};
             p.validate();
             return p;
           }),
           py::arg("lambda_") = 1.0, py::arg("a") = 1.0, py::arg("m0") = 1.0,
           py::arg("masses") = std::vector<double>{})
      .def_readwrite("lambda_", &CollapseParams::lambda)
      .def_readwrite("a", &CollapseParams::a)
      .def_readwrite("m0", &CollapseParams::m0)
      .def_readwrite("masses", &CollapseParams::masses);

  m.def("stream_seed", &stream_seed, py::arg("master"), py::arg("index"));
  m.def(
      "sample_noise_vacuum",
      [](const LatticeSpec& l, const CollapseParams& p, std::uint64_t seed) {
        auto r = sample_noise_vacuum(l, p, seed);
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w(
            r.w.data(), static_cast<Eigen::Index>(r.n_steps), static_cast<Eigen::Index>(r.n_cells));
        return Eigen::MatrixXd(w);
      },
      py::arg("lattice"), py::arg("params"), py::arg("seed"), "Vacuum white noise, shape (n_steps, n_cells).");

  m.def(
      "dephasing_matrix",
      [](const LatticeSpec& l, const CollapseParams& p, const std::vector<std::vector<double>>& br) {
        SmearingKernel kernel(l, p.a);
        return dephasing_matrix(branch_channels(kernel, p, make_branches(l, br)), p.lambda);
      },
      py::arg("lattice"), py::arg("params"), py::arg("branches"),
      "D(r, s) for point-particle branches given as coordinate lists.");

  m.def("collapse_ensemble", &collapse_ensemble, py::arg("lattice"), py::arg("params"), py::arg("branches"),
        py::arg("amplitudes"), py::arg("n_traj"), py::arg("seed"), py::arg("threads") = 1,
        py::arg("threshold") = 0.99, py::arg("record_every") = 1, py::arg("store_states") = false,
        "Physical-measure trajectory ensemble for static branches with H = 0.");
  m.def("lindblad", &lindblad, py::arg("lattice"), py::arg("params"), py::arg("branches"), py::arg("amplitudes"),
        py::arg("record_every") = 1, "Ensemble density matrix from the master equation.");

  m.def(
      "creation_mean_fields",
      [](double t, double mass, double lambda, double g) { return creation_state(creation_mean_fields(t, {mass, lambda, g})); },
      py::arg("t"), py::arg("m"), py::arg("lambda_"), py::arg("g"));
  m.def(
      "creation_ode",
      [](double mass, double lambda, double g, double t_max, double dt, int record_every) {
        py::list out;
        for (const auto& s : creation_ode_integrate({mass, lambda, g}, t_max, dt, record_every))
          out.append(creation_state(s));
        return out;
      },
      py::arg("m"), py::arg("lambda_"), py::arg("g"), py::arg("t_max"), py::arg("dt"), py::arg("record_every") = 1);

  m.def("energy_gain_analytic", &energy_gain_analytic, py::arg("dim"), py::arg("lambda_"), py::arg("mass_ratio"),
        py::arg("n_particles"), py::arg("m"), py::arg("a"));
  m.def(
      "energy_gain",
      [](const LatticeSpec& l, const CollapseParams& p, double mass, double width, bool reduced, int record_every) {
        EnergyGainScenario sc;
        sc.lattice = l;
        sc.m = mass;
        sc.packet_width = width;
        sc.record_every = record_every;
        EnergyGainResult r;
        {
          py::gil_scoped_release release;
          r = reduced ? energy_gain_reduced(sc, p) : energy_gain_full(sc, p);
        }
        py::dict d;
        d["measured_slope"] = r.measured_slope;
        d["analytic"] = r.analytic;
        d["lattice"] = r.lattice;
        d["t"] = r.series.t;
        d["e_particle"] = r.series.e_particle;
        d["e_wfield"] = r.series.e_wfield;
        return d;
      },
      py::arg("lattice"), py::arg("params"), py::arg("m") = 1.0, py::arg("width") = 1.0, py::arg("reduced") = false,
      py::arg("record_every") = 1);

  m.def(
      "gravitational_potential",
      [](const LatticeSpec& l, const CollapseParams& p, const std::vector<double>& branch, double gm,
         const std::string& variant) {
        if (variant != "point" && variant != "smeared") throw ConfigError("variant must be point or smeared");
        auto c = make_branches(l, {branch}).front();
        return gravitational_potential(l, p, c, gm, variant == "point" ? PotentialVariant::point : PotentialVariant::smeared);
      },
      py::arg("lattice"), py::arg("params"), py::arg("branch"), py::arg("gm"), py::arg("variant") = "point");

  m.def(
      "g_closed", [](double sigma, double T1, double T2, double eps) { return g_closed({sigma, T1, T2, eps}); },
      py::arg("sigma"), py::arg("T1"), py::arg("T2"), py::arg("eps"));
  m.def("braced_factor", &braced_factor, py::arg("sigma"), py::arg("T1"), py::arg("eps"));
  m.def("omega_quadrature", &omega_quadrature, py::arg("sigma"), py::arg("T1"), py::arg("eps"));
  m.def(
      "g_spatial_integral",
      [](double T1, double T2, double width, double eps, double radius) {
        auto r = g_spatial_integral(T1, T2, width, eps, radius);
        py::dict d;
        d["eps"] = r.eps;
        d["values"] = r.values;
        d["extrapolated"] = r.extrapolated;
        d["extrapolated_two"] = r.extrapolated_two;
        d["converged"] = r.converged;
        d["expected"] = r.expected;
        d["relative_error"] = r.relative_error;
        return d;
      },
      py::arg("T1"), py::arg("T2"), py::arg("width") = 1.0, py::arg("eps") = 0.01, py::arg("radius") = 40.0);

  m.def(
      "run_experiment",
      [](const std::string& command, const std::string& config_text, const std::string& out_dir,
         std::optional<std::uint64_t> seed, std::optional<int> threads, std::optional<std::string> format,
         std::optional<std::string> mode) {
        ExperimentOptions opt;
        opt.command = command;
        opt.out_dir = out_dir;
        opt.seed = seed;
        opt.threads = threads;
        opt.format = format;
        opt.mode = mode;
        ExperimentResult r;
        auto cfg = Config::parse(config_text, "<python>");
        {
          py::gil_scoped_release release;
          r = run_experiment(cfg, opt);
        }
        return to_python(r.summary);
      },
      py::arg("command"), py::arg("config"), py::arg("out_dir"), py::arg("seed") = py::none(),
      py::arg("threads") = py::none(), py::arg("format") = py::none(), py::arg("mode") = py::none(),
      "Runs one experiment from INI text; returns the summary as a dict.");
}
