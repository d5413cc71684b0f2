// scenarios.hpp: named experiments run by the command-line tool.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "stochlind/app/config.hpp"
#include "stochlind/app/output.hpp"
#include "stochlind/core_ops.hpp"
#include "stochlind/ensemble.hpp"
#include "stochlind/intrinsic.hpp"
#include "stochlind/iontrap.hpp"
#include "stochlind/jcm.hpp"
#include "stochlind/lindblad.hpp"
#include "stochlind/stochastic.hpp"

namespace stochlind::app {

struct ScenarioOutput {
  std::vector<std::pair<std::string, CsvTable>> tables;  // file suffix, table
  std::vector<Check> checks;
  json results = json::object();
};

struct ScenarioSpec {
  std::string name;
  std::string description;
  std::string anchor;
  Section params;    // accepted keys and their defaults
  Section grid;      // empty: the scenario takes no grid
  Section ensemble;  // empty: no Monte Carlo
  std::function<ScenarioOutput(const ScenarioConfig&)> run;
};

// ---------------------------------------------------------------------------
// Comparison helpers

// Sampled values against a reference, in units of the standard error.
// Passes when no point of the series is beyond 5 stderr; points of one
// series share trajectories, so the count beyond 3 stderr is reported only.
// A nonzero `floor` widens every point to max(3 stderr, floor) at the 3 level.
struct Agreement {
  double floor = 0.0;
  std::size_t n = 0;
  std::size_t over3 = 0;
  double max_z = 0.0;
  double max_abs = 0.0;

  void add(double sample, double reference, double stderr_) {
    const double d = std::abs(sample - reference);
    const double z = d / std::max({stderr_, floor / 3.0, 1e-12});
    ++n;
    if (z > 3.0) ++over3;
    max_z = std::max(max_z, z);
    max_abs = std::max(max_abs, d);
  }

  bool passed() const { return max_z < 5.0; }

  Check check(const std::string& name) const {
    return {name, passed(), max_z, 5.0,
            std::to_string(over3) + " of " + std::to_string(n) + " points beyond 3 stderr, max |diff| " +
                format_number(max_abs)};
  }
};

inline Check at_most(const std::string& name, double value, double tol) {
  return {name, value <= tol, value, tol, ""};
}

inline Check at_least(const std::string& name, double value, double tol) {
  return {name, value >= tol, value, tol, ""};
}

inline TimeGrid grid_of(const ScenarioConfig& c) {
  const auto n = c.integer("grid", "n_steps");
  if (n < 1) throw ConfigError("[grid] n_steps must be >= 1");
  const double t = c.real("grid", "t_end");
  if (!(t > 0.0)) throw ConfigError("[grid] t_end must be > 0");
  return TimeGrid(t, static_cast<std::size_t>(n));
}

inline EnsembleConfig ensemble_of(const ScenarioConfig& c, bool with_grid = true) {
  EnsembleConfig e;
  e.n_traj = c.integer("ensemble", "n_traj");
  if (e.n_traj < 1) throw ConfigError("[ensemble] n_traj must be >= 1");
  e.master_seed = c.integer("ensemble", "master_seed");
  e.workers = std::max<std::uint64_t>(1, c.integer("ensemble", "workers"));
  if (with_grid) {
    e.grid = grid_of(c);
    e.record_every = std::max<std::uint64_t>(1, c.integer("grid", "record_every"));
  }
  e.state_stderr = false;
  e.keep_states = false;
  return e;
}

inline std::vector<std::size_t> record_steps(const ScenarioConfig& c) {
  EnsembleConfig e;
  e.grid = grid_of(c);
  e.record_every = std::max<std::uint64_t>(1, c.integer("grid", "record_every"));
  return e.record_steps();
}

inline std::size_t size_param(const ScenarioConfig& c, const std::string& key) {
  return static_cast<std::size_t>(c.integer("params", key));
}

// ---------------------------------------------------------------------------
// JCM scenarios

struct JcmSetup {
  jcm::JcmParams p;
  jcm::CoherentAmplitude q;
};

inline JcmSetup jcm_setup(const ScenarioConfig& c) {
  const double nbar = c.real("params", "mean_photons");
  if (nbar < 0.0) throw ConfigError("mean_photons must be >= 0");
  const auto m = size_param(c, "m");
  std::size_t n_max = size_param(c, "n_max");
  if (n_max == 0) n_max = jcm::default_truncation(nbar, m);
  jcm::JcmParams p(c.real("params", "omega"), c.real("params", "coupling"), m, n_max);
  return {p, jcm::CoherentAmplitude(std::sqrt(nbar), n_max)};
}

inline ScenarioOutput run_jcm_unitary(const ScenarioConfig& c) {
  const auto [p, q] = jcm_setup(c);
  const TimeGrid grid = grid_of(c);
  const HermitianOperator h = jcm::build_hamiltonian(p);
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h.matrix());
  const ComplexVector psi0 = jcm::excited_coherent_state(p, q);
  const ComplexVector c0 = es.eigenvectors().adjoint() * psi0;
  const HermitianOperator sz = jcm::sz(p);

  ScenarioOutput out;
  CsvTable t;
  t.header = {"t", "W_closed", "W_simulated", "P0_closed", "P0_simulated", "P1_closed", "P1_simulated"};
  double w_err = 0.0, p_err = 0.0, norm_err = 0.0, sum_err = 0.0;
  for (std::size_t k : record_steps(c)) {
    const double time = grid.time(k);
    ComplexVector ph(c0.size());
    for (Index i = 0; i < ph.size(); ++i) ph(i) = std::polar(1.0, -es.eigenvalues()(i) * time) * c0(i);
    const ComplexVector psi = es.eigenvectors() * ph;
    const ComplexMatrix rho = psi * psi.adjoint();
    const double w_sim = 2.0 * sz.expectation(rho);
    const double w_cl = jcm::inversion_unitary(p, q, time);
    const auto pn = jcm::photon_distribution(p, rho);
    double total = 0.0;
    for (std::size_t n = 0; n <= p.n_max; ++n) {
      const double cl = jcm::photon_distribution_unitary(p, q, n, time);
      p_err = std::max(p_err, std::abs(cl - pn[n]));
      total += cl;
    }
    w_err = std::max(w_err, std::abs(w_sim - w_cl));
    norm_err = std::max(norm_err, std::abs(psi.norm() - 1.0));
    sum_err = std::max(sum_err, std::abs(total - 1.0));
    t.add_row({time, w_cl, w_sim, jcm::photon_distribution_unitary(p, q, 0, time), pn[0],
               jcm::photon_distribution_unitary(p, q, 1, time), pn[1]});
  }
  out.tables.emplace_back("", std::move(t));
  out.checks.push_back(at_most("inversion series vs state propagation", w_err, 1e-8));
  out.checks.push_back(at_most("photon distribution vs state propagation", p_err, 1e-8));
  out.checks.push_back(at_most("photon distribution normalization", sum_err, 1e-9));
  out.checks.push_back(at_most("state norm", norm_err, 1e-12));
  out.results["n_max"] = p.n_max;
  return out;
}

inline ScenarioOutput run_jcm_damped(const ScenarioConfig& c) {
  const auto [p, q] = jcm_setup(c);
  const double gamma = c.real("params", "gamma");
  const std::size_t levels = std::min(size_param(c, "pn_levels"), p.n_max + 1);
  const TimeGrid grid = grid_of(c);
  const EnsembleConfig ec = ensemble_of(c);
  const LindbladModel model = jcm::phase_damped_model(p, gamma);
  const DensityMatrix rho0 = DensityMatrix::pure(jcm::excited_coherent_state(p, q));
  const HermitianOperator sz = jcm::sz(p);

  IntegrateOptions opt;
  opt.record_every = ec.record_every;
  opt.observables = {{"sz", sz}};
  const EvolutionRecord rec = integrate(model, rho0, grid, opt);
  const EnsembleResult mc = ensemble_average(RandomUnitaryModel(model), rho0, ec, {{"sz", sz}});

  ScenarioOutput out;
  CsvTable w;
  w.header = {"t", "W_pd_closed", "W_pd_lindblad", "W_pd_mc", "mc_stderr"};
  CsvTable pn;
  pn.comments = {"P<n>_closed: E[cos^2] expansion, each doublet with its own Rabi factor",
                 "P<n>_printed: cos[] outside the {1 +- exp} braces, (n+m)!/n! in both terms"};
  pn.header = {"t"};
  for (std::size_t n = 0; n < levels; ++n) {
    pn.header.push_back("P" + std::to_string(n) + "_closed");
    pn.header.push_back("P" + std::to_string(n) + "_lindblad");
    pn.header.push_back("P" + std::to_string(n) + "_printed");
  }
  double w_err = 0.0, p_err = 0.0, printed_dev = 0.0, env_excess = -1.0;
  Agreement agree;
  const auto& mc_sz = mc.observables.at("sz");
  for (std::size_t k = 0; k < rec.times.size(); ++k) {
    const double time = rec.times[k];
    const double cl = jcm::inversion_damped(p, q, gamma, time);
    const double li = 2.0 * rec.observables.at("sz")[k];
    const double mw = 2.0 * mc_sz.mean[k], ms = 2.0 * mc_sz.stderr_[k];
    w_err = std::max(w_err, std::abs(cl - li));
    env_excess = std::max(env_excess, std::abs(cl) - jcm::inversion_envelope(p, q, gamma, time));
    agree.add(mw, cl, ms);
    w.add_row({time, cl, li, mw, ms});

    const auto dist = jcm::photon_distribution(p, rec.states[k].matrix());
    std::vector<double> row{time};
    for (std::size_t n = 0; n <= p.n_max; ++n) {
      const double pc = jcm::photon_distribution_damped(p, q, gamma, n, time);
      const double pp = jcm::photon_distribution_damped_printed(p, q, gamma, n, time);
      p_err = std::max(p_err, std::abs(pc - dist[n]));
      printed_dev = std::max(printed_dev, std::abs(pp - dist[n]));
      if (n < levels) row.insert(row.end(), {pc, dist[n], pp});
    }
    pn.add_row(std::move(row));
  }
  out.tables.emplace_back("", std::move(w));
  out.tables.emplace_back("_pn", std::move(pn));
  out.checks.push_back(at_most("inversion closed form vs master equation", w_err, 1e-6));
  out.checks.push_back(at_most("photon distribution closed form vs master equation", p_err, 1e-6));
  out.checks.push_back(at_least("printed photon distribution deviates from master equation", printed_dev, 1e-3));
  out.checks.push_back(at_most("inversion within its envelope", env_excess, 1e-12));
  out.checks.push_back(agree.check("Monte Carlo inversion vs closed form"));
  out.results["n_max"] = p.n_max;
  out.results["printed_form_max_deviation"] = printed_dev;
  return out;
}

inline ScenarioOutput run_jcm_stochastic(const ScenarioConfig& c) {
  auto [p, q] = jcm_setup(c);
  if (p.m != 1) throw ConfigError("jcm-stochastic requires m = 1");
  const double gamma = c.real("params", "gamma");
  const TimeGrid grid = grid_of(c);
  const EnsembleConfig ec = ensemble_of(c);
  const LindbladModel model = jcm::stochastic_coupling_model(p, gamma);
  const DensityMatrix rho0 = DensityMatrix::pure(jcm::excited_coherent_state(p, q));
  const HermitianOperator ground = jcm::atom_ground_projector(p);
  std::vector<double> weights = q.weights();
  weights.pop_back();  // |+,n_max> has no partner inside the truncation

  IntegrateOptions opt;
  opt.record_every = ec.record_every;
  opt.observables = {{"p_eg", ground}};
  const EvolutionRecord rec = integrate(model, rho0, grid, opt);
  const EnsembleResult mc = ensemble_average(RandomUnitaryModel(model), rho0, ec, {{"p_eg", ground}});

  ScenarioOutput out;
  CsvTable t;
  t.header = {"t", "p_eg_orthodox", "p_eg_sjcm_closed", "p_eg_sjcm_lindblad", "p_eg_sjcm_mc", "mc_stderr"};
  double l_err = 0.0;
  Agreement agree;
  const auto& s = mc.observables.at("p_eg");
  for (std::size_t k = 0; k < rec.times.size(); ++k) {
    const double time = rec.times[k];
    const double cl = jcm::p_eg_stochastic_jcm(weights, p.coupling, gamma, time);
    const double li = rec.observables.at("p_eg")[k];
    l_err = std::max(l_err, std::abs(cl - li));
    agree.add(s.mean[k], cl, s.stderr_[k]);
    t.add_row({time, jcm::p_eg_orthodox(weights, p.coupling, time), cl, li, s.mean[k], s.stderr_[k]});
  }
  out.tables.emplace_back("", std::move(t));
  out.checks.push_back(at_most("closed form vs master equation", l_err, 1e-6));
  out.checks.push_back(agree.check("Monte Carlo vs closed form"));
  out.checks.push_back(at_most("P_eg(0)", std::abs(jcm::p_eg_stochastic_jcm(weights, p.coupling, gamma, 0.0)), 1e-15));
  out.results["n_max"] = p.n_max;
  out.results["kernel_amplitude"] = jcm::coupling_promotion_kernel(gamma, p.coupling).coefficient();
  return out;
}

// ---------------------------------------------------------------------------
// Ion-trap scenarios

inline iontrap::LevelNoiseSpec trap_noise(const ScenarioConfig& c) {
  iontrap::LevelNoiseSpec s;
  s.gamma_scale = c.real("params", "Gamma");
  s.exponent = c.real("params", "d");
  if (s.gamma_scale < 0.0) throw ConfigError("Gamma must be >= 0");
  return s;
}

inline iontrap::ComInitialState trap_initial(const ScenarioConfig& c, const std::string& kind) {
  if (kind == "fock") return iontrap::ComInitialState::fock(size_param(c, "fock_n"));
  if (kind == "thermal") {
    const double nbar = c.real("params", "mean_phonons");
    if (nbar < 0.0) throw ConfigError("mean_phonons must be >= 0");
    return iontrap::ComInitialState::thermal(nbar);
  }
  const auto a = c.reals("params", "alpha");
  if (a.size() != 2) throw ConfigError("alpha must be given as 're, im'");
  return iontrap::ComInitialState::coherent({a[0], a[1]});
}

inline ScenarioOutput run_trap(const ScenarioConfig& c, const std::string& kind) {
  const auto init = trap_initial(c, kind);
  std::size_t n_max = size_param(c, "n_max");
  if (n_max == 0) n_max = init.minimal_truncation();
  const iontrap::TrapParams p(c.real("params", "eta"), c.real("params", "omega_rabi"), n_max);
  const auto noise = trap_noise(c);
  const EnsembleConfig ec = ensemble_of(c);
  const DensityMatrix rho0 = init.density(p);
  const PromotedSpectrum ps = iontrap::promoted_spectrum(p, noise);
  const EnsembleResult mc = ps.monte_carlo(rho0, ec, {{"p_minus", iontrap::atom_ground_projector(p)}});
  const HermitianOperator ground = iontrap::atom_ground_projector(p);

  ScenarioOutput out;
  CsvTable t;
  t.header = {"t", "p_minus_closed", "p_minus_mc", "stderr"};
  Agreement agree;
  double matrix_err = 0.0;
  const auto& s = mc.observables.at("p_minus");
  for (std::size_t k = 0; k < mc.times.size(); ++k) {
    const double time = mc.times[k];
    const double cl = iontrap::p_minus_distribution(p, init, noise, time);
    if (k % 10 == 0 || k + 1 == mc.times.size())
      matrix_err = std::max(matrix_err, std::abs(ps.closed_form(rho0, time).expectation(ground) - cl));
    agree.add(s.mean[k], cl, s.stderr_[k]);
    t.add_row({time, cl, s.mean[k], s.stderr_[k]});
  }
  out.tables.emplace_back("", std::move(t));
  out.checks.push_back(agree.check("Monte Carlo vs closed form"));
  out.checks.push_back(at_most("P_- formula vs promoted density matrix", matrix_err, 1e-10));
  out.checks.push_back(at_most("P_-(0) = 1", std::abs(iontrap::p_minus_distribution(p, init, noise, 0.0) - 1.0), 1e-12));
  out.results["n_max"] = n_max;
  return out;
}

inline ScenarioOutput run_trap_fit(const ScenarioConfig& c) {
  const iontrap::TrapParams p(c.real("params", "eta"), c.real("params", "omega_rabi"), 1);
  const auto noise = trap_noise(c);
  const EnsembleConfig ec = ensemble_of(c, false);
  const auto levels = size_param(c, "levels");
  if (levels < 3) throw ConfigError("levels must be >= 3");
  const double window = c.real("params", "t_window");
  const auto substeps = std::max<std::size_t>(1, size_param(c, "substeps"));

  ScenarioOutput out;
  CsvTable t;
  t.header = {"n", "fitted_rate", "rate_stderr", "expected_rate", "points"};
  std::vector<std::pair<double, double>> rates;
  Agreement agree;
  for (std::size_t n = 0; n < levels; ++n) {
    const auto r = iontrap::mc_envelope_rate(p, n, noise, window, substeps, ec);
    rates.emplace_back(static_cast<double>(n), r.rate);
    agree.add(r.rate, noise.fock_decay_rate(n), r.rate_stderr);
    t.add_row({static_cast<double>(n), r.rate, r.rate_stderr, noise.fock_decay_rate(n), static_cast<double>(r.points)});
  }
  const auto fit = iontrap::fit_decay_exponent(rates);
  out.tables.emplace_back("", std::move(t));
  const double expected = 2.0 * noise.exponent;
  out.checks.push_back(at_most("fitted exponent vs 2d", std::abs(fit.exponent - expected), 0.05));
  out.checks.push_back(agree.check("envelope rates vs per-level decay rates"));
  out.results["exponent"] = fit.exponent;
  out.results["expected_exponent"] = expected;
  out.results["scale"] = fit.scale;
  out.results["expected_scale"] = 0.5 * noise.gamma_scale;
  out.results["residual"] = fit.residual;
  return out;
}

// ---------------------------------------------------------------------------
// Intrinsic decoherence

// Unitary discrete Fourier matrix of size n.
inline ComplexMatrix dft_matrix(Index n) {
  ComplexMatrix f(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index k = 0; k < n; ++k)
      f(j, k) = std::polar(1.0 / std::sqrt(static_cast<double>(n)), 2.0 * std::numbers::pi * static_cast<double>(j * k) / static_cast<double>(n));
  return f;
}

inline ScenarioOutput run_intrinsic(const ScenarioConfig& c) {
  const std::string mode = c.text("params", "mode");
  const auto energies = c.reals("params", "energies");
  const Index n = static_cast<Index>(energies.size());
  if (n < 2) throw ConfigError("energies needs at least two values");
  const ComplexMatrix f = dft_matrix(n);
  Eigen::VectorXd e(n);
  for (Index i = 0; i < n; ++i) e(i) = energies[static_cast<std::size_t>(i)];
  const HermitianOperator h(ComplexMatrix(f * e.asDiagonal() * f.adjoint()));
  ComplexVector psi0 = ComplexVector::Zero(n);
  psi0(0) = 1.0;
  const DensityMatrix rho0 = DensityMatrix::pure(psi0);

  ComplexMatrix cm = ComplexMatrix::Ones(n, n) - ComplexMatrix::Identity(n, n);
  const HermitianOperator coh(ComplexMatrix(f * cm * f.adjoint()));

  SpectralPromotionSpec spec;
  spec.base = eigendecompose(h);
  const TimeGrid grid = grid_of(c);
  const EnsembleConfig ec = ensemble_of(c);
  IntegrateOptions opt;
  opt.record_every = ec.record_every;
  opt.observables = {{"coh", coh}};
  EvolutionRecord rec;

  if (mode == "milburn-tau") {
    spec.sigma = SpectralPromotionSpec::Sigma::proportional;
    spec.gamma = c.real("params", "gamma");
    spec.correlation = SpectralPromotionSpec::Correlation::gaussian;
    spec.tau = c.real("params", "tau");
    const double gamma = spec.gamma, tau = spec.tau;
    rec = integrate_rk4([&](double, const ComplexMatrix& r) { return milburn_generator_apply(h, gamma, tau, r); },
                        rho0, grid, opt);
  } else if (mode == "nonmarkov") {
    const NoiseKernel sigma = NoiseKernel::power_law(c.real("params", "sigma_coef"), c.real("params", "sigma_power"));
    spec.sigma = SpectralPromotionSpec::Sigma::proportional;
    spec.gamma = 1.0;
    spec.profile = sigma;
    spec.correlation = SpectralPromotionSpec::Correlation::gaussian;
    spec.tau = 0.0;
    rec = integrate(nonmarkov_dephasing_model(h, sigma), rho0, grid, opt);
  } else if (mode == "custom-kernel") {
    const auto s = c.reals("params", "level_sigma");
    if (s.size() != spec.base.levels()) throw ConfigError("level_sigma needs one value per distinct energy");
    const double rho = c.real("params", "correlation");
    spec.sigma = SpectralPromotionSpec::Sigma::per_level;
    for (double x : s) spec.level_kernels.push_back(NoiseKernel::constant(x));
    spec.correlation = SpectralPromotionSpec::Correlation::custom;
    const Index l = static_cast<Index>(spec.base.levels());
    spec.custom = RealMatrix::Constant(l, l, rho);
    spec.custom.diagonal().setOnes();
    rec = integrate(spec.promoted().equivalent_lindblad(), rho0, grid, opt);
  } else {
    throw ConfigError("unknown intrinsic mode '" + mode + "' (milburn-tau, nonmarkov, custom-kernel)");
  }

  const PromotedSpectrum ps = spec.promoted();
  const EnsembleResult mc = ps.monte_carlo(rho0, ec, {{"coh", coh}});
  ScenarioOutput out;
  CsvTable t;
  t.header = {"t", "coh_rk4", "coh_closed", "coh_mc", "coh_stderr"};
  double err = 0.0;
  Agreement agree;
  const auto& s = mc.observables.at("coh");
  for (std::size_t k = 0; k < rec.times.size(); ++k) {
    const double time = rec.times[k];
    const double cl = ps.closed_form(rho0, time).expectation(coh);
    const double rk = rec.observables.at("coh")[k];
    err = std::max(err, std::abs(cl - rk));
    agree.add(s.mean[k], cl, s.stderr_[k]);
    t.add_row({time, rk, cl, s.mean[k], s.stderr_[k]});
  }
  out.tables.emplace_back("", std::move(t));
  out.checks.push_back(at_most("closed form vs generator integration", err, 1e-8));
  out.checks.push_back(agree.check("Monte Carlo vs closed form"));
  out.results["mode"] = mode;
  return out;
}

// ---------------------------------------------------------------------------
// Collapse contrast

inline ScenarioOutput run_collapse_compare(const ScenarioConfig& c) {
  const double omega = c.real("params", "omega");
  const HermitianOperator a(pauli::z());
  const HermitianOperator h = a.scaled(omega);
  const HermitianOperator sx(pauli::x());
  ComplexVector psi0(2);
  psi0 << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  const TimeGrid grid = grid_of(c);
  EnsembleConfig ec = ensemble_of(c);
  const RandomUnitaryModel model(h, {{a, NoiseKernel::constant(1.0)}});

  IntegrateOptions opt;
  opt.record_every = ec.record_every;
  opt.observables = {{"sx", sx}};
  const EvolutionRecord rec = integrate(model.lindblad(), DensityMatrix::pure(psi0), grid, opt);
  const EnsembleResult uni = unitary_state_ensemble(model, psi0, a, ec, {{"sx", sx}});
  const EnsembleResult col = collapse_ensemble(h, a, psi0, ec, {{"sx", sx}});

  // Pathwise conservation of the variance process along unitary trajectories.
  const double v0 = state_variance(psi0, a);
  double drift = 0.0;
  {
    SplittingStepper stepper(model, grid);
    for (std::size_t traj = 0; traj < ec.n_traj; ++traj) {
      stepper.walk(ec.master_seed, traj, 1, [&](std::size_t, const ComplexMatrix& u) {
        drift = std::max(drift, std::abs(state_variance(ComplexVector(u * psi0), a) - v0));
      });
    }
  }

  ScenarioOutput out;
  CsvTable t;
  t.header = {"t", "vtilde_unitary", "vtilde_collapse", "vtilde_collapse_stderr", "sx_lindblad",
              "sx_unitary", "sx_unitary_stderr", "sx_collapse", "sx_collapse_stderr"};
  Agreement agree_u{0.01}, agree_c{0.01};
  double rise = 0.0;
  const auto& vu = uni.observables.at("V_tilde");
  const auto& vc = col.observables.at("V_tilde");
  const auto& su = uni.observables.at("sx");
  const auto& sc = col.observables.at("sx");
  for (std::size_t k = 0; k < rec.times.size(); ++k) {
    const double li = rec.observables.at("sx")[k];
    agree_u.add(su.mean[k], li, su.stderr_[k]);
    agree_c.add(sc.mean[k], li, sc.stderr_[k]);
    if (k > 0) rise = std::max(rise, (vc.mean[k] - vc.mean[k - 1]) / std::max(2.0 * vc.stderr_[k], 1e-300));
    t.add_row({rec.times[k], vu.mean[k], vc.mean[k], vc.stderr_[k], li, su.mean[k], su.stderr_[k], sc.mean[k],
               sc.stderr_[k]});
  }
  out.tables.emplace_back("", std::move(t));
  out.checks.push_back(at_most("unitary trajectories conserve the variance process", drift, 1e-9));
  out.checks.push_back(at_most("collapse ensemble variance at t_end / initial", vc.mean.back() / v0, 0.1));
  out.checks.push_back(at_most("collapse variance non-increasing (rise in units of 2 stderr)", rise, 1.0));
  out.checks.push_back(agree_u.check("unitary ensemble vs master equation"));
  out.checks.push_back(agree_c.check("collapse ensemble vs master equation"));
  out.results["variance_drift_max"] = drift;
  out.results["collapse_variance_ratio"] = vc.mean.back() / v0;
  return out;
}

// ---------------------------------------------------------------------------
// Gaussian moments of int v dB

inline ScenarioOutput run_moments(const ScenarioConfig& c) {
  const NoiseKernel v = NoiseKernel::power_law(c.real("params", "kernel_coef"), c.real("params", "kernel_power"));
  const auto bs = c.reals("params", "cos_b");
  const TimeGrid grid = grid_of(c);
  EnsembleConfig ec = ensemble_of(c);
  constexpr int orders = 6;
  const std::size_t nobs = orders + 2 * bs.size();
  std::vector<double> vt(grid.n_steps);
  for (std::size_t k = 0; k < grid.n_steps; ++k) vt[k] = v(grid.time(k));

  const auto m = run_trajectories(ec.n_traj, 0, nobs, ec, false,
                                  [&](std::size_t traj, std::span<cplx>, std::span<double> obs) {
                                    GaussianIncrements gen(ec.master_seed, traj, 0, grid.dt());
                                    double x = 0.0;
                                    for (std::size_t k = 0; k < grid.n_steps; ++k) x += vt[k] * gen.next();
                                    double xp = 1.0;
                                    for (int o = 0; o < orders; ++o) obs[static_cast<std::size_t>(o)] = (xp *= x);
                                    for (std::size_t i = 0; i < bs.size(); ++i) {
                                      const double cc = std::cos(bs[i] + x);
                                      obs[orders + 2 * i] = cc;
                                      obs[orders + 2 * i + 1] = cc * cc;
                                    }
                                  });
  const double lam = v.lambda(grid.t_end);

  ScenarioOutput out;
  CsvTable mt;
  mt.header = {"order", "sample_moment", "theoretical", "stderr", "z"};
  for (int o = 1; o <= orders; ++o) {
    const std::size_t i = static_cast<std::size_t>(o - 1);
    const double th = theoretical_moment(v, o, grid.t_end);
    const double se = m.obs_stderr(i);
    const double z = (m.obs_mean[i] - th) / se;
    mt.add_row({static_cast<double>(o), m.obs_mean[i], th, se, z});
    out.checks.push_back(at_most("moment order " + std::to_string(o) + " |z|", std::abs(z), 5.0));
  }
  CsvTable ct;
  ct.header = {"b", "sample_cos", "expected_cos", "cos_stderr", "cos_z", "sample_cos2", "expected_cos2",
               "cos2_stderr", "cos2_z"};
  for (std::size_t i = 0; i < bs.size(); ++i) {
    const std::size_t j = orders + 2 * i;
    const double e1 = expected_cos(bs[i], lam), e2 = expected_cos_squared(bs[i], lam);
    const double s1 = m.obs_stderr(j), s2 = m.obs_stderr(j + 1);
    const double z1 = (m.obs_mean[j] - e1) / s1, z2 = (m.obs_mean[j + 1] - e2) / s2;
    ct.add_row({bs[i], m.obs_mean[j], e1, s1, z1, m.obs_mean[j + 1], e2, s2, z2});
    out.checks.push_back(at_most("E cos(b+X) |z| at b=" + format_number(bs[i]), std::abs(z1), 5.0));
    out.checks.push_back(at_most("E cos^2(b+X) |z| at b=" + format_number(bs[i]), std::abs(z2), 5.0));
  }
  out.tables.emplace_back("", std::move(mt));
  out.tables.emplace_back("_cos", std::move(ct));
  out.results["lambda"] = lam;
  return out;
}

// ---------------------------------------------------------------------------
// Generic qubit model

inline ScenarioOutput run_lindblad_generic(const ScenarioConfig& c) {
  auto vec3 = [&](const std::string& key) {
    const auto v = c.reals("params", key);
    if (v.size() != 3) throw ConfigError(key + " needs three components");
    return v;
  };
  const auto hc = vec3("h"), vc = vec3("v"), r = vec3("bloch");
  if (r[0] * r[0] + r[1] * r[1] + r[2] * r[2] > 1.0 + 1e-12) throw ConfigError("bloch vector longer than 1");
  const ComplexMatrix sx = pauli::x(), sy = pauli::y(), szm = pauli::z();
  const HermitianOperator h(ComplexMatrix(hc[0] * sx + hc[1] * sy + hc[2] * szm));
  const HermitianOperator v(ComplexMatrix(vc[0] * sx + vc[1] * sy + vc[2] * szm));
  const NoiseKernel kern = NoiseKernel::power_law(c.real("params", "kernel_coef"), c.real("params", "kernel_power"));
  const RandomUnitaryModel model(h, {{v, kern}});
  const DensityMatrix rho0(ComplexMatrix(0.5 * (ComplexMatrix::Identity(2, 2) + r[0] * sx + r[1] * sy + r[2] * szm)));
  const TimeGrid grid = grid_of(c);
  const EnsembleConfig ec = ensemble_of(c);
  const std::vector<Observable> obs{{"sx", HermitianOperator(sx)}, {"sy", HermitianOperator(sy)},
                                    {"sz", HermitianOperator(szm)}};
  IntegrateOptions opt;
  opt.record_every = ec.record_every;
  opt.observables = obs;
  const LindbladModel lm = model.lindblad();
  const EvolutionRecord rec = integrate(lm, rho0, grid, opt);
  const EnsembleResult mc = ensemble_average(model, rho0, ec, obs);
  const bool markov = lm.markovian();

  ScenarioOutput out;
  CsvTable t;
  t.header = {"t", "sx_rk4", "sy_rk4", "sz_rk4", "sx_mc", "sy_mc", "sz_mc", "sx_stderr", "sy_stderr", "sz_stderr"};
  if (markov) t.header.insert(t.header.end(), {"sx_exact", "sy_exact", "sz_exact"});
  Agreement agree;
  double exact_err = 0.0, trace_err = 0.0;
  for (std::size_t k = 0; k < rec.times.size(); ++k) {
    std::vector<double> row{rec.times[k]};
    for (const auto& o : obs) row.push_back(rec.observables.at(o.name)[k]);
    for (const auto& o : obs) row.push_back(mc.observables.at(o.name).mean[k]);
    for (const auto& o : obs) row.push_back(mc.observables.at(o.name).stderr_[k]);
    for (const auto& o : obs) agree.add(mc.observables.at(o.name).mean[k], rec.observables.at(o.name)[k],
                                        mc.observables.at(o.name).stderr_[k]);
    trace_err = std::max(trace_err, std::abs(rec.states[k].matrix().trace().real() - 1.0));
    if (markov) {
      const DensityMatrix ex = analytic_markov_evolve(lm, rho0, rec.times[k]);
      for (const auto& o : obs) {
        const double x = ex.expectation(o.op);
        exact_err = std::max(exact_err, std::abs(x - rec.observables.at(o.name)[k]));
        row.push_back(x);
      }
    }
    t.add_row(std::move(row));
  }
  out.tables.emplace_back("", std::move(t));
  if (markov) out.checks.push_back(at_most("integrator vs superoperator exponential", exact_err, 1e-8));
  out.checks.push_back(at_most("trace preservation", trace_err, 1e-9));
  out.checks.push_back(agree.check("Monte Carlo vs integrator"));
  out.results["commuting"] = model.commuting();
  out.results["markovian"] = markov;
  return out;
}

// ---------------------------------------------------------------------------
// Registry

inline const std::vector<ScenarioSpec>& scenario_registry() {
  static const std::vector<ScenarioSpec> reg = [] {
    const Section ens{{"n_traj", "2000"}, {"master_seed", "20240611"}, {"workers", "1"}};
    const Section jcm_params{{"omega", "1"}, {"coupling", "1"}, {"m", "1"}, {"mean_photons", "0.4"}, {"n_max", "0"}};
    const Section trap_base{{"eta", "0.202"}, {"omega_rabi", "470"}, {"Gamma", "23.8"}, {"d", "0.35"}, {"n_max", "0"}};
    auto with = [](Section s, std::initializer_list<std::pair<const std::string, std::string>> extra) {
      for (const auto& e : extra) s[e.first] = e.second;
      return s;
    };
    std::vector<ScenarioSpec> r;
    r.push_back({"jcm-unitary", "closed-form inversion and photon statistics vs state propagation",
                 "§III.A resonant multiphoton JCM", jcm_params,
                 {{"t_end", "24"}, {"n_steps", "500"}, {"record_every", "1"}}, {}, run_jcm_unitary});
    r.push_back({"jcm-damped", "phase-damped inversion: closed form, master equation, Monte Carlo",
                 "§III.A phase-damped JCM", with(jcm_params, {{"gamma", "0.05"}, {"pn_levels", "4"}}),
                 {{"t_end", "24"}, {"n_steps", "12000"}, {"record_every", "24"}}, ens, run_jcm_damped});
    r.push_back({"jcm-stochastic", "stochastic-coupling JCM ground-state probability",
                 "§IV.B stochastic JCM Rabi decay",
                 with(jcm_params, {{"coupling", "157.07963267948966"}, {"gamma", "0.15915494309189535"}}),
                 {{"t_end", "0.1"}, {"n_steps", "2000"}, {"record_every", "4"}}, ens, run_jcm_stochastic});
    const Section trap_grid{{"t_end", "0.25"}, {"n_steps", "500"}, {"record_every", "1"}};
    const Section trap_ens{{"n_traj", "10000"}, {"master_seed", "20240611"}, {"workers", "1"}};
    r.push_back({"trap-fock", "blue-sideband P_- for a Fock state with level-dependent noise",
                 "§IV.C blue-sideband Fock decay", with(trap_base, {{"fock_n", "0"}}), trap_grid, trap_ens,
                 [](const ScenarioConfig& c) { return run_trap(c, "fock"); }});
    r.push_back({"trap-thermal", "blue-sideband P_- for a thermal state", "§IV.C thermal sideband decay",
                 with(trap_base, {{"mean_phonons", "1.5"}}), trap_grid, trap_ens,
                 [](const ScenarioConfig& c) { return run_trap(c, "thermal"); }});
    r.push_back({"trap-coherent", "blue-sideband P_- for a coherent state", "§IV.C coherent sideband decay",
                 with(trap_base, {{"alpha", "1.2247448713915889, 0"}}), trap_grid, trap_ens,
                 [](const ScenarioConfig& c) { return run_trap(c, "coherent"); }});
    r.push_back({"trap-fit", "decay exponent fitted to Monte Carlo envelopes", "§IV.C decay exponent (n+1)^0.7",
                 with(trap_base, {{"levels", "6"}, {"t_window", "0.25"}, {"substeps", "8"}}), {},
                 {{"n_traj", "40000"}, {"master_seed", "20240611"}, {"workers", "1"}}, run_trap_fit});
    r.push_back({"intrinsic", "spectral promotion: generalized Milburn, non-Markovian, custom kernels",
                 "§III.C intrinsic decoherence",
                 {{"mode", "milburn-tau"}, {"energies", "0, 1, 2.5, 4"}, {"gamma", "0.2"}, {"tau", "1"},
                  {"sigma_coef", "0.6"}, {"sigma_power", "1"}, {"level_sigma", "0.1, 0.5, 0.3, 0.8"},
                  {"correlation", "0.5"}},
                 {{"t_end", "5"}, {"n_steps", "5000"}, {"record_every", "10"}},
                 {{"n_traj", "4000"}, {"master_seed", "20240611"}, {"workers", "1"}}, run_intrinsic});
    r.push_back({"collapse-compare", "variance process under random unitary vs collapse dynamics",
                 "§V variance process", {{"omega", "0"}},
                 {{"t_end", "10"}, {"n_steps", "10000"}, {"record_every", "20"}},
                 {{"n_traj", "1000"}, {"master_seed", "20240611"}, {"workers", "1"}}, run_collapse_compare});
    r.push_back({"moments-selftest", "sample moments and cosine averages of int v dB",
                 "Appendix A Gaussian moments",
                 {{"kernel_coef", "1"}, {"kernel_power", "0"}, {"cos_b", "0, 0.7853981633974483, 2"}},
                 {{"t_end", "1"}, {"n_steps", "1000"}, {"record_every", "1000"}},
                 {{"n_traj", "100000"}, {"master_seed", "20240611"}, {"workers", "1"}}, run_moments});
    r.push_back({"lindblad-generic", "qubit master equation: integrator, exponential, Monte Carlo",
                 "§II random unitary Lindblad",
                 {{"h", "1, 0, 0"}, {"v", "0, 0, 1"}, {"kernel_coef", "0.7"}, {"kernel_power", "0"},
                  {"bloch", "0, 0, 1"}},
                 {{"t_end", "2"}, {"n_steps", "2000"}, {"record_every", "20"}},
                 {{"n_traj", "4000"}, {"master_seed", "20240611"}, {"workers", "1"}}, run_lindblad_generic});
    return r;
  }();
  return reg;
}

inline const ScenarioSpec& find_scenario(const std::string& name) {
  for (const auto& s : scenario_registry())
    if (s.name == name) return s;
  throw ConfigError("unknown scenario '" + name + "'");
}

// Fill defaults and reject keys the scenario does not accept.
inline ScenarioConfig resolve(const ScenarioConfig& user, const ScenarioSpec& spec) {
  ScenarioConfig out;
  out.scenario = spec.name;
  out.source = user.source;
  const std::map<std::string, const Section*> accepted{
      {"params", &spec.params}, {"grid", &spec.grid}, {"ensemble", &spec.ensemble}};
  for (const auto& [sec, entries] : user.sections) {
    if (sec == "output") {
      for (const auto& [k, v] : entries) {
        if (k != "dir" && k != "name") throw ConfigError("unknown key [output] " + k);
        out.set("output", k, v);
      }
      continue;
    }
    const Section* allowed = accepted.at(sec);
    for (const auto& [k, v] : entries) {
      if (!allowed->count(k)) throw ConfigError("scenario " + spec.name + " does not accept [" + sec + "] " + k);
    }
  }
  for (const auto& [sec, defaults] : accepted) {
    for (const auto& [k, v] : *defaults) {
      const auto& us = user.section(sec);
      auto it = us.find(k);
      out.set(sec, k, it == us.end() ? v : it->second);
    }
  }
  return out;
}

}  // namespace stochlind::app
