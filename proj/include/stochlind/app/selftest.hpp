// selftest.hpp: fast invariant suite behind `stochlind selftest`.

#pragma once

#include <random>
#include <string>
#include <vector>

#include "stochlind/app/output.hpp"
#include "stochlind/app/scenarios.hpp"

namespace stochlind::app {

inline ComplexMatrix random_matrix(std::mt19937_64& rng, Index n) {
  std::normal_distribution<double> g;
  ComplexMatrix m(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) m(i, j) = cplx{g(rng), g(rng)};
  return m;
}

inline ComplexMatrix random_hermitian(std::mt19937_64& rng, Index n) {
  const ComplexMatrix m = random_matrix(rng, n);
  return 0.5 * (m + m.adjoint());
}

inline ComplexMatrix random_density(std::mt19937_64& rng, Index n) {
  const ComplexMatrix m = random_matrix(rng, n);
  const ComplexMatrix r = m * m.adjoint();
  return r / r.trace().real();
}

struct SelftestReport {
  std::vector<Check> checks;
  CsvTable table;
  std::size_t failures = 0;
};

inline SelftestReport run_selftest() {
  SelftestReport rep;
  auto add = [&](Check c) { rep.checks.push_back(std::move(c)); };
  std::mt19937_64 rng(7);

  // Nested-commutator series vs direct conjugation.
  {
    double worst = 0.0;
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 100; ++i) {
      const ComplexMatrix a = random_hermitian(rng, 4), b = random_matrix(rng, 4);
      const double s = u(rng);
      const ComplexMatrix direct =
          expm_hermitian_generator(HermitianOperator(a), -s) * b * expm_hermitian_generator(HermitianOperator(a), s);
      worst = std::max(worst, max_abs(ComplexMatrix(louisell_conjugate(a, b, cplx{0.0, s}) - direct)) / std::max(1.0, max_abs(b)));
    }
    add(at_most("louisell series vs conjugation on 100 random 4x4", worst, 1e-9));
  }

  // Milburn generator at tau = 0 reduces to the dephasing generator with V = H.
  {
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
      const HermitianOperator h(random_hermitian(rng, 4));
      const ComplexMatrix rho = random_density(rng, 4);
      const LindbladModel m(h, {{h, NoiseKernel::constant(std::sqrt(0.3))}});
      worst = std::max(worst, max_abs(ComplexMatrix(milburn_generator_apply(h, 0.3, 0.0, rho) - generator_apply(m, rho, 0.0))));
    }
    add(at_most("milburn generator at tau=0 vs master equation on 50 states", worst, 1e-12));
  }

  // Integrator vs superoperator exponential on a non-commuting qubit.
  {
    const LindbladModel m(HermitianOperator(pauli::x()), {{HermitianOperator(pauli::z()), NoiseKernel::constant(1.0)}});
    const DensityMatrix rho0(random_density(rng, 2));
    const auto rec = integrate(m, rho0, TimeGrid(2.0, 2000), {2000, {}, {}});
    add(at_most("RK4 vs superoperator exponential",
                max_abs(ComplexMatrix(rec.states.back().matrix() - analytic_markov_evolve(m, rho0, 2.0).matrix())), 1e-10));
  }

  // Non-Markovian dephasing with v(s) = s.
  {
    const LindbladModel m(HermitianOperator::zero(2), {{HermitianOperator(pauli::z()), NoiseKernel::power_law(1.0, 1.0)}});
    ComplexVector plus(2);
    plus << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
    const auto rec = integrate(m, DensityMatrix::pure(plus), TimeGrid(1.5, 3000), {10, {}, {}});
    double worst = 0.0;
    for (std::size_t k = 0; k < rec.times.size(); ++k) {
      const double t = rec.times[k];
      worst = std::max(worst, std::abs(rec.states[k].matrix()(0, 1).real() - 0.5 * std::exp(-2.0 * t * t * t / 3.0)));
    }
    add(at_most("off-diagonal decay exp(-2t^3/3)", worst, 1e-8));
  }

  // Ensemble results do not depend on the worker count.
  {
    const RandomUnitaryModel m(HermitianOperator(pauli::x()), {{HermitianOperator(pauli::z()), NoiseKernel::constant(1.0)}});
    const DensityMatrix rho0(random_density(rng, 2));
    EnsembleConfig c;
    c.n_traj = 300;
    c.master_seed = 11;
    c.grid = TimeGrid(1.0, 200);
    c.record_every = 50;
    c.chunk_size = 16;
    double diff = 0.0;
    const auto a = ensemble_average(m, rho0, c);
    c.workers = 4;
    const auto b = ensemble_average(m, rho0, c);
    for (std::size_t k = 0; k < a.mean_states.size(); ++k) {
      diff = std::max(diff, max_abs(ComplexMatrix(a.mean_states[k].matrix() - b.mean_states[k].matrix())));
      diff = std::max(diff, max_abs(RealMatrix(a.state_stderr[k] - b.state_stderr[k])));
    }
    add(at_most("ensemble bitwise identical for 1 and 4 workers", diff, 0.0));
  }

  // Phase-damped JCM closed form vs master equation, short horizon.
  {
    const jcm::JcmParams p(1.0, 1.0, 2, 10);
    const jcm::CoherentAmplitude q(std::sqrt(0.4), 10);
    IntegrateOptions opt;
    opt.record_every = 50;
    opt.observables = {{"sz", jcm::sz(p)}};
    const auto rec = integrate(jcm::phase_damped_model(p, 0.05), DensityMatrix::pure(jcm::excited_coherent_state(p, q)),
                               TimeGrid(6.0, 3000), opt);
    double worst = 0.0;
    for (std::size_t k = 0; k < rec.times.size(); ++k)
      worst = std::max(worst, std::abs(2.0 * rec.observables.at("sz")[k] - jcm::inversion_damped(p, q, 0.05, rec.times[k])));
    add(at_most("phase-damped inversion closed form vs master equation", worst, 1e-8));
  }

  // Ion-trap P_- formula vs the promoted density matrix.
  {
    const auto init = iontrap::ComInitialState::thermal(1.5);
    const iontrap::TrapParams p(0.202, 470.0, init.minimal_truncation());
    const auto noise = iontrap::calibrated_noise(11.9, 0.7);
    const DensityMatrix rho0 = init.density(p);
    const auto ps = iontrap::promoted_spectrum(p, noise);
    const HermitianOperator ground = iontrap::atom_ground_projector(p);
    double worst = 0.0;
    for (double t : {0.0, 0.01, 0.05, 0.1, 0.2})
      worst = std::max(worst, std::abs(ps.closed_form(rho0, t).expectation(ground) -
                                       iontrap::p_minus_distribution(p, init, noise, t)));
    add(at_most("ion-trap P_- formula vs promoted density matrix", worst, 1e-10));
  }

  // Gaussian averages of int v dB against closed forms.
  {
    const NoiseKernel v = NoiseKernel::constant(0.8);
    const std::size_t n = 20000, steps = 50;
    const double t_end = 1.0, dt = t_end / static_cast<double>(steps), lam = v.lambda(t_end);
    double s2 = 0.0, s4 = 0.0, c = 0.0, cc = 0.0;
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) {
      GaussianIncrements g(3, i, 0, dt);
      double acc = 0.0;
      for (std::size_t k = 0; k < steps; ++k) acc += 0.8 * g.next();
      x[i] = acc;
      s2 += acc * acc;
      s4 += acc * acc * acc * acc;
      c += std::cos(0.5 + acc);
    }
    const double nn = static_cast<double>(n);
    s2 /= nn;
    s4 /= nn;
    c /= nn;
    for (double xi : x) cc += (std::cos(0.5 + xi) - c) * (std::cos(0.5 + xi) - c);
    const double se_cos = std::sqrt(cc / (nn - 1.0) / nn);
    add(at_most("second moment relative error", std::abs(s2 / theoretical_moment(v, 2, t_end) - 1.0), 0.05));
    add(at_most("fourth moment relative error", std::abs(s4 / theoretical_moment(v, 4, t_end) - 1.0), 0.1));
    add(at_most("E cos(b + X) in stderr units", std::abs(c - expected_cos(0.5, lam)) / se_cos, 5.0));
  }

  // Strict config schema.
  {
    bool rejected = false;
    try {
      std::istringstream in("scenario = jcm-unitary\n[params]\nbogus = 1\n");
      resolve(parse_config(in), find_scenario("jcm-unitary"));
    } catch (const ConfigError&) {
      rejected = true;
    }
    add({"unknown config key rejected", rejected, rejected ? 1.0 : 0.0, 1.0, ""});
    add(at_least("registered scenarios", static_cast<double>(scenario_registry().size()), 9.0));
  }

  rep.table.header = {"check", "value", "tolerance", "passed"};
  for (const auto& c : rep.checks) {
    rep.table.add_row(c.name, {c.value, c.tolerance, c.passed ? 1.0 : 0.0});
    if (!c.passed) ++rep.failures;
  }
  return rep;
}

}  // namespace stochlind::app
