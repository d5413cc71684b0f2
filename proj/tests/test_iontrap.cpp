#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "stochlind/iontrap.hpp"
#include "support.hpp"

using namespace stochlind;
using namespace stochlind::iontrap;
using namespace testing_support;

namespace {

const double eta = 0.202, rabi = 470.0, gamma0 = 11.9;

// Random full-rank state on the trap space.
DensityMatrix random_trap_state(std::mt19937_64& rng, const TrapParams& p) { return random_density(rng, p.dim()); }

}  // namespace

TEST(TrapParams, Invariants) {
  EXPECT_THROW(TrapParams(0.0, 1.0, 2), InvariantError);
  EXPECT_THROW(TrapParams(0.1, -1.0, 2), InvariantError);
  EXPECT_THROW(TrapParams(0.1, 1.0, 0), InvariantError);
}

TEST(BlueSideband, Spectrum) {
  const TrapParams p(eta, rabi, 5);
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(blue_sideband_hamiltonian(p).matrix());
  std::vector<double> got(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
  std::vector<double> expect{0.0, 0.0};
  for (std::size_t n = 1; n <= p.n_max; ++n) {
    expect.push_back(eta * rabi * std::sqrt(n));
    expect.push_back(-eta * rabi * std::sqrt(n));
  }
  std::sort(expect.begin(), expect.end());
  ASSERT_EQ(got.size(), expect.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], expect[i], 1e-10);
}

TEST(BlueSideband, DressedStates) {
  const TrapParams p(eta, rabi, 6);
  const ComplexMatrix h = blue_sideband_hamiltonian(p).matrix();
  const auto d = dressed_basis(p);
  EXPECT_LT(dist(d.basis.adjoint() * d.basis, ComplexMatrix::Identity(p.dim(), p.dim())), 1e-15);
  for (Index c = 0; c < d.basis.cols(); ++c) {
    const double e = d.energies[d.column_label[static_cast<std::size_t>(c)]];
    EXPECT_LT((h * d.basis.col(c) - e * d.basis.col(c)).norm(), 1e-12);
  }
}

TEST(BlueSideband, CaptionFirstDoublet) {
  const TrapParams p(eta, rabi, 3);
  const auto d = dressed_basis(p);
  EXPECT_NEAR(d.energies[label_of(1, +1)], 94.94, 1e-12);
  EXPECT_NEAR(d.energies[label_of(1, -1)], -94.94, 1e-12);
}

TEST(ComInitialState, Weights) {
  const auto th = ComInitialState::thermal(1.5).weights(60);
  for (std::size_t n = 0; n < 5; ++n) EXPECT_NEAR(th[n], std::pow(1.5, n) / std::pow(2.5, n + 1.0), 1e-15);
  const auto co = ComInitialState::coherent(cplx{0.6, 0.8}).weights(20);
  EXPECT_NEAR(co[2], std::exp(-1.0) / 2.0, 1e-15);
  EXPECT_THROW(ComInitialState::fock(4).weights(3), DimensionError);
  EXPECT_THROW(ComInitialState::thermal(1.5).weights(10), InvariantError);
  const auto init = ComInitialState::thermal(1.5);
  EXPECT_NO_THROW(init.weights(init.minimal_truncation() - 1));
  EXPECT_THROW(init.weights(init.minimal_truncation() - 2), InvariantError);
}

TEST(LevelNoise, Calibration) {
  const auto noise = calibrated_noise(gamma0, 0.7);
  EXPECT_DOUBLE_EQ(noise.gamma_scale, 2.0 * gamma0);
  EXPECT_DOUBLE_EQ(noise.exponent, 0.35);
  for (std::size_t n = 0; n <= 10; ++n)
    EXPECT_NEAR(noise.fock_decay_rate(n) / (gamma0 * std::pow(n + 1.0, 0.7)), 1.0, 1e-14);
  EXPECT_NEAR(noise.fock_decay_rate(1) / noise.fock_decay_rate(0), std::pow(2.0, 0.7), 1e-14);
  EXPECT_NEAR(std::pow(2.0, 0.7), 1.6245, 1e-4);
}

TEST(LevelNoise, AmplitudeDifference) {
  LevelNoiseSpec s;
  s.gamma_scale = 3.0;
  s.exponent = 0.4;
  const auto v = s.amplitudes(4);
  EXPECT_TRUE(v[0].is_zero());
  for (std::size_t n = 1; n <= 4; ++n)
    EXPECT_NEAR(v[label_of(n, +1)].coefficient() - v[label_of(n, -1)].coefficient(), std::sqrt(3.0) * std::pow(n, 0.4),
                1e-14);
}

TEST(LevelNoise, CorrelationChecks) {
  LevelNoiseSpec s;
  s.gamma_scale = 1.0;
  RealMatrix g = RealMatrix::Identity(3, 3);
  g(1, 2) = 0.5;
  s.correlation = g;
  EXPECT_THROW(s.correlation_spec(1), InvariantError);
  s.correlation = RealMatrix::Identity(5, 5);
  EXPECT_THROW(s.correlation_spec(1), DimensionError);
  RealMatrix bad = RealMatrix::Identity(3, 3);
  bad(1, 2) = bad(2, 1) = 2.0;
  s.correlation = bad;
  EXPECT_THROW(s.correlation_spec(1), InvariantError);
}

TEST(Promoted, AccumulatedRates) {
  const TrapParams p(eta, rabi, 4);
  const auto noise = calibrated_noise(gamma0, 0.7);
  const auto ps = promoted_spectrum(p, noise);
  const double t = 0.03;
  const RealMatrix lam = ps.accumulated_rates(t);
  EXPECT_LT((lam - lam.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  for (Index a = 0; a < lam.rows(); ++a) EXPECT_EQ(lam(a, a), 0.0);
  for (std::size_t n = 1; n <= p.n_max; ++n) {
    const auto a = static_cast<Index>(label_of(n, +1)), b = static_cast<Index>(label_of(n, -1));
    EXPECT_NEAR(lam(a, b), noise.gamma_scale * std::pow(n, 2.0 * noise.exponent) * t, 1e-12);
  }
}

TEST(Promoted, Limits) {
  std::mt19937_64 rng(1);
  const TrapParams p(eta, rabi, 3);
  const DensityMatrix rho0 = random_trap_state(rng, p);
  EXPECT_LT(dist(promoted_density_matrix(p, rho0, calibrated_noise(gamma0, 0.7), 0.0).matrix(), rho0.matrix()), 1e-14);
  const HermitianOperator h = blue_sideband_hamiltonian(p);
  for (double t : {0.004, 0.02}) {
    const ComplexMatrix u = expm_hermitian_generator(h, t);
    EXPECT_LT(dist(promoted_density_matrix(p, rho0, LevelNoiseSpec{}, t).matrix(), u * rho0.matrix() * u.adjoint()),
              1e-12);
  }
}

TEST(Promoted, ValidStates) {
  std::mt19937_64 rng(2);
  const TrapParams p(eta, rabi, 3);
  for (int i = 0; i < 20; ++i) {
    const DensityMatrix rho0 = random_trap_state(rng, p);
    const DensityMatrix out = promoted_density_matrix(p, rho0, calibrated_noise(gamma0, 0.7), 0.01 * (i + 1));
    EXPECT_NEAR(out.matrix().trace().real(), 1.0, 1e-12);
    EXPECT_LT(dist(out.matrix(), out.matrix().adjoint()), 1e-14);
  }
}

TEST(Promoted, MatchesEquivalentLindblad) {
  std::mt19937_64 rng(3);
  const TrapParams p(eta, rabi, 3);
  const auto ps = promoted_spectrum(p, calibrated_noise(gamma0, 0.7));
  const LindbladModel lm = ps.equivalent_lindblad();
  const DensityMatrix rho0 = random_trap_state(rng, p);
  for (double t : {0.005, 0.02, 0.05}) {
    EXPECT_LT(dist(ps.closed_form(rho0, t).matrix(), analytic_markov_evolve(lm, rho0, t).matrix()), 1e-8);
  }
  const auto rec = integrate(lm, rho0, TimeGrid(0.05, 5000), {5000, {}, {}});
  EXPECT_LT(dist(rec.states.back().matrix(), ps.closed_form(rho0, 0.05).matrix()), 1e-8);
}

TEST(PMinus, FockFormula) {
  const TrapParams p(eta, rabi, 6);
  const auto noise = calibrated_noise(gamma0, 0.7);
  for (std::size_t n = 0; n < 5; ++n) {
    EXPECT_NEAR(p_minus_fock(p, n, noise, 0.0), 1.0, 1e-15);
    for (double t : {0.003, 0.01, 0.07}) {
      const double c = std::cos(eta * rabi * t * std::sqrt(n + 1.0));
      EXPECT_NEAR(p_minus_fock(p, n, LevelNoiseSpec{}, t), c * c, 1e-12);
      const double closed = promoted_density_matrix(p, ComInitialState::fock(n).density(p), noise, t)
                                .expectation(atom_ground_projector(p));
      EXPECT_NEAR(p_minus_fock(p, n, noise, t), closed, 1e-12);
    }
  }
  EXPECT_THROW(p_minus_fock(p, 6, noise, 0.1), DimensionError);
}

TEST(PMinus, BoundedWithDecayingPeaks) {
  const TrapParams p(eta, rabi, 4);
  const auto noise = calibrated_noise(gamma0, 0.7);
  const double period = std::numbers::pi / p.sideband_rabi(3);
  double prev = 2.0;
  for (int k = 0; k < 40; ++k) {
    const double peak = p_minus_fock(p, 2, noise, k * period);
    EXPECT_LT(peak, prev);
    prev = peak;
    for (int j = 1; j < 10; ++j) {
      const double v = p_minus_fock(p, 2, noise, (k + j / 10.0) * period);
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(PMinus, Distributions) {
  const auto noise = calibrated_noise(gamma0, 0.7);
  const auto init = ComInitialState::thermal(1.5);
  const TrapParams p(eta, rabi, init.minimal_truncation());
  EXPECT_NEAR(p_minus_distribution(p, init, LevelNoiseSpec{}, 0.0), 1.0, 1e-12);
  const TrapParams q(eta, rabi, 5);
  for (double t : {0.0, 0.01, 0.2}) EXPECT_NEAR(p_minus_distribution(q, ComInitialState::fock(3), noise, t),
                                                p_minus_fock(q, 3, noise, t), 1e-15);
  const auto rho0 = init.density(p);
  const auto ps = promoted_spectrum(p, noise);
  for (double t : {0.01, 0.05, 0.1})
    EXPECT_NEAR(p_minus_distribution(p, init, noise, t), ps.closed_form(rho0, t).expectation(atom_ground_projector(p)),
                1e-10);
}

TEST(MonteCarlo, MatchesClosedForm) {
  const TrapParams p(eta, rabi, 4);
  const auto noise = calibrated_noise(gamma0, 0.7);
  const auto init = ComInitialState::fock(1);
  EnsembleConfig c;
  c.n_traj = 10000;
  c.master_seed = 5;
  c.grid = TimeGrid(0.15, 300);
  c.record_every = 10;
  c.keep_states = false;
  const auto r = mc_promoted_evolution(p, init.density(p), noise, c);
  const auto& s = r.observables.at("p_minus");
  for (std::size_t k = 0; k < r.times.size(); ++k)
    EXPECT_LT(std::abs(s.mean[k] - p_minus_fock(p, 1, noise, r.times[k])), 5.0 * std::max(s.stderr_[k], 1e-12));
}

TEST(MonteCarlo, NoNoiseIsDeterministic) {
  const TrapParams p(eta, rabi, 3);
  EnsembleConfig c;
  c.n_traj = 50;
  c.grid = TimeGrid(0.05, 50);
  c.record_every = 10;
  const auto r = mc_promoted_evolution(p, ComInitialState::fock(1).density(p), LevelNoiseSpec{}, c);
  const auto& s = r.observables.at("p_minus");
  for (std::size_t k = 0; k < r.times.size(); ++k) {
    EXPECT_EQ(s.stderr_[k], 0.0);
    EXPECT_NEAR(s.mean[k], p_minus_fock(p, 1, LevelNoiseSpec{}, r.times[k]), 1e-12);
  }
}

TEST(MonteCarlo, FullyCorrelatedEqualAmplitudes) {
  std::mt19937_64 rng(4);
  const TrapParams p(eta, rabi, 3);
  auto d = dressed_basis(p);
  const std::size_t labels = d.energies.size();
  const auto l = static_cast<Index>(labels);
  const PromotedSpectrum ps(d.basis, d.column_label, d.energies,
                            std::vector<NoiseKernel>(labels, NoiseKernel::constant(0.7)),
                            CorrelationSpec(RealMatrix::Ones(l, l)));
  EXPECT_LT(ps.accumulated_rates(1.0).cwiseAbs().maxCoeff(), 1e-15);
  const DensityMatrix rho0 = random_trap_state(rng, p);
  EnsembleConfig c;
  c.n_traj = 20;
  c.grid = TimeGrid(0.05, 50);
  c.record_every = 25;
  const auto r = ps.monte_carlo(rho0, c);
  for (std::size_t k = 0; k < r.times.size(); ++k)
    EXPECT_LT(dist(r.mean_states[k].matrix(), ps.closed_form(rho0, r.times[k]).matrix()), 1e-12);
}

TEST(Fit, ExactSyntheticRates) {
  const auto noise = calibrated_noise(gamma0, 0.7);
  std::vector<std::pair<double, double>> rates;
  for (std::size_t n = 0; n <= 5; ++n) rates.emplace_back(static_cast<double>(n), noise.fock_decay_rate(n));
  const auto f = fit_decay_exponent(rates);
  EXPECT_NEAR(f.exponent, 0.7, 1e-12);
  EXPECT_NEAR(f.scale, gamma0, 1e-10);
  EXPECT_LT(f.residual, 1e-12);
}

TEST(Fit, Preconditions) {
  EXPECT_THROW(fit_decay_exponent({{0, 1.0}, {1, 2.0}}), InvariantError);
  EXPECT_THROW(fit_decay_exponent({{0, 1.0}, {1, 0.0}, {2, 3.0}}), InvariantError);
}

TEST(Fit, MonteCarloEnvelopeRate) {
  const TrapParams p(eta, rabi, 2);
  const auto noise = calibrated_noise(gamma0, 0.7);
  EnsembleConfig c;
  c.n_traj = 2000;
  c.master_seed = 9;
  c.keep_states = false;
  c.state_stderr = false;
  const auto e = mc_envelope_rate(p, 1, noise, 0.2, 4, c);
  EXPECT_GE(e.points, 3u);
  EXPECT_LT(std::abs(e.rate - noise.fock_decay_rate(1)), 5.0 * e.rate_stderr);
}
