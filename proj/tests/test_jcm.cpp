#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "stochlind/ensemble.hpp"
#include "stochlind/jcm.hpp"
#include "support.hpp"

using namespace stochlind;
using namespace stochlind::jcm;
using namespace testing_support;

namespace {

const double nbar = 0.4;

std::vector<double> sorted_eigenvalues(const HermitianOperator& h) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h.matrix());
  std::vector<double> v(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
  std::sort(v.begin(), v.end());
  return v;
}

// 2 Tr[rho S_z] and P_n along exact unitary propagation.
struct FullState {
  std::vector<double> inversion;
  std::vector<std::vector<double>> pn;
};

FullState propagate(const JcmParams& p, const CoherentAmplitude& q, const std::vector<double>& times) {
  const HermitianOperator h = build_hamiltonian(p);
  const ComplexVector psi0 = excited_coherent_state(p, q);
  FullState out;
  for (double t : times) {
    const ComplexVector psi = expm_hermitian_generator(h, t) * psi0;
    const ComplexMatrix rho = psi * psi.adjoint();
    out.inversion.push_back(2.0 * sz(p).expectation(rho));
    out.pn.push_back(photon_distribution(p, rho));
  }
  return out;
}

std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> t;
  for (std::size_t i = 0; i < n; ++i) t.push_back(a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
  return t;
}

}  // namespace

TEST(JcmParams, Invariants) {
  EXPECT_THROW(JcmParams(1.0, 1.0, 0, 5), InvariantError);
  EXPECT_THROW(JcmParams(1.0, 1.0, 3, 2), InvariantError);
  JcmParams p(1.0, 1.0, 2, 5);
  p.omega0 = 1.5;
  EXPECT_THROW(p.validate(), InvariantError);
}

TEST(CoherentAmplitude, Adequacy) {
  EXPECT_THROW(CoherentAmplitude(2.0, 4), InvariantError);
  const CoherentAmplitude q(std::sqrt(nbar), default_truncation(nbar, 1));
  double total = 0.0;
  for (double w : q.weights()) total += w;
  EXPECT_GE(total, 1.0 - 1e-10);
  EXPECT_NEAR(q.weight(0), std::exp(-nbar), 1e-15);
  EXPECT_EQ(q.weight(-1), 0.0);
}

TEST(BuildHamiltonian, FreeLimit) {
  const JcmParams p(1.3, 0.0, 2, 6);
  const ComplexMatrix h = build_hamiltonian(p).matrix();
  EXPECT_LT(dist(h, ComplexMatrix(h.diagonal().asDiagonal())), 1e-15);
  for (std::size_t n = 0; n <= p.n_max; ++n) {
    EXPECT_NEAR(h(p.index(0, n), p.index(0, n)).real(), 1.3 * n + p.omega0 / 2.0, 1e-14);
    EXPECT_NEAR(h(p.index(1, n), p.index(1, n)).real(), 1.3 * n - p.omega0 / 2.0, 1e-14);
  }
}

TEST(BuildHamiltonian, DressedSplitting) {
  const double w = 1.0, l = 0.3;
  const JcmParams p(w, l, 1, 5);
  std::vector<double> expect{-w / 2.0, w * 5 + w / 2.0};
  for (std::size_t n = 0; n < p.n_max; ++n) {
    const double c = w * n + w / 2.0, g = l * std::sqrt(n + 1.0);
    expect.push_back(c - g);
    expect.push_back(c + g);
  }
  std::sort(expect.begin(), expect.end());
  const auto got = sorted_eigenvalues(build_hamiltonian(p));
  ASSERT_EQ(got.size(), expect.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], expect[i], 1e-12);
}

TEST(BuildHamiltonian, ConservesExcitationNumber) {
  const JcmParams p(1.0, 0.7, 2, 10);
  const ComplexMatrix c = commutator(build_hamiltonian(p).matrix(), excitation_number(p).matrix());
  EXPECT_LT(max_abs(c), 1e-12);
}

TEST(Inversion, InitialAndVacuum) {
  const JcmParams p(1.0, 0.8, 1, default_truncation(nbar, 1));
  const CoherentAmplitude q(std::sqrt(nbar), p.n_max);
  EXPECT_NEAR(inversion_unitary(p, q, 0.0), 1.0, 1e-10);
  const JcmParams v(1.0, 0.8, 1, 3);
  const CoherentAmplitude vac(0.0, 3);
  for (double t : {0.0, 0.4, 1.7, 5.0}) EXPECT_NEAR(inversion_unitary(v, vac, t), std::cos(2.0 * 0.8 * t), 1e-15);
}

TEST(Inversion, MatchesUnitaryPropagation) {
  for (std::size_t m : {1u, 2u}) {
    const JcmParams p(1.0, 1.0, m, default_truncation(nbar, m));
    const CoherentAmplitude q(std::sqrt(nbar), p.n_max);
    const auto times = linspace(0.0, 30.0, 121);
    const auto full = propagate(p, q, times);
    for (std::size_t k = 0; k < times.size(); ++k) {
      EXPECT_NEAR(inversion_unitary(p, q, times[k]), full.inversion[k], 1e-8) << "m=" << m;
      double total = 0.0;
      for (std::size_t n = 0; n <= p.n_max; ++n) {
        const double pn = photon_distribution_unitary(p, q, n, times[k]);
        EXPECT_NEAR(pn, full.pn[k][n], 1e-8);
        EXPECT_GE(pn, 0.0);
        EXPECT_LE(pn, 1.0);
        total += pn;
      }
      EXPECT_NEAR(total, 1.0, 1e-10);
    }
  }
}

TEST(PhotonDistribution, InitialWeights) {
  const JcmParams p(1.0, 1.0, 2, default_truncation(nbar, 2));
  const CoherentAmplitude q(std::sqrt(nbar), p.n_max);
  for (std::size_t n = 0; n <= p.n_max; ++n) EXPECT_NEAR(photon_distribution_unitary(p, q, n, 0.0), q.weight(n), 1e-15);
  EXPECT_THROW(photon_distribution_unitary(p, q, p.n_max + 1, 0.0), DimensionError);
}

TEST(Damped, ZeroGammaIsUnitary) {
  const JcmParams p(1.0, 1.0, 2, default_truncation(nbar, 2));
  const CoherentAmplitude q(std::sqrt(nbar), p.n_max);
  for (double t : {0.3, 2.0, 9.0}) {
    EXPECT_EQ(inversion_damped(p, q, 0.0, t), inversion_unitary(p, q, t));
    for (std::size_t n = 0; n <= p.n_max; ++n)
      EXPECT_EQ(photon_distribution_damped(p, q, 0.0, n, t), photon_distribution_unitary(p, q, n, t));
  }
}

TEST(Damped, LongTimeLimit) {
  const JcmParams p(1.0, 1.0, 1, default_truncation(nbar, 1));
  const CoherentAmplitude q(std::sqrt(nbar), p.n_max);
  for (std::size_t n = 1; n + 1 <= p.n_max; ++n)
    EXPECT_NEAR(photon_distribution_damped(p, q, 0.5, n, 1e3), 0.5 * (q.weight(n) + q.weight(n - 1)), 1e-15);
}

TEST(Damped, EnvelopeBound) {
  const JcmParams p(1.0, 1.0, 2, default_truncation(nbar, 2));
  const CoherentAmplitude q(std::sqrt(nbar), p.n_max);
  for (double t : linspace(0.0, 20.0, 401))
    EXPECT_LE(std::abs(inversion_damped(p, q, 0.05, t)), inversion_envelope(p, q, 0.05, t) + 1e-15);
}

TEST(Damped, MatchesMasterEquation) {
  for (std::size_t m : {1u, 2u}) {
    const JcmParams p(1.0, 1.0, m, default_truncation(nbar, m));
    const CoherentAmplitude q(std::sqrt(nbar), p.n_max);
    const double gamma = 0.02;
    IntegrateOptions opt;
    opt.record_every = 40;
    opt.observables = {{"sz", sz(p)}};
    const auto rec = integrate(phase_damped_model(p, gamma), DensityMatrix::pure(excited_coherent_state(p, q)),
                               TimeGrid(10.0, 4000), opt);
    double w_err = 0.0, p_err = 0.0, printed = 0.0;
    for (std::size_t k = 0; k < rec.times.size(); ++k) {
      const double t = rec.times[k];
      w_err = std::max(w_err, std::abs(2.0 * rec.observables.at("sz")[k] - inversion_damped(p, q, gamma, t)));
      const auto pn = photon_distribution(p, rec.states[k].matrix());
      for (std::size_t n = 0; n <= p.n_max; ++n) {
        p_err = std::max(p_err, std::abs(pn[n] - photon_distribution_damped(p, q, gamma, n, t)));
        printed = std::max(printed, std::abs(pn[n] - photon_distribution_damped_printed(p, q, gamma, n, t)));
      }
    }
    EXPECT_LT(w_err, 1e-6) << "m=" << m;
    EXPECT_LT(p_err, 1e-6) << "m=" << m;
    EXPECT_GT(printed, 0.1) << "m=" << m;
  }
}

TEST(Damped, MatchesTimePromotionEnsemble) {
  const JcmParams p(1.0, 1.0, 1, default_truncation(nbar, 1));
  const CoherentAmplitude q(std::sqrt(nbar), p.n_max);
  const double gamma = 0.05;
  const RandomUnitaryModel model(phase_damped_model(p, gamma));
  ASSERT_TRUE(model.commuting());
  EnsembleConfig c;
  c.n_traj = 2000;
  c.master_seed = 17;
  c.grid = TimeGrid(10.0, 1000);
  c.record_every = 50;
  c.keep_states = false;
  const HermitianOperator w(ComplexMatrix(2.0 * sz(p).matrix()));
  const auto r = ensemble_average(model, DensityMatrix::pure(excited_coherent_state(p, q)), c, {{"W", w}});
  const auto& s = r.observables.at("W");
  for (std::size_t k = 0; k < r.times.size(); ++k)
    EXPECT_LT(std::abs(s.mean[k] - inversion_damped(p, q, gamma, r.times[k])), 5.0 * std::max(s.stderr_[k], 1e-12));
}

TEST(Revival, ExistsAboveCollapsePlateau) {
  const JcmParams p(1.0, 1.0, 1, default_truncation(nbar, 1));
  const CoherentAmplitude q(std::sqrt(nbar), p.n_max);
  double plateau = 0.0, peak = 0.0;
  for (double t : linspace(3.0, 5.0, 2001)) plateau = std::max(plateau, std::abs(inversion_unitary(p, q, t)));
  for (double t : linspace(6.0, 9.0, 3001)) peak = std::max(peak, std::abs(inversion_unitary(p, q, t)));
  EXPECT_LT(plateau, 0.6);
  EXPECT_GT(peak, 0.9);
}

TEST(StochasticJcm, Limits) {
  const CoherentAmplitude q(std::sqrt(nbar), default_truncation(nbar, 1));
  const auto w = q.weights();
  EXPECT_NEAR(p_eg_stochastic_jcm(w, 2.0, 0.3, 0.0), 0.0, 1e-10);
  for (double t : {0.2, 1.0, 3.3}) EXPECT_NEAR(p_eg_stochastic_jcm(w, 2.0, 0.0, t), p_eg_orthodox(w, 2.0, t), 1e-14);
  EXPECT_THROW(p_eg_stochastic_jcm({0.7, 0.5}, 1.0, 0.1, 1.0), InvariantError);
  EXPECT_THROW(p_eg_stochastic_jcm({-0.1}, 1.0, 0.1, 1.0), InvariantError);
  EXPECT_THROW(p_eg_stochastic_jcm(w, 1.0, -0.1, 1.0), InvariantError);
}

TEST(StochasticJcm, CaptionEnvelopeRates) {
  const double lambda = 50.0 * std::numbers::pi, gamma = 1.0 / (2.0 * std::numbers::pi);
  for (std::size_t n = 0; n < 4; ++n) {
    std::vector<double> w(n + 1, 0.0);
    w[n] = 1.0;
    // cos = 1 at the k-th Rabi period of this level.
    const double t = 3.0 * std::numbers::pi / (lambda * std::sqrt(n + 1.0));
    const double rate = -std::log(1.0 - 2.0 * p_eg_stochastic_jcm(w, lambda, gamma, t)) / t;
    EXPECT_NEAR(rate / (2.0 * (n + 1.0) * gamma * lambda), 1.0, 1e-9);
  }
}

TEST(CouplingKernel, Basics) {
  EXPECT_EQ(coupling_promotion_kernel(0.0, 3.0).coefficient(), 0.0);
  const auto k = coupling_promotion_kernel(0.2, 3.0);
  EXPECT_NEAR(k.lambda(1.5), 0.2 * 3.0 * 1.5, 1e-14);
  EXPECT_THROW(coupling_promotion_kernel(-1.0, 1.0), InvariantError);
}

TEST(CouplingKernel, EnsembleReproducesEnvelope) {
  const JcmParams p(1.0, 1.0, 1, default_truncation(nbar, 1));
  const CoherentAmplitude q(std::sqrt(nbar), p.n_max);
  const double gamma = 0.1;
  const RandomUnitaryModel model(stochastic_coupling_model(p, gamma));
  EnsembleConfig c;
  c.n_traj = 2000;
  c.master_seed = 23;
  c.grid = TimeGrid(4.0, 400);
  c.record_every = 20;
  c.keep_states = false;
  const auto r = ensemble_average(model, DensityMatrix::pure(excited_coherent_state(p, q)), c,
                                  {{"Peg", atom_ground_projector(p)}});
  auto w = q.weights();
  w.pop_back();
  const auto& s = r.observables.at("Peg");
  for (std::size_t k = 0; k < r.times.size(); ++k)
    EXPECT_LT(std::abs(s.mean[k] - p_eg_stochastic_jcm(w, p.coupling, gamma, r.times[k])),
              5.0 * std::max(s.stderr_[k], 1e-12));
}
