// intrinsic.hpp: spectral promotion of a unitary evolution.
//
// U(t) = sum_a exp(-i E_a t) P_a is promoted to
//   U(t) = sum_a exp(-i (E_a t + int_0^t sigma_a(s) dB_a(s))) P_a,
// with dB_a dB_b = g_ab dt. The ensemble mean multiplies the (a, b) block of
// rho0 by exp(-i (E_a - E_b) t - Lambda_ab(t)/2), where
//   Lambda_ab(t) = int_0^t (sigma_a^2 + sigma_b^2 - 2 g_ab sigma_a sigma_b) ds.

#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "stochlind/core_ops.hpp"
#include "stochlind/ensemble.hpp"
#include "stochlind/lindblad.hpp"
#include "stochlind/stochastic.hpp"

namespace stochlind {

class PromotedSpectrum {
 public:
  // `basis` columns are orthonormal eigenvectors; column c belongs to label
  // column_label[c]. Labels carry energies, noise amplitudes and correlations.
  PromotedSpectrum(ComplexMatrix basis, std::vector<std::size_t> column_label, std::vector<double> energies,
                   std::vector<NoiseKernel> sigma, CorrelationSpec g)
      : basis_(std::move(basis)),
        column_label_(std::move(column_label)),
        energies_(std::move(energies)),
        sigma_(std::move(sigma)),
        g_(std::move(g)) {
    const std::size_t labels = energies_.size();
    if (basis_.rows() != basis_.cols()) throw DimensionError("PromotedSpectrum: basis must be square");
    if (column_label_.size() != static_cast<std::size_t>(basis_.cols()))
      throw DimensionError("PromotedSpectrum: one label per basis column required");
    if (sigma_.size() != labels || static_cast<std::size_t>(g_.size()) != labels)
      throw DimensionError("PromotedSpectrum: sigma / correlation size differs from label count");
    for (std::size_t l : column_label_)
      if (l >= labels) throw DimensionError("PromotedSpectrum: label out of range");
    const ComplexMatrix gram = basis_.adjoint() * basis_;
    if (max_abs(ComplexMatrix(gram - ComplexMatrix::Identity(gram.rows(), gram.cols()))) > 1e-10)
      throw InvariantError("PromotedSpectrum: basis is not orthonormal");
  }

  static PromotedSpectrum from_decomposition(const SpectralDecomposition& sd, std::vector<NoiseKernel> sigma,
                                             CorrelationSpec g) {
    return PromotedSpectrum(sd.basis, sd.column_level, sd.eigenvalues, std::move(sigma), std::move(g));
  }

  Index dim() const noexcept { return basis_.rows(); }
  std::size_t labels() const noexcept { return energies_.size(); }
  const ComplexMatrix& basis() const noexcept { return basis_; }
  const std::vector<std::size_t>& column_label() const noexcept { return column_label_; }
  const std::vector<double>& energies() const noexcept { return energies_; }
  const std::vector<NoiseKernel>& sigma() const noexcept { return sigma_; }
  const CorrelationSpec& correlation() const noexcept { return g_; }

  // Lambda_ab(t) over labels; exactly zero on the diagonal.
  RealMatrix accumulated_rates(double t) const {
    const std::size_t n = labels();
    std::vector<double> lam(n);
    for (std::size_t a = 0; a < n; ++a) lam[a] = sigma_[a].lambda(t);
    RealMatrix out = RealMatrix::Zero(static_cast<Index>(n), static_cast<Index>(n));
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        const double gab = g_.matrix()(static_cast<Index>(a), static_cast<Index>(b));
        const double cross = gab == 0.0 ? 0.0 : gab * cross_integral(sigma_[a], sigma_[b], t);
        const double v = std::max(lam[a] + lam[b] - 2.0 * cross, 0.0);
        out(static_cast<Index>(a), static_cast<Index>(b)) = v;
        out(static_cast<Index>(b), static_cast<Index>(a)) = v;
      }
    }
    return out;
  }

  // exp(-Lambda/2) as a label matrix; must be PSD for the flow to stay positive.
  RealMatrix damping(double t) const {
    RealMatrix d = (-0.5 * accumulated_rates(t)).array().exp().matrix();
    return d;
  }

  void require_valid_damping(double t) const {
    const RealMatrix d = damping(t);
    Eigen::SelfAdjointEigenSolver<RealMatrix> es(d, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, d.norm())) {
      throw InvariantError("PromotedSpectrum: damping matrix exp(-Lambda/2) is not positive semidefinite");
    }
  }

  DensityMatrix closed_form(const DensityMatrix& rho0, double t, const Tolerances& tol = {}) const {
    if (rho0.dim() != dim()) throw DimensionError("PromotedSpectrum::closed_form: dimension mismatch");
    if (t < 0.0) throw InvariantError("PromotedSpectrum::closed_form: t must be >= 0");
    require_valid_damping(t);
    const RealMatrix d = damping(t);
    ComplexMatrix r = basis_.adjoint() * rho0.matrix() * basis_;
    for (Index j = 0; j < r.cols(); ++j) {
      const std::size_t b = column_label_[static_cast<std::size_t>(j)];
      for (Index i = 0; i < r.rows(); ++i) {
        const std::size_t a = column_label_[static_cast<std::size_t>(i)];
        if (a == b) {
          continue;
        }
        r(i, j) *= std::polar(d(static_cast<Index>(a), static_cast<Index>(b)), -(energies_[a] - energies_[b]) * t);
      }
    }
    ComplexMatrix out = basis_ * r * basis_.adjoint();
    out = 0.5 * (out + out.adjoint()).eval();
    return DensityMatrix(out, tol);
  }

  HermitianOperator hamiltonian() const {
    Eigen::VectorXd e(basis_.cols());
    for (Index c = 0; c < e.size(); ++c) e(c) = energies_[column_label_[static_cast<std::size_t>(c)]];
    ComplexMatrix h = basis_ * e.asDiagonal() * basis_.adjoint();
    return HermitianOperator(ComplexMatrix(0.5 * (h + h.adjoint())));
  }

  // Projector onto the columns of one label.
  ComplexMatrix projector(std::size_t label) const {
    ComplexMatrix p = ComplexMatrix::Zero(dim(), dim());
    for (Index c = 0; c < basis_.cols(); ++c)
      if (column_label_[static_cast<std::size_t>(c)] == label) p += basis_.col(c) * basis_.col(c).adjoint();
    return p;
  }

  // Equivalent Lindblad form for constant amplitudes: with g = L L^T, channels
  // V_k = sum_a sigma_a L_ak P_a with unit kernels.
  LindbladModel equivalent_lindblad() const {
    for (const auto& s : sigma_)
      if (!s.is_constant()) throw InvariantError("equivalent_lindblad: constant amplitudes required");
    const CorrelationFactor f = g_.factor();
    std::vector<ComplexMatrix> ops(f.channels, ComplexMatrix::Zero(dim(), dim()));
    std::vector<ComplexMatrix> proj;
    for (std::size_t a = 0; a < labels(); ++a) proj.push_back(projector(a));
    for (std::size_t a = 0; a < labels(); ++a) {
      const double s = sigma_[a].coefficient();
      if (s == 0.0) continue;
      for (const auto& e : f.rows[a]) ops[e.channel] += (s * e.weight) * proj[a];
    }
    std::vector<DephasingChannel> chans;
    for (auto& op : ops) {
      if (max_abs(op) == 0.0) continue;
      chans.push_back({HermitianOperator(ComplexMatrix(0.5 * (op + op.adjoint()))), NoiseKernel::constant(1.0)});
    }
    return LindbladModel(hamiltonian(), std::move(chans));
  }

  SpectralPhaseEngine engine() const {
    const CorrelationFactor f = g_.factor();
    SpectralPhaseEngine e;
    e.basis = basis_;
    e.energies.resize(basis_.cols());
    bool all_constant = true;
    for (const auto& s : sigma_) all_constant = all_constant && s.is_constant();
    for (std::size_t k = 0; k < f.channels; ++k) e.channel_kernels.push_back(NoiseKernel::constant(1.0));
    for (Index c = 0; c < basis_.cols(); ++c) {
      const std::size_t a = column_label_[static_cast<std::size_t>(c)];
      e.energies(c) = energies_[a];
      if (!all_constant) e.column_kernels.push_back(sigma_[a]);
      if (sigma_[a].is_zero()) continue;
      const double amp = all_constant ? sigma_[a].coefficient() : 1.0;
      for (const auto& entry : f.rows[a]) e.terms.push_back({c, entry.channel, amp * entry.weight});
    }
    return e;
  }

  EnsembleResult monte_carlo(const DensityMatrix& rho0, const EnsembleConfig& cfg,
                             const std::vector<Observable>& observables = {}, const Tolerances& tol = {}) const {
    return engine().run(rho0, cfg, observables, tol);
  }

 private:
  ComplexMatrix basis_;
  std::vector<std::size_t> column_label_;
  std::vector<double> energies_;
  std::vector<NoiseKernel> sigma_;
  CorrelationSpec g_;
};

// ---------------------------------------------------------------------------
// Generalized Milburn generator

// -i[H, rho] - (gamma/2)(H^2 rho + rho H^2 - 2 H e^{-tau^2 C_H^2}[rho] H), evaluated
// element-wise in the eigenbasis of H.
inline ComplexMatrix milburn_generator_apply(const HermitianOperator& h, double gamma, double tau,
                                             const ComplexMatrix& rho) {
  require_same_dim(h.matrix(), rho, "milburn_generator_apply");
  if (gamma < 0.0 || tau < 0.0) throw InvariantError("milburn_generator_apply: gamma and tau must be >= 0");
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h.matrix());
  if (es.info() != Eigen::Success) throw NumericalError("milburn_generator_apply: eigen-solver failed");
  const ComplexMatrix& w = es.eigenvectors();
  const Eigen::VectorXd& e = es.eigenvalues();
  ComplexMatrix r = w.adjoint() * rho * w;
  for (Index k = 0; k < r.cols(); ++k) {
    for (Index j = 0; j < r.rows(); ++j) {
      const double d = e(j) - e(k);
      const double rate = e(j) * e(j) + e(k) * e(k) - 2.0 * e(j) * e(k) * std::exp(-tau * tau * d * d);
      r(j, k) *= cplx{-0.5 * gamma * rate, -d};
    }
  }
  return w * r * w.adjoint();
}

// lambda(t) = int_0^t sigma^2(s) ds for the non-Markovian dephasing equation
//   drho/dt = -i[H, rho] - (sigma^2(t)/2)[H, [H, rho]].
inline double nonmarkov_dephasing_rate(const NoiseKernel& sigma, double t) { return lambda_of_t(sigma, t); }

inline LindbladModel nonmarkov_dephasing_model(const HermitianOperator& h, const NoiseKernel& sigma) {
  return LindbladModel(h, {{h, sigma}});
}

// ---------------------------------------------------------------------------
// Spectral promotion spec

struct SpectralPromotionSpec {
  enum class Sigma { constant, proportional, per_level };
  enum class Correlation { independent, gaussian, custom };

  SpectralDecomposition base;
  Sigma sigma = Sigma::proportional;
  double gamma = 0.0;
  NoiseKernel profile = NoiseKernel::constant(1.0);  // time profile for constant / proportional
  std::vector<NoiseKernel> level_kernels;            // per_level
  Correlation correlation = Correlation::independent;
  double tau = 0.0;
  RealMatrix custom;                                 // custom correlation over levels

  // sigma_a(t) = sqrt(gamma) f(t), sqrt(gamma) E_a f(t), or a per-level kernel.
  std::vector<NoiseKernel> level_sigma() const {
    if (gamma < 0.0) throw InvariantError("SpectralPromotionSpec: gamma must be >= 0");
    std::vector<NoiseKernel> out;
    const double s = std::sqrt(gamma);
    for (std::size_t a = 0; a < base.levels(); ++a) {
      switch (sigma) {
        case Sigma::constant:
          out.push_back(profile.scaled(s));
          break;
        case Sigma::proportional:
          out.push_back(profile.scaled(s * base.eigenvalues[a]));
          break;
        case Sigma::per_level:
          if (level_kernels.size() != base.levels())
            throw DimensionError("SpectralPromotionSpec: one kernel per level required");
          out.push_back(level_kernels[a]);
          break;
      }
    }
    return out;
  }

  CorrelationSpec correlation_spec() const {
    const Index n = static_cast<Index>(base.levels());
    switch (correlation) {
      case Correlation::independent:
        return CorrelationSpec::identity(n);
      case Correlation::gaussian: {
        if (tau < 0.0) throw InvariantError("SpectralPromotionSpec: tau must be >= 0");
        RealMatrix g(n, n);
        for (Index a = 0; a < n; ++a)
          for (Index b = 0; b < n; ++b) {
            const double d = base.eigenvalues[static_cast<std::size_t>(a)] - base.eigenvalues[static_cast<std::size_t>(b)];
            g(a, b) = std::exp(-tau * tau * d * d);
          }
        return CorrelationSpec(g);
      }
      case Correlation::custom:
        if (custom.rows() != n) throw DimensionError("SpectralPromotionSpec: custom correlation size mismatch");
        return CorrelationSpec(custom);
    }
    throw InvariantError("SpectralPromotionSpec: unknown correlation");
  }

  PromotedSpectrum promoted() const {
    return PromotedSpectrum::from_decomposition(base, level_sigma(), correlation_spec());
  }
};

inline EnsembleResult spectral_promoted_evolve(const SpectralPromotionSpec& spec, const DensityMatrix& rho0,
                                               const EnsembleConfig& cfg,
                                               const std::vector<Observable>& observables = {}) {
  return spec.promoted().monte_carlo(rho0, cfg, observables);
}

}  // namespace stochlind
