// jcm.hpp: resonant multiphoton Jaynes-Cummings model on a truncated Fock space.
//
//   H = w a^dag a + w0 S_z + lambda (S_- a^dag^m + S_+ a^m),   w0 = m w.
//
// Basis ordering is atom-major: index = atom * (n_max + 1) + n with atom 0 the
// excited state |+> and atom 1 the ground state |->. S_z = diag(+1/2, -1/2),
// so the inversion series equals 2 Tr[rho S_z].

#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "stochlind/core_ops.hpp"
#include "stochlind/lindblad.hpp"
#include "stochlind/stochastic.hpp"

namespace stochlind::jcm {

// sqrt((n+m)!/n!), the doublet Rabi factor.
inline double rabi_factor(std::size_t n, std::size_t m) {
  double p = 1.0;
  for (std::size_t k = n + 1; k <= n + m; ++k) p *= static_cast<double>(k);
  return std::sqrt(p);
}

struct JcmParams {
  double omega = 1.0;
  double omega0 = 1.0;
  double coupling = 1.0;
  std::size_t m = 1;
  std::size_t n_max = 10;

  JcmParams() = default;
  JcmParams(double w, double lambda_c, std::size_t photons, std::size_t nmax)
      : omega(w), omega0(static_cast<double>(photons) * w), coupling(lambda_c), m(photons), n_max(nmax) {
    validate();
  }

  void validate() const {
    if (m < 1) throw InvariantError("JcmParams: m must be >= 1");
    if (n_max < m) throw InvariantError("JcmParams: n_max must be >= m");
    if (std::abs(omega0 - static_cast<double>(m) * omega) > 1e-12 * std::max(1.0, std::abs(omega0))) {
      throw InvariantError("JcmParams: resonance w0 = m w required");
    }
    if (!std::isfinite(omega) || !std::isfinite(coupling)) throw InvariantError("JcmParams: non-finite parameter");
  }

  Index field_dim() const noexcept { return static_cast<Index>(n_max + 1); }
  Index dim() const noexcept { return 2 * field_dim(); }
  Index index(int atom, std::size_t n) const noexcept { return atom * field_dim() + static_cast<Index>(n); }
};

// Coherent-state amplitudes Q_n = e^{-|a|^2/2} a^n / sqrt(n!), n <= n_max.
class CoherentAmplitude {
 public:
  CoherentAmplitude(cplx alpha, std::size_t n_max, double adequacy = 1e-10) : alpha_(alpha) {
    q_.resize(n_max + 1);
    cplx term = std::exp(-0.5 * std::norm(alpha));
    double total = 0.0;
    for (std::size_t n = 0; n <= n_max; ++n) {
      if (n > 0) term *= alpha / std::sqrt(static_cast<double>(n));
      q_[n] = term;
      total += std::norm(term);
    }
    if (total < 1.0 - adequacy) {
      throw InvariantError("CoherentAmplitude: truncation n_max = " + std::to_string(n_max) +
                           " keeps weight " + std::to_string(total));
    }
  }

  cplx alpha() const noexcept { return alpha_; }
  const std::vector<cplx>& amplitudes() const noexcept { return q_; }
  std::size_t n_max() const noexcept { return q_.size() - 1; }

  // |Q_n|^2, zero outside [0, n_max].
  double weight(long n) const {
    if (n < 0 || static_cast<std::size_t>(n) >= q_.size()) return 0.0;
    return std::norm(q_[static_cast<std::size_t>(n)]);
  }

  std::vector<double> weights() const {
    std::vector<double> w;
    for (const auto& q : q_) w.push_back(std::norm(q));
    return w;
  }

 private:
  cplx alpha_;
  std::vector<cplx> q_;
};

// Smallest n with sum_{k<=n} |Q_k|^2 > 1 - 1e-10, plus m guard levels.
inline std::size_t default_truncation(double mean_photons, std::size_t m) {
  if (mean_photons < 0.0) throw InvariantError("default_truncation: mean photon number must be >= 0");
  double w = std::exp(-mean_photons), total = w;
  std::size_t n = 0;
  while (total <= 1.0 - 1e-10) {
    ++n;
    w *= mean_photons / static_cast<double>(n);
    total += w;
    if (n > 100000) throw NumericalError("default_truncation: did not converge");
  }
  return n + m;
}

// ---------------------------------------------------------------------------
// Operators

inline HermitianOperator sz(const JcmParams& p) {
  ComplexMatrix s = ComplexMatrix::Zero(p.dim(), p.dim());
  for (std::size_t n = 0; n <= p.n_max; ++n) {
    s(p.index(0, n), p.index(0, n)) = 0.5;
    s(p.index(1, n), p.index(1, n)) = -0.5;
  }
  return HermitianOperator(s);
}

inline HermitianOperator atom_ground_projector(const JcmParams& p) {
  ComplexMatrix s = ComplexMatrix::Zero(p.dim(), p.dim());
  for (std::size_t n = 0; n <= p.n_max; ++n) s(p.index(1, n), p.index(1, n)) = 1.0;
  return HermitianOperator(s);
}

inline HermitianOperator number_operator(const JcmParams& p) {
  ComplexMatrix s = ComplexMatrix::Zero(p.dim(), p.dim());
  for (std::size_t n = 0; n <= p.n_max; ++n) {
    s(p.index(0, n), p.index(0, n)) = static_cast<double>(n);
    s(p.index(1, n), p.index(1, n)) = static_cast<double>(n);
  }
  return HermitianOperator(s);
}

// N = a^dag a + m S_z
inline HermitianOperator excitation_number(const JcmParams& p) {
  return HermitianOperator(ComplexMatrix(number_operator(p).matrix() + static_cast<double>(p.m) * sz(p).matrix()));
}

// S_- a^dag^m + S_+ a^m
inline HermitianOperator interaction_hamiltonian(const JcmParams& p) {
  ComplexMatrix h = ComplexMatrix::Zero(p.dim(), p.dim());
  for (std::size_t k = 0; k + p.m <= p.n_max; ++k) {
    const double g = rabi_factor(k, p.m);
    h(p.index(0, k), p.index(1, k + p.m)) = g;
    h(p.index(1, k + p.m), p.index(0, k)) = g;
  }
  return HermitianOperator(h);
}

inline HermitianOperator build_hamiltonian(const JcmParams& p) {
  p.validate();
  ComplexMatrix h = p.omega * number_operator(p).matrix() + p.omega0 * sz(p).matrix() +
                    p.coupling * interaction_hamiltonian(p).matrix();
  return HermitianOperator(h);
}

// |+> (x) |alpha>, renormalized on the truncated space.
inline ComplexVector excited_coherent_state(const JcmParams& p, const CoherentAmplitude& q) {
  if (q.n_max() != p.n_max) throw DimensionError("excited_coherent_state: truncation mismatch");
  ComplexVector psi = ComplexVector::Zero(p.dim());
  for (std::size_t n = 0; n <= p.n_max; ++n) psi(p.index(0, n)) = q.amplitudes()[n];
  return psi / psi.norm();
}

// Diagonal of the field-reduced density matrix.
inline std::vector<double> photon_distribution(const JcmParams& p, const ComplexMatrix& rho) {
  std::vector<double> out(p.n_max + 1);
  for (std::size_t n = 0; n <= p.n_max; ++n)
    out[n] = rho(p.index(0, n), p.index(0, n)).real() + rho(p.index(1, n), p.index(1, n)).real();
  return out;
}

// ---------------------------------------------------------------------------
// Closed forms (atom initially excited, field coherent)

namespace detail {
inline void require_match(const JcmParams& p, const CoherentAmplitude& q) {
  if (q.n_max() != p.n_max) throw DimensionError("jcm: coherent truncation differs from n_max");
}
inline void require_level(const JcmParams& p, std::size_t n) {
  if (n > p.n_max) throw DimensionError("jcm: photon number exceeds n_max");
}
}  // namespace detail

inline double inversion_damped(const JcmParams& p, const CoherentAmplitude& q, double gamma, double t) {
  detail::require_match(p, q);
  if (gamma < 0.0) throw InvariantError("inversion_damped: gamma must be >= 0");
  const double l = p.coupling;
  double w = 0.0;
  for (std::size_t n = 0; n + p.m <= p.n_max; ++n) {
    const double r = rabi_factor(n, p.m);
    w += q.weight(static_cast<long>(n)) * std::exp(-2.0 * gamma * l * l * t * r * r) * std::cos(2.0 * l * t * r);
  }
  // Levels without a partner inside the truncation stay excited.
  for (std::size_t n = p.n_max + 1 - p.m; n <= p.n_max; ++n) w += q.weight(static_cast<long>(n));
  return w;
}

inline double inversion_unitary(const JcmParams& p, const CoherentAmplitude& q, double t) {
  return inversion_damped(p, q, 0.0, t);
}

// Envelope sum |Q_n|^2 exp(-2 gamma lambda^2 t (n+m)!/n!).
inline double inversion_envelope(const JcmParams& p, const CoherentAmplitude& q, double gamma, double t) {
  detail::require_match(p, q);
  double w = 0.0;
  for (std::size_t n = 0; n <= p.n_max; ++n) {
    const double r = n + p.m <= p.n_max ? rabi_factor(n, p.m) : 0.0;
    w += q.weight(static_cast<long>(n)) * std::exp(-2.0 * gamma * p.coupling * p.coupling * t * r * r);
  }
  return w;
}

// P_n^pd(t). The n-th level is shared by the doublets {|+,n>,|-,n+m>} and
// {|+,n-m>,|-,n>}; each contributes through E[cos^2] of its own Rabi phase.
inline double photon_distribution_damped(const JcmParams& p, const CoherentAmplitude& q, double gamma,
                                         std::size_t n, double t) {
  detail::require_match(p, q);
  detail::require_level(p, n);
  if (gamma < 0.0) throw InvariantError("photon_distribution_damped: gamma must be >= 0");
  const double l = p.coupling;
  double out = 0.0;
  if (n + p.m <= p.n_max) {
    const double r = rabi_factor(n, p.m);
    out += 0.5 * q.weight(static_cast<long>(n)) *
           (1.0 + std::exp(-2.0 * gamma * l * l * t * r * r) * std::cos(2.0 * l * t * r));
  } else {
    out += q.weight(static_cast<long>(n));
  }
  if (n >= p.m) {
    const double r = rabi_factor(n - p.m, p.m);
    out += 0.5 * q.weight(static_cast<long>(n - p.m)) *
           (1.0 - std::exp(-2.0 * gamma * l * l * t * r * r) * std::cos(2.0 * l * t * r));
  }
  return out;
}

inline double photon_distribution_unitary(const JcmParams& p, const CoherentAmplitude& q, std::size_t n, double t) {
  return photon_distribution_damped(p, q, 0.0, n, t);
}

// The P_n^pd expression exactly as printed: cos[...] outside the {1 +- e^{...}}
// braces and the (n+m)!/n! factor in both terms.
inline double photon_distribution_damped_printed(const JcmParams& p, const CoherentAmplitude& q, double gamma,
                                                 std::size_t n, double t) {
  detail::require_match(p, q);
  detail::require_level(p, n);
  const double l = p.coupling;
  const double r = rabi_factor(n, p.m);
  const double e = std::exp(-2.0 * gamma * l * l * t * r * r);
  const double c = std::cos(2.0 * l * t * r);
  const double qm = n >= p.m ? q.weight(static_cast<long>(n - p.m)) : 0.0;
  return 0.5 * q.weight(static_cast<long>(n)) * (1.0 + e) * c + 0.5 * qm * (1.0 - e) * c;
}

// ---------------------------------------------------------------------------
// Stochastic-coupling JCM (m = 1)

inline void require_weights(const std::vector<double>& w) {
  double total = 0.0;
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw InvariantError("jcm: weights must be finite and >= 0");
    total += x;
  }
  if (total > 1.0 + 1e-10) throw InvariantError("jcm: weights sum to more than 1");
}

// sum_n P_n sin^2(lambda t sqrt(n+1))
inline double p_eg_orthodox(const std::vector<double>& weights, double coupling, double t) {
  require_weights(weights);
  double out = 0.0;
  for (std::size_t n = 0; n < weights.size(); ++n) {
    const double s = std::sin(coupling * t * std::sqrt(static_cast<double>(n + 1)));
    out += weights[n] * s * s;
  }
  return out;
}

// (1/2)(1 - sum_n P_n e^{-2(n+1) gamma lambda t} cos(2 lambda t sqrt(n+1)))
inline double p_eg_stochastic_jcm(const std::vector<double>& weights, double coupling, double gamma, double t) {
  require_weights(weights);
  if (gamma < 0.0) throw InvariantError("p_eg_stochastic_jcm: gamma must be >= 0");
  double s = 0.0, total = 0.0;
  for (std::size_t n = 0; n < weights.size(); ++n) {
    const double k = static_cast<double>(n + 1);
    s += weights[n] * std::exp(-2.0 * k * gamma * coupling * t) * std::cos(2.0 * coupling * t * std::sqrt(k));
    total += weights[n];
  }
  // For normalized weights this is (1 - s)/2; unnormalized mass is left out.
  return 0.5 * (total - s);
}

// Kernel for the channel V = S_- a^dag + S_+ a under H = lambda (S_- a^dag + S_+ a)
// that yields the e^{-2(n+1) gamma lambda t} envelope.
inline NoiseKernel coupling_promotion_kernel(double gamma, double coupling) {
  if (gamma < 0.0) throw InvariantError("coupling_promotion_kernel: gamma must be >= 0");
  if (coupling < 0.0) throw InvariantError("coupling_promotion_kernel: coupling must be >= 0");
  return NoiseKernel::constant(std::sqrt(gamma * coupling));
}

// Phase-damped model: H, V = H with kernel sqrt(gamma) (time promotion t -> t + sqrt(gamma) B_t).
inline LindbladModel phase_damped_model(const JcmParams& p, double gamma) {
  if (gamma < 0.0) throw InvariantError("phase_damped_model: gamma must be >= 0");
  const HermitianOperator h = build_hamiltonian(p);
  return LindbladModel(h, {{h, NoiseKernel::constant(std::sqrt(gamma))}});
}

// Stochastic-coupling model in the interaction picture, m = 1.
inline LindbladModel stochastic_coupling_model(const JcmParams& p, double gamma) {
  if (p.m != 1) throw InvariantError("stochastic_coupling_model: defined for m = 1");
  const HermitianOperator hi = interaction_hamiltonian(p);
  return LindbladModel(hi.scaled(p.coupling), {{hi, coupling_promotion_kernel(gamma, p.coupling)}});
}

}  // namespace stochlind::jcm
