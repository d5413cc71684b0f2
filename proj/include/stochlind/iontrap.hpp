// iontrap.hpp: first blue sideband, H = eta Omega (S_+ a^dag + S_- a).
//
// Ordering is atom-major as in jcm.hpp: index = atom * (n_max + 1) + n with
// atom 0 = |+>, atom 1 = |->. Dressed doublets n = 1..n_max are
//   |e_n^+-> = (|-,n-1> +- |+,n>)/sqrt(2),  e_n^+- = +- eta Omega sqrt(n).
// |+,0> and the truncation edge |-,n_max> are uncoupled and share label 0.
// Label of (n, +) is 2n - 1 and of (n, -) is 2n.

#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <variant>
#include <vector>

#include "stochlind/core_ops.hpp"
#include "stochlind/ensemble.hpp"
#include "stochlind/intrinsic.hpp"
#include "stochlind/stochastic.hpp"

namespace stochlind::iontrap {

struct TrapParams {
  double eta = 0.202;
  double omega_rabi = 470.0;
  double omega_z = 0.0;   // documentation only on resonance
  double detuning = 0.0;
  std::size_t n_max = 1;

  TrapParams() = default;
  TrapParams(double lamb_dicke, double rabi, std::size_t nmax) : eta(lamb_dicke), omega_rabi(rabi), n_max(nmax) {
    validate();
  }

  void validate() const {
    if (!(eta > 0.0)) throw InvariantError("TrapParams: eta must be > 0");
    if (!(omega_rabi > 0.0)) throw InvariantError("TrapParams: Omega must be > 0");
    if (n_max < 1) throw InvariantError("TrapParams: n_max must be >= 1");
  }

  Index field_dim() const noexcept { return static_cast<Index>(n_max + 1); }
  Index dim() const noexcept { return 2 * field_dim(); }
  Index index(int atom, std::size_t n) const noexcept { return atom * field_dim() + static_cast<Index>(n); }
  double sideband_rabi(std::size_t n) const { return eta * omega_rabi * std::sqrt(static_cast<double>(n)); }
};

inline std::size_t label_of(std::size_t n, int sign) { return sign > 0 ? 2 * n - 1 : 2 * n; }

inline HermitianOperator blue_sideband_hamiltonian(const TrapParams& p) {
  p.validate();
  ComplexMatrix h = ComplexMatrix::Zero(p.dim(), p.dim());
  for (std::size_t n = 1; n <= p.n_max; ++n) {
    const double g = p.sideband_rabi(n);
    h(p.index(0, n), p.index(1, n - 1)) = g;
    h(p.index(1, n - 1), p.index(0, n)) = g;
  }
  return HermitianOperator(h);
}

struct DressedBasis {
  ComplexMatrix basis;
  std::vector<std::size_t> column_label;
  std::vector<double> energies;  // per label
};

inline DressedBasis dressed_basis(const TrapParams& p) {
  p.validate();
  DressedBasis d;
  const Index dim = p.dim();
  d.basis = ComplexMatrix::Zero(dim, dim);
  d.energies.assign(2 * p.n_max + 1, 0.0);
  Index c = 0;
  d.basis(p.index(0, 0), c++) = 1.0;
  d.column_label.push_back(0);
  d.basis(p.index(1, p.n_max), c++) = 1.0;
  d.column_label.push_back(0);
  const double r = 1.0 / std::sqrt(2.0);
  for (std::size_t n = 1; n <= p.n_max; ++n) {
    for (int s : {+1, -1}) {
      d.basis(p.index(1, n - 1), c) = r;
      d.basis(p.index(0, n), c) = s * r;
      d.column_label.push_back(label_of(n, s));
      d.energies[label_of(n, s)] = s * p.sideband_rabi(n);
      ++c;
    }
  }
  return d;
}

inline HermitianOperator atom_ground_projector(const TrapParams& p) {
  ComplexMatrix s = ComplexMatrix::Zero(p.dim(), p.dim());
  for (std::size_t n = 0; n <= p.n_max; ++n) s(p.index(1, n), p.index(1, n)) = 1.0;
  return HermitianOperator(s);
}

// ---------------------------------------------------------------------------
// Initial centre-of-mass states (internal state |->)

struct Fock {
  std::size_t n;
};
struct Thermal {
  double mean;
};
struct Coherent {
  cplx alpha;
};

class ComInitialState {
 public:
  using Variant = std::variant<Fock, Thermal, Coherent>;

  explicit ComInitialState(Variant v) : v_(v) {}
  static ComInitialState fock(std::size_t n) { return ComInitialState(Fock{n}); }
  static ComInitialState thermal(double mean) { return ComInitialState(Thermal{mean}); }
  static ComInitialState coherent(cplx alpha) { return ComInitialState(Coherent{alpha}); }

  const Variant& variant() const noexcept { return v_; }

  // P_n for n <= n_max; fails when the truncated mass is below 1 - 1e-10.
  std::vector<double> weights(std::size_t n_max) const {
    std::vector<double> w(n_max + 1, 0.0);
    if (const auto* f = std::get_if<Fock>(&v_)) {
      if (f->n > n_max) throw DimensionError("ComInitialState: Fock level beyond n_max");
      w[f->n] = 1.0;
    } else if (const auto* t = std::get_if<Thermal>(&v_)) {
      if (t->mean < 0.0) throw InvariantError("ComInitialState: thermal mean must be >= 0");
      const double q = t->mean / (1.0 + t->mean);
      double x = 1.0 / (1.0 + t->mean);
      for (std::size_t n = 0; n <= n_max; ++n, x *= q) w[n] = x;
    } else {
      const cplx a = std::get<Coherent>(v_).alpha;
      double x = std::exp(-std::norm(a));
      for (std::size_t n = 0; n <= n_max; ++n) {
        if (n > 0) x *= std::norm(a) / static_cast<double>(n);
        w[n] = x;
      }
    }
    double total = 0.0;
    for (double x : w) total += x;
    if (total < 1.0 - 1e-10) {
      throw InvariantError("ComInitialState: truncation n_max = " + std::to_string(n_max) + " keeps weight " +
                           std::to_string(total));
    }
    return w;
  }

  // Smallest n_max such that the weights pass and every populated |-,n> has its
  // doublet n + 1 inside the truncation.
  std::size_t minimal_truncation() const {
    if (const auto* f = std::get_if<Fock>(&v_)) return f->n + 1;
    for (std::size_t n = 1; n < 100000; ++n) {
      try {
        weights(n - 1);
        return n;
      } catch (const InvariantError&) {
      }
    }
    throw NumericalError("ComInitialState: no adequate truncation found");
  }

  DensityMatrix density(const TrapParams& p) const {
    const auto w = weights(p.n_max);
    ComplexMatrix rho = ComplexMatrix::Zero(p.dim(), p.dim());
    double total = 0.0;
    for (double x : w) total += x;
    for (std::size_t n = 0; n <= p.n_max; ++n) rho(p.index(1, n), p.index(1, n)) = w[n] / total;
    return DensityMatrix(rho);
  }

 private:
  Variant v_;
};

// ---------------------------------------------------------------------------
// Level-dependent noise

struct LevelNoiseSpec {
  double gamma_scale = 0.0;  // Gamma
  double exponent = 0.35;    // d
  std::optional<RealMatrix> correlation;  // over labels; default block-diagonal with g^{+-} = 1

  // v_n^+- = +- (1/2) Gamma^{1/2} n^d; the zero label carries no noise.
  std::vector<NoiseKernel> amplitudes(std::size_t n_max) const {
    if (gamma_scale < 0.0) throw InvariantError("LevelNoiseSpec: Gamma must be >= 0");
    std::vector<NoiseKernel> v(2 * n_max + 1, NoiseKernel::zero());
    for (std::size_t n = 1; n <= n_max; ++n) {
      const double a = 0.5 * std::sqrt(gamma_scale) * std::pow(static_cast<double>(n), exponent);
      v[label_of(n, +1)] = NoiseKernel::constant(a);
      v[label_of(n, -1)] = NoiseKernel::constant(-a);
    }
    return v;
  }

  CorrelationSpec correlation_spec(std::size_t n_max) const {
    const Index labels = static_cast<Index>(2 * n_max + 1);
    if (correlation) {
      const RealMatrix& g = *correlation;
      if (g.rows() != labels) throw DimensionError("LevelNoiseSpec: correlation size mismatch");
      for (std::size_t n = 1; n <= n_max; ++n) {
        const Index a = static_cast<Index>(label_of(n, +1)), b = static_cast<Index>(label_of(n, -1));
        if (std::abs(g(a, b) - g(b, a)) > 1e-12) throw InvariantError("LevelNoiseSpec: g^{+-} != g^{-+}");
      }
      return CorrelationSpec(g);
    }
    RealMatrix g = RealMatrix::Identity(labels, labels);
    for (std::size_t n = 1; n <= n_max; ++n) {
      const Index a = static_cast<Index>(label_of(n, +1)), b = static_cast<Index>(label_of(n, -1));
      g(a, b) = g(b, a) = 1.0;
    }
    return CorrelationSpec(g);
  }

  // Per-level decay rate of the P_- oscillation for initial |-,n>: Gamma (n+1)^{2d} / 2.
  double fock_decay_rate(std::size_t n) const {
    return 0.5 * gamma_scale * std::pow(static_cast<double>(n + 1), 2.0 * exponent);
  }
};

// Gamma = 2 gamma_0 and d = exponent/2, so Gamma (n+1)^{2d}/2 = gamma_0 (n+1)^exponent.
inline LevelNoiseSpec calibrated_noise(double gamma0, double exponent) {
  LevelNoiseSpec s;
  s.gamma_scale = 2.0 * gamma0;
  s.exponent = 0.5 * exponent;
  return s;
}

inline PromotedSpectrum promoted_spectrum(const TrapParams& p, const LevelNoiseSpec& noise) {
  DressedBasis d = dressed_basis(p);
  return PromotedSpectrum(std::move(d.basis), std::move(d.column_label), std::move(d.energies),
                          noise.amplitudes(p.n_max), noise.correlation_spec(p.n_max));
}

inline DensityMatrix promoted_density_matrix(const TrapParams& p, const DensityMatrix& rho0,
                                             const LevelNoiseSpec& noise, double t) {
  return promoted_spectrum(p, noise).closed_form(rho0, t);
}

// (1/2)(1 + e^{-Gamma t (n+1)^{2d}/2} cos(2 eta Omega t sqrt(n+1)))
inline double p_minus_fock(const TrapParams& p, std::size_t n, const LevelNoiseSpec& noise, double t) {
  if (n + 1 > p.n_max) throw DimensionError("p_minus_fock: n must be <= n_max - 1");
  return 0.5 * (1.0 + std::exp(-noise.fock_decay_rate(n) * t) * std::cos(2.0 * p.sideband_rabi(n + 1) * t));
}

inline double p_minus_distribution(const TrapParams& p, const ComInitialState& init, const LevelNoiseSpec& noise,
                                   double t) {
  const auto w = init.weights(p.n_max);
  double s = 0.0, total = 0.0;
  for (std::size_t n = 0; n < w.size(); ++n) {
    total += w[n];
    if (w[n] == 0.0) continue;
    if (n + 1 > p.n_max) {
      s += w[n];  // uncoupled edge level stays in |->
      continue;
    }
    s += w[n] * std::exp(-noise.fock_decay_rate(n) * t) * std::cos(2.0 * p.sideband_rabi(n + 1) * t);
  }
  return 0.5 * (total + s) / total;
}

inline EnsembleResult mc_promoted_evolution(const TrapParams& p, const DensityMatrix& rho0,
                                            const LevelNoiseSpec& noise, const EnsembleConfig& cfg) {
  return promoted_spectrum(p, noise).monte_carlo(rho0, cfg, {{"p_minus", atom_ground_projector(p)}});
}

// ---------------------------------------------------------------------------
// Decay-exponent fit

struct DecayFit {
  double exponent = 0.0;
  double scale = 0.0;
  double residual = 0.0;  // max relative residual of the fitted rates
};

// Least squares of log(rate) = log(scale) + exponent log(n + 1).
inline DecayFit fit_decay_exponent(const std::vector<std::pair<double, double>>& rates) {
  if (rates.size() < 3) throw InvariantError("fit_decay_exponent: at least 3 points required");
  Eigen::MatrixXd a(static_cast<Index>(rates.size()), 2);
  Eigen::VectorXd y(static_cast<Index>(rates.size()));
  for (std::size_t i = 0; i < rates.size(); ++i) {
    const auto [n, r] = rates[i];
    if (!(r > 0.0) || !std::isfinite(r)) throw InvariantError("fit_decay_exponent: rates must be > 0");
    if (!(n > -1.0)) throw InvariantError("fit_decay_exponent: n must be > -1");
    a(static_cast<Index>(i), 0) = 1.0;
    a(static_cast<Index>(i), 1) = std::log(n + 1.0);
    y(static_cast<Index>(i)) = std::log(r);
  }
  const Eigen::Vector2d c = a.colPivHouseholderQr().solve(y);
  DecayFit f;
  f.scale = std::exp(c(0));
  f.exponent = c(1);
  for (std::size_t i = 0; i < rates.size(); ++i) {
    const double model = f.scale * std::pow(rates[i].first + 1.0, f.exponent);
    f.residual = std::max(f.residual, std::abs(model - rates[i].second) / rates[i].second);
  }
  return f;
}

struct EnvelopeRate {
  std::size_t n = 0;
  double rate = 0.0;
  double rate_stderr = 0.0;
  std::size_t points = 0;
};

// Monte Carlo decay rate of the P_- oscillation for initial |-,n>. The grid is
// laid out so that records fall on the oscillation maxima t_k = k pi / (eta Omega sqrt(n+1)),
// where the envelope is 2 P_- - 1.
inline EnvelopeRate mc_envelope_rate(const TrapParams& base, std::size_t n, const LevelNoiseSpec& noise,
                                     double t_window, std::size_t substeps, EnsembleConfig cfg) {
  TrapParams p = base;
  p.n_max = n + 1;
  p.validate();
  const double period = std::numbers::pi / p.sideband_rabi(n + 1);
  const std::size_t peaks = std::max<std::size_t>(3, static_cast<std::size_t>(std::floor(t_window / period)));
  cfg.grid = TimeGrid(period * static_cast<double>(peaks), peaks * substeps);
  cfg.record_every = substeps;
  const auto res = mc_promoted_evolution(p, ComInitialState::fock(n).density(p), noise, cfg);
  const auto& s = res.observables.at("p_minus");
  EnvelopeRate out;
  out.n = n;

  // log(env) = -rate t through the origin over the points with t <= t_cut.
  auto fit = [&](double t_cut, double floor) {
    double sxx = 0.0, sxy = 0.0, var = 0.0;
    std::size_t used = 0;
    for (std::size_t k = 1; k < res.times.size(); ++k) {
      const double t = res.times[k];
      const double env = 2.0 * s.mean[k] - 1.0;
      const double se = 2.0 * s.stderr_[k];
      if (t > t_cut) break;
      if (!(env > floor) || !(env > 10.0 * se)) break;
      sxx += t * t;
      sxy += t * std::log(env);
      var += t * t * (se / env) * (se / env);
      ++used;
    }
    if (used < 1) throw NumericalError("mc_envelope_rate: no resolved envelope points");
    out.rate = -sxy / sxx;
    out.rate_stderr = std::sqrt(var) / sxx;
    out.points = used;
  };
  // Pilot estimate from the leading points, then a window fixed in time
  // (about two decay constants) so that the selection does not follow the noise.
  fit(res.times.back(), 0.3);
  fit(2.0 / out.rate, 0.0);
  return out;
}

}  // namespace stochlind::iontrap
