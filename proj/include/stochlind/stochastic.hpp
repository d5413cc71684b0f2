// stochastic.hpp: deterministic noise kernels v(t), reproducible Brownian
// increment streams, left-point Ito integrals and Gaussian phase identities.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stochlind/core_ops.hpp"

namespace stochlind {

// ---------------------------------------------------------------------------
// Time grid

struct TimeGrid {
  double t_end = 1.0;
  std::size_t n_steps = 1;

  TimeGrid() = default;
  TimeGrid(double end, std::size_t steps) : t_end(end), n_steps(steps) {
    if (!(end > 0.0) || !std::isfinite(end)) throw InvariantError("TimeGrid: t_end must be > 0");
    if (steps < 1) throw InvariantError("TimeGrid: n_steps must be >= 1");
  }

  double dt() const noexcept { return t_end / static_cast<double>(n_steps); }
  double time(std::size_t k) const noexcept {
    return t_end * static_cast<double>(k) / static_cast<double>(n_steps);
  }
};

// ---------------------------------------------------------------------------
// NoiseKernel: v(t) with accumulated lambda(t) = int_0^t v(s)^2 ds.

class NoiseKernel {
 public:
  enum class Form { constant, power_law, tabulated };

  NoiseKernel() = default;

  static NoiseKernel constant(double c) {
    if (!std::isfinite(c)) throw InvariantError("NoiseKernel: non-finite constant");
    NoiseKernel k;
    k.form_ = Form::constant;
    k.coef_ = c;
    return k;
  }

  static NoiseKernel zero() { return constant(0.0); }

  // c * t^p, p >= 0 so that v is finite on [0, T].
  static NoiseKernel power_law(double c, double p) {
    if (!std::isfinite(c) || !std::isfinite(p)) throw InvariantError("NoiseKernel: non-finite power law");
    if (p < 0.0) throw InvariantError("NoiseKernel: power-law exponent must be >= 0");
    NoiseKernel k;
    k.form_ = p == 0.0 ? Form::constant : Form::power_law;
    k.coef_ = c;
    k.exponent_ = p;
    return k;
  }

  // Linear interpolation on a strictly increasing grid that starts at or before 0.
  static NoiseKernel tabulated(std::vector<double> ts, std::vector<double> vs) {
    if (ts.size() != vs.size() || ts.size() < 2) {
      throw InvariantError("NoiseKernel: tabulated kernel needs >= 2 matching points");
    }
    for (std::size_t i = 0; i < ts.size(); ++i) {
      if (!std::isfinite(ts[i]) || !std::isfinite(vs[i])) throw InvariantError("NoiseKernel: non-finite table");
      if (i > 0 && !(ts[i] > ts[i - 1])) throw InvariantError("NoiseKernel: table times not strictly increasing");
    }
    if (ts.front() > 0.0) throw InvariantError("NoiseKernel: table must cover t = 0");
    NoiseKernel k;
    k.form_ = Form::tabulated;
    k.ts_ = std::move(ts);
    k.vs_ = std::move(vs);
    return k;
  }

  // s * v(t), same form.
  NoiseKernel scaled(double s) const {
    NoiseKernel k = *this;
    k.coef_ *= s;
    for (double& v : k.vs_) v *= s;
    return k;
  }

  Form form() const noexcept { return form_; }
  bool is_constant() const noexcept { return form_ == Form::constant; }
  double coefficient() const noexcept { return coef_; }
  double exponent() const noexcept { return exponent_; }
  bool is_zero() const noexcept { return form_ != Form::tabulated && coef_ == 0.0; }

  double window_end() const noexcept {
    return form_ == Form::tabulated ? ts_.back() : std::numeric_limits<double>::infinity();
  }

  void require_window(double t) const {
    if (t < 0.0 || t > window_end() * (1.0 + 1e-12)) {
      throw InvariantError("NoiseKernel: t = " + std::to_string(t) + " outside the kernel window");
    }
  }

  double operator()(double t) const {
    switch (form_) {
      case Form::constant:
        return coef_;
      case Form::power_law:
        return coef_ * std::pow(std::max(t, 0.0), exponent_);
      case Form::tabulated:
        break;
    }
    require_window(t);
    return interpolate(std::min(t, ts_.back()));
  }

  // int_0^t v(s)^2 ds; exact for analytic forms, trapezoidal on v^2 for tables.
  double lambda(double t) const {
    if (t < 0.0) throw InvariantError("NoiseKernel::lambda: t must be >= 0");
    switch (form_) {
      case Form::constant:
        return coef_ * coef_ * t;
      case Form::power_law: {
        const double q = 2.0 * exponent_ + 1.0;
        return coef_ * coef_ * std::pow(t, q) / q;
      }
      case Form::tabulated:
        break;
    }
    require_window(t);
    t = std::min(t, ts_.back());
    double acc = 0.0;
    double prev_t = 0.0;
    double prev_v = interpolate(0.0);
    for (std::size_t i = 0; i < ts_.size() && prev_t < t; ++i) {
      if (ts_[i] <= 0.0) continue;
      const double next_t = std::min(ts_[i], t);
      const double next_v = interpolate(next_t);
      acc += 0.5 * (prev_v * prev_v + next_v * next_v) * (next_t - prev_t);
      prev_t = next_t;
      prev_v = next_v;
    }
    return acc;
  }

 private:
  double interpolate(double t) const {
    auto it = std::upper_bound(ts_.begin(), ts_.end(), t);
    if (it == ts_.begin()) return vs_.front();
    if (it == ts_.end()) return vs_.back();
    const std::size_t i = static_cast<std::size_t>(it - ts_.begin());
    const double w = (t - ts_[i - 1]) / (ts_[i] - ts_[i - 1]);
    return (1.0 - w) * vs_[i - 1] + w * vs_[i];
  }

  Form form_ = Form::constant;
  double coef_ = 0.0;
  double exponent_ = 0.0;
  std::vector<double> ts_;
  std::vector<double> vs_;
};

inline double lambda_of_t(const NoiseKernel& v, double t) { return v.lambda(t); }

// int_0^t a(s) b(s) ds. Closed form for constant / power-law pairs,
// composite Simpson otherwise.
inline double cross_integral(const NoiseKernel& a, const NoiseKernel& b, double t) {
  if (t < 0.0) throw InvariantError("cross_integral: t must be >= 0");
  if (t == 0.0) return 0.0;
  if (a.form() != NoiseKernel::Form::tabulated && b.form() != NoiseKernel::Form::tabulated) {
    const double q = a.exponent() + b.exponent() + 1.0;
    return a.coefficient() * b.coefficient() * std::pow(t, q) / q;
  }
  constexpr int panels = 4096;
  const double h = t / panels;
  double acc = a(0.0) * b(0.0) + a(t) * b(t);
  for (int i = 1; i < panels; ++i) {
    const double s = h * i;
    acc += (i % 2 ? 4.0 : 2.0) * a(s) * b(s);
  }
  return acc * h / 3.0;
}

// ---------------------------------------------------------------------------
// Counter-based stream seeding

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t trajectory,
                                 std::uint64_t channel) noexcept {
  std::uint64_t h = splitmix64(master);
  h = splitmix64(h ^ splitmix64(trajectory + 0x632be59bd9b4e019ULL));
  h = splitmix64(h ^ splitmix64(channel + 0x8cb92ba72f3d8dd7ULL));
  return h;
}

// Gaussian increments of variance dt for one (seed, trajectory, channel).
// With refinement r, each increment is the sum of r draws of variance dt/r,
// so grids refined by r share the same Brownian path.
class GaussianIncrements {
 public:
  GaussianIncrements(std::uint64_t master_seed, std::uint64_t trajectory, std::uint64_t channel,
                     double dt, std::size_t refinement = 1)
      : engine_(stream_seed(master_seed, trajectory, channel)),
        refinement_(refinement == 0 ? 1 : refinement),
        scale_(std::sqrt(dt / static_cast<double>(refinement == 0 ? 1 : refinement))) {}

  double next() {
    double acc = 0.0;
    for (std::size_t i = 0; i < refinement_; ++i) acc += normal_(engine_);
    return scale_ * acc;
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::size_t refinement_;
  double scale_;
};

struct BrownianIncrementStream {
  std::uint64_t master_seed = 0;
  std::uint64_t trajectory_index = 0;
  std::uint64_t channel_index = 0;
  TimeGrid grid;
};

inline std::vector<double> sample_increments(const BrownianIncrementStream& s,
                                             std::size_t refinement = 1) {
  GaussianIncrements gen(s.master_seed, s.trajectory_index, s.channel_index, s.grid.dt(), refinement);
  std::vector<double> out(s.grid.n_steps);
  for (double& x : out) x = gen.next();
  return out;
}

// X(t_k) = sum_{j<k} v(t_j) dB_j, X(0) = 0; n_steps + 1 values.
inline std::vector<double> ito_integral_path(const NoiseKernel& v, const BrownianIncrementStream& s) {
  v.require_window(s.grid.t_end);
  const auto db = sample_increments(s);
  std::vector<double> x(s.grid.n_steps + 1, 0.0);
  for (std::size_t k = 0; k < s.grid.n_steps; ++k) x[k + 1] = x[k] + v(s.grid.time(k)) * db[k];
  return x;
}

// ---------------------------------------------------------------------------
// Gaussian moment and phase identities for X_t = int_0^t v dB.

inline double theoretical_moment(const NoiseKernel& v, int n, double t) {
  if (n < 0) throw InvariantError("theoretical_moment: order must be >= 0");
  if (n % 2 == 1) return 0.0;
  const double lam = v.lambda(t);
  // (2k)!/(2^k k!) = (2k-1)!!
  double dfact = 1.0;
  for (int j = n - 1; j > 1; j -= 2) dfact *= j;
  return dfact * std::pow(lam, n / 2);
}

// E[cos(b + X)] with Var X = lambda.
inline double expected_cos(double b, double lambda) {
  if (lambda < 0.0) throw InvariantError("expected_cos: lambda must be >= 0");
  return std::exp(-0.5 * lambda) * std::cos(b);
}

// E[cos^2(b + X)] = (1 + E[cos(2b + 2X)])/2, and Var(2X) = 4 lambda.
inline double expected_cos_squared(double b, double lambda) {
  if (lambda < 0.0) throw InvariantError("expected_cos_squared: lambda must be >= 0");
  return 0.5 * (1.0 + std::exp(-2.0 * lambda) * std::cos(2.0 * b));
}

// ---------------------------------------------------------------------------
// CorrelationSpec: dB_a dB_b = g_ab dt.

// Sparse linear map from independent channels to correlated labels:
// dB_label = sum over rows[label] of weight * dW_channel.
struct CorrelationFactor {
  struct Entry {
    std::size_t channel;
    double weight;
  };
  std::vector<std::vector<Entry>> rows;
  std::size_t channels = 0;

  RealMatrix dense() const {
    RealMatrix l = RealMatrix::Zero(static_cast<Index>(rows.size()), static_cast<Index>(channels));
    for (std::size_t a = 0; a < rows.size(); ++a)
      for (const auto& e : rows[a]) l(static_cast<Index>(a), static_cast<Index>(e.channel)) = e.weight;
    return l;
  }
};

class CorrelationSpec {
 public:
  explicit CorrelationSpec(RealMatrix g, double psd_floor = -1e-10) : g_(std::move(g)) {
    if (g_.rows() != g_.cols() || g_.rows() == 0) throw InvariantError("CorrelationSpec: g must be square");
    if (!g_.allFinite()) throw InvariantError("CorrelationSpec: non-finite entries");
    if (max_abs(RealMatrix(g_ - g_.transpose())) > 1e-12) throw InvariantError("CorrelationSpec: g not symmetric");
    for (Index a = 0; a < g_.rows(); ++a) {
      if (std::abs(g_(a, a) - 1.0) > 1e-12) throw InvariantError("CorrelationSpec: diagonal must be 1");
      for (Index b = 0; b < g_.cols(); ++b)
        if (std::abs(g_(a, b)) > 1.0 + 1e-12) throw InvariantError("CorrelationSpec: |g_ab| > 1");
    }
    Eigen::SelfAdjointEigenSolver<RealMatrix> es(g_, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() < psd_floor) {
      throw InvariantError("CorrelationSpec: g is not positive semidefinite");
    }
  }

  static CorrelationSpec identity(Index n) { return CorrelationSpec(RealMatrix::Identity(n, n)); }

  const RealMatrix& matrix() const noexcept { return g_; }
  Index size() const noexcept { return g_.rows(); }

  // Factor g = L L^T per connected block: Cholesky when positive definite,
  // otherwise a floored eigen square root (rank-deficient blocks).
  CorrelationFactor factor() const {
    const Index n = g_.rows();
    std::vector<int> comp(static_cast<std::size_t>(n), -1);
    std::vector<std::vector<Index>> blocks;
    for (Index s = 0; s < n; ++s) {
      if (comp[static_cast<std::size_t>(s)] >= 0) continue;
      blocks.push_back({});
      std::queue<Index> q;
      q.push(s);
      comp[static_cast<std::size_t>(s)] = static_cast<int>(blocks.size() - 1);
      while (!q.empty()) {
        const Index a = q.front();
        q.pop();
        blocks.back().push_back(a);
        for (Index b = 0; b < n; ++b) {
          if (g_(a, b) != 0.0 && comp[static_cast<std::size_t>(b)] < 0) {
            comp[static_cast<std::size_t>(b)] = static_cast<int>(blocks.size() - 1);
            q.push(b);
          }
        }
      }
      std::sort(blocks.back().begin(), blocks.back().end());
    }

    CorrelationFactor f;
    f.rows.resize(static_cast<std::size_t>(n));
    for (const auto& members : blocks) {
      const Index m = static_cast<Index>(members.size());
      RealMatrix sub(m, m);
      for (Index i = 0; i < m; ++i)
        for (Index j = 0; j < m; ++j) sub(i, j) = g_(members[static_cast<std::size_t>(i)], members[static_cast<std::size_t>(j)]);
      RealMatrix l;
      Eigen::LLT<RealMatrix> llt(sub);
      bool ok = llt.info() == Eigen::Success;
      if (ok) {
        l = llt.matrixL();
        ok = l.allFinite() && l.diagonal().minCoeff() > 1e-7;
      }
      if (!ok) {
        Eigen::SelfAdjointEigenSolver<RealMatrix> es(sub);
        const double top = std::max(es.eigenvalues().maxCoeff(), 1.0);
        std::vector<Index> keep;
        for (Index k = 0; k < m; ++k)
          if (es.eigenvalues()(k) > 1e-12 * top) keep.push_back(k);
        l.resize(m, static_cast<Index>(keep.size()));
        for (std::size_t c = 0; c < keep.size(); ++c)
          l.col(static_cast<Index>(c)) = es.eigenvectors().col(keep[c]) * std::sqrt(es.eigenvalues()(keep[c]));
      }
      for (Index i = 0; i < m; ++i) {
        for (Index c = 0; c < l.cols(); ++c) {
          if (l(i, c) != 0.0) {
            f.rows[static_cast<std::size_t>(members[static_cast<std::size_t>(i)])].push_back(
                {f.channels + static_cast<std::size_t>(c), l(i, c)});
          }
        }
      }
      f.channels += static_cast<std::size_t>(l.cols());
    }
    return f;
  }

 private:
  RealMatrix g_;
};

}  // namespace stochlind
