// ensemble.hpp: Lindblad flows as averages over random unitary trajectories.
//
// Commuting models (H and every V_i share an eigenbasis) are sampled exactly
// as U(t) = exp(-i t H - i sum_i X_i(t) V_i). General models use one
// Lie-Trotter step per grid interval,
//   U(t_{k+1}) = exp(-i H dt) exp(-i sum_i v_i(t_k) dB_i V_i) U(t_k),
// whose factors are each exactly unitary.
//
// Sample means are reproducible independent of the worker count: trajectories
// are grouped in fixed-size chunks, each chunk is accumulated in index order,
// and chunk moments are merged along a fixed pairwise tree.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "stochlind/core_ops.hpp"
#include "stochlind/lindblad.hpp"
#include "stochlind/stochastic.hpp"

namespace stochlind {

struct EnsembleConfig {
  std::size_t n_traj = 1;
  std::uint64_t master_seed = 0;
  TimeGrid grid;
  std::size_t record_every = 1;
  std::size_t noise_refinement = 1;  // draw noise on a grid this many times finer
  std::size_t workers = 1;
  std::size_t chunk_size = 64;
  bool state_stderr = true;          // per-entry standard errors of the mean state
  bool keep_states = true;           // false: observables only, mean_states left empty

  void validate() const {
    if (n_traj < 1) throw InvariantError("EnsembleConfig: n_traj must be >= 1");
    if (chunk_size < 1) throw InvariantError("EnsembleConfig: chunk_size must be >= 1");
  }

  // Grid indices stored in the result: every record_every-th point plus the last.
  std::vector<std::size_t> record_steps() const {
    const std::size_t every = record_every == 0 ? 1 : record_every;
    std::vector<std::size_t> steps;
    for (std::size_t k = 0; k <= grid.n_steps; k += every) steps.push_back(k);
    if (steps.back() != grid.n_steps) steps.push_back(grid.n_steps);
    return steps;
  }
};

struct ObservableSeries {
  std::vector<double> mean;
  std::vector<double> stderr_;
};

struct EnsembleResult {
  std::size_t n_traj = 0;
  std::vector<double> times;
  std::vector<DensityMatrix> mean_states;
  std::vector<RealMatrix> state_stderr;  // empty unless requested
  std::map<std::string, ObservableSeries> observables;
};

namespace detail {

// Running first and second moments (Welford / Chan) for complex payload
// entries and real observables.
struct MomentBlock {
  std::size_t count = 0;
  std::vector<cplx> mean;
  std::vector<double> m2_re, m2_im;
  std::vector<double> obs_mean, obs_m2;

  MomentBlock() = default;
  MomentBlock(std::size_t payload, std::size_t obs, bool second_moments)
      : mean(payload, cplx{0.0, 0.0}), obs_mean(obs, 0.0), obs_m2(obs, 0.0) {
    if (second_moments) {
      m2_re.assign(payload, 0.0);
      m2_im.assign(payload, 0.0);
    }
  }

  void add(std::span<const cplx> x, std::span<const double> y) {
    ++count;
    const double inv = 1.0 / static_cast<double>(count);
    const bool second = !m2_re.empty();
    for (std::size_t i = 0; i < mean.size(); ++i) {
      const cplx d = x[i] - mean[i];
      mean[i] += d * inv;
      if (second) {
        m2_re[i] += d.real() * (x[i].real() - mean[i].real());
        m2_im[i] += d.imag() * (x[i].imag() - mean[i].imag());
      }
    }
    for (std::size_t i = 0; i < obs_mean.size(); ++i) {
      const double d = y[i] - obs_mean[i];
      obs_mean[i] += d * inv;
      obs_m2[i] += d * (y[i] - obs_mean[i]);
    }
  }

  void merge(const MomentBlock& o) {
    if (o.count == 0) return;
    if (count == 0) {
      *this = o;
      return;
    }
    const double na = static_cast<double>(count), nb = static_cast<double>(o.count);
    const double n = na + nb;
    const double wb = nb / n, cross = na * nb / n;
    const bool second = !m2_re.empty();
    for (std::size_t i = 0; i < mean.size(); ++i) {
      const cplx d = o.mean[i] - mean[i];
      mean[i] += d * wb;
      if (second) {
        m2_re[i] += o.m2_re[i] + d.real() * d.real() * cross;
        m2_im[i] += o.m2_im[i] + d.imag() * d.imag() * cross;
      }
    }
    for (std::size_t i = 0; i < obs_mean.size(); ++i) {
      const double d = o.obs_mean[i] - obs_mean[i];
      obs_mean[i] += d * wb;
      obs_m2[i] += o.obs_m2[i] + d * d * cross;
    }
    count += o.count;
  }

  double obs_stderr(std::size_t i) const {
    if (count < 2) return 0.0;
    const double n = static_cast<double>(count);
    return std::sqrt(std::max(obs_m2[i], 0.0) / (n - 1.0) / n);
  }

  double payload_stderr(std::size_t i) const {
    if (count < 2 || m2_re.empty()) return 0.0;
    const double n = static_cast<double>(count);
    return std::sqrt(std::max(m2_re[i] + m2_im[i], 0.0) / (n - 1.0) / n);
  }
};

// Binary-counter pairwise reduction over blocks pushed in index order.
class PairwiseReducer {
 public:
  void push(MomentBlock b) {
    std::size_t level = 0;
    while (!stack_.empty() && stack_.back().first == level) {
      MomentBlock left = std::move(stack_.back().second);
      stack_.pop_back();
      left.merge(b);
      b = std::move(left);
      ++level;
    }
    stack_.emplace_back(level, std::move(b));
  }

  MomentBlock finish() {
    if (stack_.empty()) return {};
    MomentBlock acc = std::move(stack_.back().second);
    stack_.pop_back();
    while (!stack_.empty()) {
      MomentBlock left = std::move(stack_.back().second);
      stack_.pop_back();
      left.merge(acc);
      acc = std::move(left);
    }
    return acc;
  }

 private:
  std::vector<std::pair<std::size_t, MomentBlock>> stack_;
};

}  // namespace detail

// Runs `fill(trajectory, payload, observables)` for every trajectory and
// returns the merged moments. `fill` must be safe to call concurrently.
template <class Fill>
detail::MomentBlock run_trajectories(std::size_t n_traj, std::size_t payload_size, std::size_t n_obs,
                                     const EnsembleConfig& cfg, bool second_moments, Fill&& fill) {
  cfg.validate();
  const std::size_t chunk = cfg.chunk_size;
  const std::size_t n_chunks = (n_traj + chunk - 1) / chunk;
  const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.workers, n_chunks));

  auto run_chunk = [&](std::size_t c) {
    detail::MomentBlock block(payload_size, n_obs, second_moments);
    std::vector<cplx> payload(payload_size);
    std::vector<double> obs(n_obs);
    const std::size_t end = std::min(n_traj, (c + 1) * chunk);
    for (std::size_t t = c * chunk; t < end; ++t) {
      fill(t, std::span<cplx>(payload), std::span<double>(obs));
      block.add(payload, obs);
    }
    return block;
  };

  detail::PairwiseReducer reducer;
  if (workers == 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) reducer.push(run_chunk(c));
    return reducer.finish();
  }
  for (std::size_t first = 0; first < n_chunks; first += workers) {
    const std::size_t wave = std::min(workers, n_chunks - first);
    std::vector<detail::MomentBlock> results(wave);
    std::vector<std::exception_ptr> errors(wave);
    std::vector<std::thread> pool;
    pool.reserve(wave);
    for (std::size_t w = 0; w < wave; ++w) {
      pool.emplace_back([&, w] {
        try {
          results[w] = run_chunk(first + w);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    for (auto& r : results) reducer.push(std::move(r));
  }
  return reducer.finish();
}

// Converts merged moments of per-record vectorized states (column-stacked,
// dim^2 entries per record) into an EnsembleResult.
inline EnsembleResult assemble_state_result(const detail::MomentBlock& m, Index dim,
                                            const std::vector<double>& times,
                                            const std::vector<std::string>& obs_names,
                                            const Tolerances& tol = {}) {
  EnsembleResult r;
  r.n_traj = m.count;
  r.times = times;
  const std::size_t per = static_cast<std::size_t>(dim * dim);
  for (std::size_t k = 0; k < times.size() && !m.mean.empty(); ++k) {
    ComplexMatrix rho(dim, dim);
    RealMatrix se(dim, dim);
    for (std::size_t i = 0; i < per; ++i) {
      rho.data()[i] = m.mean[k * per + i];
      se.data()[i] = m.payload_stderr(k * per + i);
    }
    try {
      r.mean_states.emplace_back(rho, tol);
    } catch (const InvariantError& e) {
      throw NumericalError(std::string("ensemble mean left the density-matrix set: ") + e.what(), k);
    }
    if (!m.m2_re.empty()) r.state_stderr.push_back(std::move(se));
  }
  for (std::size_t i = 0; i < obs_names.size(); ++i) {
    auto& s = r.observables[obs_names[i]];
    for (std::size_t k = 0; k < times.size(); ++k) {
      const std::size_t j = k * obs_names.size() + i;
      s.mean.push_back(m.obs_mean[j]);
      s.stderr_.push_back(m.obs_stderr(j));
    }
  }
  return r;
}

inline std::vector<double> record_times(const EnsembleConfig& cfg) {
  std::vector<double> t;
  for (std::size_t k : cfg.record_steps()) t.push_back(cfg.grid.time(k));
  return t;
}

inline std::vector<std::string> observable_names(const std::vector<Observable>& obs) {
  std::vector<std::string> n;
  for (const auto& o : obs) n.push_back(o.name);
  return n;
}

// ---------------------------------------------------------------------------
// Random unitary model

class RandomUnitaryModel {
 public:
  RandomUnitaryModel(HermitianOperator h, std::vector<DephasingChannel> channels)
      : h_(std::move(h)), channels_(std::move(channels)) {
    for (const auto& c : channels_)
      if (c.op.dim() != h_.dim()) throw DimensionError("RandomUnitaryModel: dimension mismatch");
    commuting_ = true;
    for (std::size_t i = 0; i < channels_.size() && commuting_; ++i) {
      if (max_abs(commutator(h_.matrix(), channels_[i].op.matrix())) >= 1e-10) commuting_ = false;
      for (std::size_t j = i + 1; j < channels_.size() && commuting_; ++j)
        if (max_abs(commutator(channels_[i].op.matrix(), channels_[j].op.matrix())) >= 1e-10) commuting_ = false;
    }
  }

  explicit RandomUnitaryModel(const LindbladModel& m) : RandomUnitaryModel(m.hamiltonian(), m.channels()) {}

  const HermitianOperator& hamiltonian() const noexcept { return h_; }
  const std::vector<DephasingChannel>& channels() const noexcept { return channels_; }
  bool commuting() const noexcept { return commuting_; }
  Index dim() const noexcept { return h_.dim(); }

  LindbladModel lindblad() const { return LindbladModel(h_, channels_); }

 private:
  HermitianOperator h_;
  std::vector<DephasingChannel> channels_;
  bool commuting_ = true;
};

// Orthonormal basis diagonalizing every operator in `ops` (which must commute).
inline ComplexMatrix shared_eigenbasis(const std::vector<const ComplexMatrix*>& ops, Index dim) {
  ComplexMatrix combo = ComplexMatrix::Zero(dim, dim);
  // Generic weights; a coincidence that hides a non-diagonal block is caught below.
  double w = 1.0;
  for (const ComplexMatrix* op : ops) {
    const double s = max_abs(*op);
    if (s > 0.0) combo += (w / s) * (*op);
    w = std::fmod(w * 1.6180339887498949 + 0.3183098861837907, 1.0) + 0.5;
  }
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(combo);
  if (es.info() != Eigen::Success) throw NumericalError("shared_eigenbasis: eigen-solver failed");
  ComplexMatrix basis = es.eigenvectors();
  for (const ComplexMatrix* op : ops) {
    ComplexMatrix d = basis.adjoint() * (*op) * basis;
    d.diagonal().setZero();
    if (max_abs(d) > 1e-8 * std::max(1.0, max_abs(*op))) {
      throw NumericalError("shared_eigenbasis: operators are not simultaneously diagonal");
    }
  }
  return basis;
}

// ---------------------------------------------------------------------------
// Spectral phase engine: U(t) = sum_c exp(-i phi_c(t)) |w_c><w_c| with
//   phi_c(t_k) = E_c t_k + sum_{j<k} sum_terms weight * nu_ch(t_j) * kappa_c(t_j) * dW_ch,j.

struct PhaseTerm {
  Index column;
  std::size_t channel;
  double weight;
};

class SpectralPhaseEngine {
 public:
  ComplexMatrix basis;                       // eigenvectors as columns
  Eigen::VectorXd energies;                  // per column
  std::vector<NoiseKernel> channel_kernels;  // per independent channel
  std::vector<NoiseKernel> column_kernels;   // optional per-column amplitude (empty: 1)
  std::vector<PhaseTerm> terms;

  Index dim() const noexcept { return basis.rows(); }

  // Phases at each grid point 0..n_steps for one trajectory.
  std::vector<Eigen::VectorXd> phases(std::uint64_t seed, std::uint64_t traj, const TimeGrid& grid,
                                      std::size_t refinement = 1) const {
    std::vector<Eigen::VectorXd> out;
    walk(seed, traj, grid, refinement, [&](std::size_t, const Eigen::VectorXd& phi) { out.push_back(phi); });
    return out;
  }

  std::vector<ComplexMatrix> unitaries(std::uint64_t seed, std::uint64_t traj, const TimeGrid& grid,
                                       std::size_t refinement = 1) const {
    std::vector<ComplexMatrix> out;
    walk(seed, traj, grid, refinement, [&](std::size_t, const Eigen::VectorXd& phi) {
      ComplexVector z(phi.size());
      for (Index c = 0; c < phi.size(); ++c) z(c) = std::polar(1.0, -phi(c));
      out.push_back(basis * z.asDiagonal() * basis.adjoint());
    });
    return out;
  }

  EnsembleResult run(const DensityMatrix& rho0, const EnsembleConfig& cfg,
                     const std::vector<Observable>& observables, const Tolerances& tol = {}) const {
    cfg.validate();
    const Index n = dim();
    if (rho0.dim() != n) throw DimensionError("SpectralPhaseEngine: rho0 dimension mismatch");
    const ComplexMatrix d0 = basis.adjoint() * rho0.matrix() * basis;
    std::vector<std::pair<Index, Index>> pattern;
    for (Index b = 0; b < n; ++b)
      for (Index a = 0; a < n; ++a)
        if (d0(a, b) != cplx{0.0, 0.0}) pattern.emplace_back(a, b);

    // Observable weights over the pattern: Tr[rho O] = sum_ab D_ab Otilde_ba.
    std::vector<std::vector<cplx>> ow;
    for (const auto& o : observables) {
      if (o.op.dim() != n) throw DimensionError("SpectralPhaseEngine: observable dimension mismatch");
      const ComplexMatrix ot = basis.adjoint() * o.op.matrix() * basis;
      std::vector<cplx> w;
      for (auto [a, b] : pattern) w.push_back(d0(a, b) * ot(b, a));
      ow.push_back(std::move(w));
    }

    const auto steps = cfg.record_steps();
    const std::size_t records = steps.size();
    const bool original_basis = cfg.state_stderr;
    const std::size_t per = !cfg.keep_states ? 0 : original_basis ? static_cast<std::size_t>(n * n) : pattern.size();
    const std::size_t nobs = observables.size();

    auto fill = [&](std::size_t traj, std::span<cplx> payload, std::span<double> obs) {
      std::size_t r = 0;
      ComplexVector z(n);
      walk(cfg.master_seed, traj, cfg.grid, cfg.noise_refinement,
           [&](std::size_t k, const Eigen::VectorXd& phi) {
             if (r >= records || steps[r] != k) return;
             for (Index c = 0; c < n; ++c) z(c) = std::polar(1.0, -phi(c));
             for (std::size_t i = 0; i < nobs; ++i) {
               double acc = 0.0;
               for (std::size_t p = 0; p < pattern.size(); ++p) {
                 const auto [a, b] = pattern[p];
                 acc += (z(a) * std::conj(z(b)) * ow[i][p]).real();
               }
               obs[r * nobs + i] = acc;
             }
             cplx* out = payload.data() + r * per;
             if (per > 0 && original_basis) {
               ComplexMatrix dt = ComplexMatrix::Zero(n, n);
               for (auto [a, b] : pattern) dt(a, b) = z(a) * std::conj(z(b)) * d0(a, b);
               const ComplexMatrix rho = basis * dt * basis.adjoint();
               std::copy(rho.data(), rho.data() + per, out);
             } else if (per > 0) {
               for (std::size_t p = 0; p < pattern.size(); ++p) {
                 const auto [a, b] = pattern[p];
                 out[p] = z(a) * std::conj(z(b)) * d0(a, b);
               }
             }
             ++r;
           });
    };

    const auto m = run_trajectories(cfg.n_traj, records * per, records * nobs, cfg, cfg.state_stderr, fill);
    const auto times = record_times(cfg);
    const auto names = observable_names(observables);
    if (original_basis || per == 0) return assemble_state_result(m, n, times, names, tol);

    // Dressed-basis payload: rebuild full mean states, no per-entry errors.
    detail::MomentBlock full(records * static_cast<std::size_t>(n * n), m.obs_mean.size(), false);
    full.count = m.count;
    full.obs_mean = m.obs_mean;
    full.obs_m2 = m.obs_m2;
    for (std::size_t k = 0; k < records; ++k) {
      ComplexMatrix dt = ComplexMatrix::Zero(n, n);
      for (std::size_t p = 0; p < pattern.size(); ++p) {
        const auto [a, b] = pattern[p];
        dt(a, b) = m.mean[k * per + p];
      }
      const ComplexMatrix rho = basis * dt * basis.adjoint();
      std::copy(rho.data(), rho.data() + n * n, full.mean.begin() + static_cast<std::ptrdiff_t>(k * static_cast<std::size_t>(n * n)));
    }
    return assemble_state_result(full, n, times, names, tol);
  }

 private:
  template <class Visit>
  void walk(std::uint64_t seed, std::uint64_t traj, const TimeGrid& grid, std::size_t refinement,
            Visit&& visit) const {
    const Index n = dim();
    const std::size_t nch = channel_kernels.size();
    std::vector<bool> used(nch, false);
    for (const auto& t : terms) {
      if (t.channel >= nch || t.column < 0 || t.column >= n) throw DimensionError("SpectralPhaseEngine: bad term");
      if (t.weight != 0.0) used[t.channel] = true;
    }
    for (std::size_t c = 0; c < nch; ++c)
      if (used[c]) channel_kernels[c].require_window(grid.t_end);
    for (const auto& k : column_kernels) k.require_window(grid.t_end);

    std::vector<GaussianIncrements> gens;
    std::vector<std::size_t> gen_of(nch, 0);
    for (std::size_t c = 0; c < nch; ++c) {
      if (!used[c]) continue;
      gen_of[c] = gens.size();
      gens.emplace_back(seed, traj, c, grid.dt(), refinement);
    }
    Eigen::VectorXd noise = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd phi = energies * 0.0;
    std::vector<double> dw(nch, 0.0);
    visit(0, phi);
    for (std::size_t k = 0; k < grid.n_steps; ++k) {
      const double t = grid.time(k);
      for (std::size_t c = 0; c < nch; ++c)
        if (used[c]) dw[c] = gens[gen_of[c]].next() * channel_kernels[c](t);
      for (const auto& term : terms) {
        double inc = term.weight * dw[term.channel];
        if (!column_kernels.empty()) inc *= column_kernels[static_cast<std::size_t>(term.column)](t);
        noise(term.column) += inc;
      }
      phi = energies * grid.time(k + 1) + noise;
      visit(k + 1, phi);
    }
  }
};

// Engine for a commuting random unitary model (shared eigenbasis).
inline SpectralPhaseEngine commuting_engine(const RandomUnitaryModel& model) {
  if (!model.commuting()) throw InvariantError("commuting_engine: model operators do not commute");
  std::vector<const ComplexMatrix*> ops{&model.hamiltonian().matrix()};
  for (const auto& c : model.channels()) ops.push_back(&c.op.matrix());
  SpectralPhaseEngine e;
  e.basis = shared_eigenbasis(ops, model.dim());
  e.energies = (e.basis.adjoint() * model.hamiltonian().matrix() * e.basis).diagonal().real();
  for (std::size_t i = 0; i < model.channels().size(); ++i) {
    const auto& ch = model.channels()[i];
    e.channel_kernels.push_back(ch.kernel);
    const Eigen::VectorXd ev = (e.basis.adjoint() * ch.op.matrix() * e.basis).diagonal().real();
    for (Index c = 0; c < ev.size(); ++c)
      if (ev(c) != 0.0) e.terms.push_back({c, i, ev(c)});
  }
  return e;
}

// Per-trajectory stream selector: channel i reads (master_seed, trajectory, i).
struct StreamSet {
  std::uint64_t master_seed = 0;
  std::uint64_t trajectory = 0;
};

inline std::vector<ComplexMatrix> trajectory_commuting(const RandomUnitaryModel& model, const StreamSet& s,
                                                       const TimeGrid& grid) {
  return commuting_engine(model).unitaries(s.master_seed, s.trajectory, grid);
}

// ---------------------------------------------------------------------------
// Splitting stepper for non-commuting models

class SplittingStepper {
 public:
  SplittingStepper(const RandomUnitaryModel& model, const TimeGrid& grid)
      : model_(&model), grid_(grid) {
    for (const auto& c : model.channels()) c.kernel.require_window(grid.t_end);
    drift_ = expm_hermitian_generator(model.hamiltonian(), grid.dt());
    std::vector<const ComplexMatrix*> vs;
    for (const auto& c : model.channels()) vs.push_back(&c.op.matrix());
    try {
      if (!vs.empty()) {
        noise_basis_ = shared_eigenbasis(vs, model.dim());
        for (const auto& c : model.channels())
          noise_eigs_.push_back((noise_basis_.adjoint() * c.op.matrix() * noise_basis_).diagonal().real());
        drift_basis_ = drift_ * noise_basis_;
        shared_ = true;
      }
    } catch (const NumericalError&) {
      shared_ = false;
    }
  }

  // U <- exp(-iH dt) exp(-i sum_i a_i V_i) U, with a_i = v_i(t_k) dB_i.
  void step(ComplexMatrix& u, const std::vector<double>& a) const {
    if (model_->channels().empty()) {
      u = drift_ * u;
      return;
    }
    if (shared_) {
      ComplexVector z(noise_basis_.cols());
      for (Index c = 0; c < z.size(); ++c) {
        double ph = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) ph += a[i] * noise_eigs_[i](c);
        z(c) = std::polar(1.0, -ph);
      }
      const ComplexMatrix f = drift_basis_ * z.asDiagonal() * noise_basis_.adjoint();
      u = f * u;
      return;
    }
    ComplexMatrix gen = ComplexMatrix::Zero(model_->dim(), model_->dim());
    for (std::size_t i = 0; i < a.size(); ++i) gen += a[i] * model_->channels()[i].op.matrix();
    u = drift_ * expm_hermitian_generator(HermitianOperator(gen), 1.0) * u;
  }

  // Visits U(t_k) for k = 0..n_steps.
  template <class Visit>
  void walk(std::uint64_t seed, std::uint64_t traj, std::size_t refinement, Visit&& visit) const {
    const auto& chs = model_->channels();
    std::vector<GaussianIncrements> gens;
    for (std::size_t i = 0; i < chs.size(); ++i) gens.emplace_back(seed, traj, i, grid_.dt(), refinement);
    ComplexMatrix u = ComplexMatrix::Identity(model_->dim(), model_->dim());
    std::vector<double> a(chs.size());
    visit(std::size_t{0}, u);
    for (std::size_t k = 0; k < grid_.n_steps; ++k) {
      const double t = grid_.time(k);
      for (std::size_t i = 0; i < chs.size(); ++i) a[i] = chs[i].kernel(t) * gens[i].next();
      step(u, a);
      visit(k + 1, u);
    }
  }

 private:
  const RandomUnitaryModel* model_;
  TimeGrid grid_;
  ComplexMatrix drift_, drift_basis_, noise_basis_;
  std::vector<Eigen::VectorXd> noise_eigs_;
  bool shared_ = false;
};

inline std::vector<ComplexMatrix> trajectory_general(const RandomUnitaryModel& model, const StreamSet& s,
                                                     const TimeGrid& grid, std::size_t refinement = 1) {
  SplittingStepper stepper(model, grid);
  std::vector<ComplexMatrix> out;
  out.reserve(grid.n_steps + 1);
  stepper.walk(s.master_seed, s.trajectory, refinement,
               [&](std::size_t, const ComplexMatrix& u) { out.push_back(u); });
  return out;
}

enum class EnsembleMethod { automatic, commuting, general };

inline EnsembleResult ensemble_average(const RandomUnitaryModel& model, const DensityMatrix& rho0,
                                       const EnsembleConfig& cfg, const std::vector<Observable>& observables = {},
                                       EnsembleMethod method = EnsembleMethod::automatic,
                                       const Tolerances& tol = {}) {
  cfg.validate();
  if (rho0.dim() != model.dim()) throw DimensionError("ensemble_average: rho0 dimension mismatch");
  const bool use_commuting =
      method == EnsembleMethod::commuting || (method == EnsembleMethod::automatic && model.commuting());
  if (use_commuting) return commuting_engine(model).run(rho0, cfg, observables, tol);

  SplittingStepper stepper(model, cfg.grid);
  const Index n = model.dim();
  const auto steps = cfg.record_steps();
  const std::size_t per = cfg.keep_states ? static_cast<std::size_t>(n * n) : 0;
  const std::size_t nobs = observables.size();
  for (const auto& o : observables)
    if (o.op.dim() != n) throw DimensionError("ensemble_average: observable dimension mismatch");

  auto fill = [&](std::size_t traj, std::span<cplx> payload, std::span<double> obs) {
    std::size_t r = 0;
    stepper.walk(cfg.master_seed, traj, cfg.noise_refinement, [&](std::size_t k, const ComplexMatrix& u) {
      if (r >= steps.size() || steps[r] != k) return;
      const ComplexMatrix rho = u * rho0.matrix() * u.adjoint();
      if (per) std::copy(rho.data(), rho.data() + per, payload.data() + r * per);
      for (std::size_t i = 0; i < nobs; ++i) obs[r * nobs + i] = observables[i].op.expectation(rho);
      ++r;
    });
  };
  const auto m = run_trajectories(cfg.n_traj, steps.size() * per, steps.size() * nobs, cfg, cfg.state_stderr, fill);
  return assemble_state_result(m, n, record_times(cfg), observable_names(observables), tol);
}

// ---------------------------------------------------------------------------
// Variance process and collapse dynamics

// V(psi) = <psi|(A - <A>)^2|psi> / <psi|psi>
inline double state_variance(const ComplexVector& psi, const HermitianOperator& a) {
  const double nrm = psi.squaredNorm();
  if (nrm == 0.0) throw NumericalError("variance_process: zero-norm state");
  const double mean = psi.dot(a.matrix() * psi).real() / nrm;
  const ComplexVector d = a.matrix() * psi - mean * psi;
  return d.squaredNorm() / nrm;
}

inline std::vector<double> variance_process(const std::vector<ComplexVector>& path, const HermitianOperator& a) {
  std::vector<double> out;
  out.reserve(path.size());
  for (std::size_t k = 0; k < path.size(); ++k) {
    if (path[k].size() != a.dim()) throw DimensionError("variance_process: dimension mismatch");
    try {
      out.push_back(state_variance(path[k], a));
    } catch (const NumericalError&) {
      throw NumericalError("variance_process: zero-norm state", k);
    }
  }
  return out;
}

// Euler-Maruyama step of
//   dpsi = -iH psi dt - (1/2)(A - <A>)^2 psi dt + (A - <A>) psi dB,
// renormalized after every step.
inline void collapse_step(ComplexVector& psi, const ComplexMatrix& h, const ComplexMatrix& a, double dt,
                          double db, std::size_t step_index) {
  const double mean = psi.dot(a * psi).real();
  const ComplexVector d = a * psi - mean * psi;
  const ComplexVector d2 = a * d - mean * d;
  psi += (-I_unit * dt) * (h * psi) - (0.5 * dt) * d2 + db * d;
  const double nrm = psi.norm();
  if (!(nrm > 0.0) || !std::isfinite(nrm)) {
    throw NumericalError("collapse_trajectory: step produced a zero or non-finite vector", step_index);
  }
  psi /= nrm;
}

inline std::vector<ComplexVector> collapse_trajectory(const HermitianOperator& h, const HermitianOperator& a,
                                                      const ComplexVector& psi0,
                                                      const BrownianIncrementStream& stream) {
  if (h.dim() != a.dim() || psi0.size() != h.dim()) throw DimensionError("collapse_trajectory: dimension mismatch");
  if (std::abs(psi0.norm() - 1.0) > 1e-10) throw InvariantError("collapse_trajectory: psi0 must be normalized");
  const auto db = sample_increments(stream);
  std::vector<ComplexVector> path{psi0};
  ComplexVector psi = psi0;
  for (std::size_t k = 0; k < stream.grid.n_steps; ++k) {
    collapse_step(psi, h.matrix(), a.matrix(), stream.grid.dt(), db[k], k + 1);
    path.push_back(psi);
  }
  return path;
}

// Ensemble over pure-state trajectories produced by `propagate(traj, visit)`,
// where visit(k, psi) is called for k = 0..n_steps. Records the mean density
// matrix, the observables, and the variance process of `a` as "V_tilde".
template <class Propagate>
EnsembleResult pure_state_ensemble(Index dim, const EnsembleConfig& cfg, const HermitianOperator& a,
                                   const std::vector<Observable>& observables, Propagate&& propagate,
                                   const Tolerances& tol = {}) {
  const auto steps = cfg.record_steps();
  const std::size_t per = cfg.keep_states ? static_cast<std::size_t>(dim * dim) : 0;
  const std::size_t nobs = observables.size() + 1;
  auto fill = [&](std::size_t traj, std::span<cplx> payload, std::span<double> obs) {
    std::size_t r = 0;
    propagate(traj, [&](std::size_t k, const ComplexVector& psi) {
      if (r >= steps.size() || steps[r] != k) return;
      const ComplexMatrix rho = psi * psi.adjoint();
      if (per) std::copy(rho.data(), rho.data() + per, payload.data() + r * per);
      obs[r * nobs] = state_variance(psi, a);
      for (std::size_t i = 0; i < observables.size(); ++i)
        obs[r * nobs + 1 + i] = observables[i].op.expectation(rho);
      ++r;
    });
  };
  const auto m = run_trajectories(cfg.n_traj, steps.size() * per, steps.size() * nobs, cfg, cfg.state_stderr, fill);
  std::vector<std::string> names{"V_tilde"};
  for (const auto& o : observables) names.push_back(o.name);
  return assemble_state_result(m, dim, record_times(cfg), names, tol);
}

inline EnsembleResult collapse_ensemble(const HermitianOperator& h, const HermitianOperator& a,
                                        const ComplexVector& psi0, const EnsembleConfig& cfg,
                                        const std::vector<Observable>& observables = {}) {
  if (h.dim() != a.dim() || psi0.size() != h.dim()) throw DimensionError("collapse_ensemble: dimension mismatch");
  return pure_state_ensemble(h.dim(), cfg, a, observables, [&](std::size_t traj, auto&& visit) {
    GaussianIncrements gen(cfg.master_seed, traj, 0, cfg.grid.dt(), cfg.noise_refinement);
    ComplexVector psi = psi0 / psi0.norm();
    visit(std::size_t{0}, psi);
    for (std::size_t k = 0; k < cfg.grid.n_steps; ++k) {
      collapse_step(psi, h.matrix(), a.matrix(), cfg.grid.dt(), gen.next(), k + 1);
      visit(k + 1, psi);
    }
  });
}

// Pure states driven by random unitary trajectories (splitting stepper).
inline EnsembleResult unitary_state_ensemble(const RandomUnitaryModel& model, const ComplexVector& psi0,
                                             const HermitianOperator& a, const EnsembleConfig& cfg,
                                             const std::vector<Observable>& observables = {}) {
  if (psi0.size() != model.dim()) throw DimensionError("unitary_state_ensemble: dimension mismatch");
  SplittingStepper stepper(model, cfg.grid);
  return pure_state_ensemble(model.dim(), cfg, a, observables, [&](std::size_t traj, auto&& visit) {
    stepper.walk(cfg.master_seed, traj, cfg.noise_refinement,
                 [&](std::size_t k, const ComplexMatrix& u) { visit(k, ComplexVector(u * psi0)); });
  });
}

}  // namespace stochlind
