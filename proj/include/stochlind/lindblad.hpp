// lindblad.hpp: master equations with self-adjoint Lindblad operators,
//
//   drho/dt = -i[H, rho] - sum_i (v_i(t)^2 / 2) [V_i, [V_i, rho]],
//
// integrated with fixed-step RK4, plus the Markovian superoperator
// exponential used as an analytic reference.

#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "stochlind/core_ops.hpp"
#include "stochlind/stochastic.hpp"

namespace stochlind {

// One dephasing channel: operator V with time-dependent amplitude v(t).
struct DephasingChannel {
  HermitianOperator op;
  NoiseKernel kernel;
};

struct Observable {
  std::string name;
  HermitianOperator op;
};

class LindbladModel {
 public:
  LindbladModel(HermitianOperator h, std::vector<DephasingChannel> channels)
      : h_(std::move(h)), channels_(std::move(channels)) {
    for (const auto& c : channels_) {
      if (c.op.dim() != h_.dim()) throw DimensionError("LindbladModel: channel dimension differs from H");
    }
  }

  const HermitianOperator& hamiltonian() const noexcept { return h_; }
  const std::vector<DephasingChannel>& channels() const noexcept { return channels_; }
  Index dim() const noexcept { return h_.dim(); }

  bool markovian() const noexcept {
    for (const auto& c : channels_)
      if (!c.kernel.is_constant()) return false;
    return true;
  }

 private:
  HermitianOperator h_;
  std::vector<DephasingChannel> channels_;
};

inline ComplexMatrix generator_apply(const LindbladModel& model, const ComplexMatrix& rho, double t) {
  require_same_dim(model.hamiltonian().matrix(), rho, "generator_apply");
  ComplexMatrix out = -I_unit * commutator(model.hamiltonian().matrix(), rho);
  for (const auto& c : model.channels()) {
    const double v = c.kernel(t);
    if (v == 0.0) continue;
    out -= (0.5 * v * v) * double_commutator_apply(c.op, rho);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fixed-step integration

struct EvolutionRecord {
  TimeGrid grid;
  std::size_t record_every = 1;
  std::vector<double> times;
  std::vector<DensityMatrix> states;
  std::map<std::string, std::vector<double>> observables;
};

struct IntegrateOptions {
  std::size_t record_every = 1;  // store every k-th grid point (k = 1: all)
  std::vector<Observable> observables;
  Tolerances tolerances;
};

// Classical RK4 on drho/dt = f(t, rho) with fixed step. Every stored state is
// re-validated as a density matrix; a violation reports the step index.
template <class Generator>
EvolutionRecord integrate_rk4(Generator&& f, const DensityMatrix& rho0, const TimeGrid& grid,
                              const IntegrateOptions& opt = {}) {
  const std::size_t every = opt.record_every == 0 ? 1 : opt.record_every;
  EvolutionRecord rec;
  rec.grid = grid;
  rec.record_every = every;
  for (const auto& o : opt.observables) {
    if (o.op.dim() != rho0.dim()) throw DimensionError("integrate: observable dimension mismatch");
    rec.observables[o.name];
  }

  auto store = [&](std::size_t k, const ComplexMatrix& rho) {
    try {
      rec.states.emplace_back(rho, opt.tolerances);
    } catch (const InvariantError& e) {
      throw NumericalError(std::string("integrate: state left the density-matrix set: ") + e.what(), k);
    }
    rec.times.push_back(grid.time(k));
    for (const auto& o : opt.observables) rec.observables[o.name].push_back(o.op.expectation(rho));
  };

  ComplexMatrix rho = rho0.matrix();
  store(0, rho);
  const double h = grid.dt();
  for (std::size_t k = 0; k < grid.n_steps; ++k) {
    const double t = grid.time(k);
    const ComplexMatrix k1 = f(t, rho);
    const ComplexMatrix k2 = f(t + 0.5 * h, ComplexMatrix(rho + (0.5 * h) * k1));
    const ComplexMatrix k3 = f(t + 0.5 * h, ComplexMatrix(rho + (0.5 * h) * k2));
    const ComplexMatrix k4 = f(t + h, ComplexMatrix(rho + h * k3));
    rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!rho.allFinite()) throw NumericalError("integrate: non-finite state", k + 1);
    if ((k + 1) % every == 0 || k + 1 == grid.n_steps) store(k + 1, rho);
  }
  return rec;
}

inline EvolutionRecord integrate(const LindbladModel& model, const DensityMatrix& rho0,
                                 const TimeGrid& grid, const IntegrateOptions& opt = {}) {
  if (rho0.dim() != model.dim()) throw DimensionError("integrate: rho0 dimension mismatch");
  for (const auto& c : model.channels()) c.kernel.require_window(grid.t_end);
  return integrate_rk4([&](double t, const ComplexMatrix& r) { return generator_apply(model, r, t); },
                       rho0, grid, opt);
}

// ---------------------------------------------------------------------------
// Markovian superoperator (column-stacking vectorization)

inline ComplexMatrix superoperator_matrix(const LindbladModel& model) {
  if (!model.markovian()) throw InvariantError("superoperator_matrix: kernels must be constant");
  ComplexMatrix l = -I_unit * commutator_superoperator(model.hamiltonian().matrix());
  for (const auto& c : model.channels()) {
    const double v = c.kernel.coefficient();
    const ComplexMatrix cv = commutator_superoperator(c.op.matrix());
    l -= (0.5 * v * v) * (cv * cv);
  }
  return l;
}

inline ComplexMatrix propagator_matrix(const LindbladModel& model, double t) {
  return ComplexMatrix((t * superoperator_matrix(model)).exp());
}

inline DensityMatrix analytic_markov_evolve(const LindbladModel& model, const DensityMatrix& rho0,
                                            double t, const Tolerances& tol = {}) {
  if (rho0.dim() != model.dim()) throw DimensionError("analytic_markov_evolve: dimension mismatch");
  if (t == 0.0) return rho0;
  const ComplexVector out = propagator_matrix(model, t) * vec(rho0.matrix());
  return DensityMatrix(unvec(out, model.dim()), tol);
}

}  // namespace stochlind
