#pragma once

#include <random>

#include "stochlind/core_ops.hpp"

namespace testing_support {

using namespace stochlind;

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

inline DensityMatrix random_density(std::mt19937_64& rng, Index n) {
  const ComplexMatrix m = random_matrix(rng, n);
  const ComplexMatrix r = m * m.adjoint();
  return DensityMatrix(ComplexMatrix(r / r.trace().real()));
}

inline ComplexMatrix ket_bra(Index n, Index j, Index k) {
  ComplexMatrix m = ComplexMatrix::Zero(n, n);
  m(j, k) = 1.0;
  return m;
}

inline double dist(const ComplexMatrix& a, const ComplexMatrix& b) { return max_abs(ComplexMatrix(a - b)); }

}  // namespace testing_support
