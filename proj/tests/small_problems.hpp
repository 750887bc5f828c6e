#pragma once

// Builders for the small 1D instances shared by the solver tests and the
// acceptance gate.

#include "gflow/coupling.hpp"
#include "gflow/kernels.hpp"
#include "gflow/sinkhorn.hpp"

namespace gflow::testing {

enum class Endpoint { sparse_reflection, dense_pair, penalization };

// 1D instance; Gaussian kernel on the box, heat kernel on the torus.
inline Problem small_problem(int m, int N, KernelMode kmode, Endpoint ep,
                             double eps = 1e-2, double T = 1.0, double beta = 50.0) {
  Problem pr;
  const bool periodic = kmode == KernelMode::heat;
  pr.grid = Grid(Domain{1, periodic, 1.0}, m);
  pr.N = N;
  pr.T = T;
  pr.eps = eps;
  pr.kernel = kmode == KernelMode::heat ? heat_kernel(pr.grid, eps * T / N)
                                        : gaussian_kernel(pr.grid, eps, T, N);
  switch (ep) {
    case Endpoint::sparse_reflection:
      pr.mode = EndpointMode::constraint;
      pr.pi = coupling_from_map(pr.grid, FinalConfiguration::reflection(pr.grid));
      break;
    case Endpoint::dense_pair: {
      pr.mode = EndpointMode::constraint;
      pr.pi.grid = pr.grid;
      pr.pi.sparse = false;
      pr.pi.dense = PairField(m);
      // uniform-marginal pair mass concentrated near the anti-diagonal
      double total = 0.0;
      for (int s = 0; s < m; ++s)
        for (int t = 0; t < m; ++t) {
          const int r = m - 1 - s;
          const double w = t == r ? 3.0 : 1.0;
          pr.pi.dense.at(s, t) = w;
          total += w;
        }
      for (double& v : pr.pi.dense.v) v /= total;
      break;
    }
    case Endpoint::penalization:
      pr.mode = EndpointMode::penalization;
      pr.beta_weights = penalized_endpoint_kernel(
          pr.grid, FinalConfiguration::reflection(pr.grid).image, beta, eps);
      break;
  }
  return pr;
}

} // namespace gflow::testing
