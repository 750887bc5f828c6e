#pragma once

// Brute-force reference solver for small 1D instances: the plan and every
// update are evaluated by full enumeration over all M^(N+1) states. Mirrors
// the production sweep (b, then a_1..a_{N-1} with fresh earlier slices, then
// the geometric-mean gauge) so sweep-matched comparisons are exact up to
// rounding.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "gflow/kernels.hpp"
#include "gflow/sinkhorn.hpp"

namespace gflow::oracle {

// Kernel entry with the production band mask applied (row = later slice).
inline double masked_kernel(const AxisKernel& ax, int later, int earlier) {
  if (earlier < ax.lo[later] || earlier >= ax.hi[later]) return 0.0;
  return ax.at(later, earlier);
}

class DenseOracle {
 public:
  explicit DenseOracle(const Problem& pr) : pr_(pr), M_(pr.grid.cells()) {
    if (pr.grid.domain.dim != 1)
      throw std::invalid_argument("DenseOracle: 1D instances only");
    a_.assign(std::size_t(pr_.N - 1), Field(M_, 1.0));
    if (pr_.mode == EndpointMode::constraint) {
      pi_ = PairField(M_);
      for (int s = 0; s < M_; ++s)
        for (int t = 0; t < M_; ++t) pi_.at(s, t) = pr_.pi.mass(s, t);
      b_ = PairField(M_);
      for (std::size_t i = 0; i < b_.v.size(); ++i)
        b_.v[i] = pi_.v[i] > 0.0 ? 1.0 : 0.0;
    }
  }

  const std::vector<Field>& a() const { return a_; }
  const PairField& b() const { return b_; }
  double log_scale() const { return log_scale_; }

  // Endpoint factor of the plan.
  double endpoint_weight(int s, int t) const {
    if (pr_.mode == EndpointMode::penalization)
      return pr_.beta_weights.at(s, t) * std::exp(log_scale_);
    return b_.at(s, t);
  }

  double plan(const std::vector<int>& tuple) const {
    double v = endpoint_weight(tuple[0], tuple[std::size_t(pr_.N)]);
    for (int k = 1; k <= pr_.N - 1; ++k) v *= a_[std::size_t(k - 1)][tuple[std::size_t(k)]];
    for (int k = 0; k < pr_.N; ++k)
      v *= masked_kernel(pr_.kernel.axes[0], tuple[std::size_t(k + 1)], tuple[std::size_t(k)]);
    return v;
  }

  // Same plan formula evaluated with the production solver's potentials.
  double plan_with(const Potentials& pot, const std::vector<int>& tuple) const {
    double v;
    if (pr_.mode == EndpointMode::penalization) {
      v = pr_.beta_weights.at(tuple[0], tuple[std::size_t(pr_.N)]) * std::exp(pot.log_scale);
    } else if (pr_.pi.sparse) {
      v = pr_.pi.target[std::size_t(tuple[0])] == tuple[std::size_t(pr_.N)]
              ? pot.b_sparse[std::size_t(tuple[0])]
              : 0.0;
    } else {
      v = pot.b_dense.at(tuple[0], tuple[std::size_t(pr_.N)]);
    }
    for (int k = 1; k <= pr_.N - 1; ++k) v *= pot.a[std::size_t(k - 1)][tuple[std::size_t(k)]];
    for (int k = 0; k < pr_.N; ++k)
      v *= masked_kernel(pr_.kernel.axes[0], tuple[std::size_t(k + 1)], tuple[std::size_t(k)]);
    return v;
  }

  template <class Fn>
  void for_each_tuple(Fn&& fn) const {
    std::vector<int> tuple(std::size_t(pr_.N) + 1, 0);
    for (;;) {
      fn(tuple);
      int d = 0;
      while (d <= pr_.N && ++tuple[std::size_t(d)] == M_) {
        tuple[std::size_t(d)] = 0;
        ++d;
      }
      if (d > pr_.N) break;
    }
  }

  void update_b() {
    if (pr_.mode != EndpointMode::constraint) return;
    PairField S(M_);
    for_each_tuple([&](const std::vector<int>& t) {
      if (pi_.at(t[0], t[std::size_t(pr_.N)]) == 0.0) return;
      double v = 1.0;
      for (int k = 1; k <= pr_.N - 1; ++k) v *= a_[std::size_t(k - 1)][t[std::size_t(k)]];
      for (int k = 0; k < pr_.N; ++k)
        v *= masked_kernel(pr_.kernel.axes[0], t[std::size_t(k + 1)], t[std::size_t(k)]);
      S.at(t[0], t[std::size_t(pr_.N)]) += v;
    });
    for (int s = 0; s < M_; ++s)
      for (int t = 0; t < M_; ++t) {
        const double p = pi_.at(s, t);
        b_.at(s, t) = p > 0.0 ? p / S.at(s, t) : 0.0;
      }
  }

  void update_a(int k) {
    std::vector<double> A(std::size_t(M_), 0.0);
    for_each_tuple([&](const std::vector<int>& t) {
      const double v = plan(t);
      if (v == 0.0) return;
      A[std::size_t(t[std::size_t(k)])] += v / a_[std::size_t(k - 1)][t[std::size_t(k)]];
    });
    for (int x = 0; x < M_; ++x) a_[std::size_t(k - 1)][x] = (1.0 / M_) / A[std::size_t(x)];
  }

  void apply_gauge() {
    double log_removed = 0.0;
    for (auto& a : a_) {
      double lg = 0.0;
      for (double x : a.v) lg += std::log(x);
      lg /= double(a.size());
      const double g = std::exp(lg);
      for (double& x : a.v) x /= g;
      log_removed += lg;
    }
    if (log_removed == 0.0) return;
    if (pr_.mode == EndpointMode::penalization) {
      log_scale_ += log_removed;
    } else {
      const double c = std::exp(log_removed);
      for (double& x : b_.v) x *= c;
    }
  }

  void sweep() {
    update_b();
    for (int k = 1; k <= pr_.N - 1; ++k) update_a(k);
    apply_gauge();
  }

  Field time_marginal(int k) const {
    Field marg(M_, 0.0);
    for_each_tuple([&](const std::vector<int>& t) {
      marg[t[std::size_t(k)]] += plan(t);
    });
    return marg;
  }

  PairField two_point_marginal(int k) const {
    PairField P(M_);
    for_each_tuple([&](const std::vector<int>& t) {
      P.at(t[0], t[std::size_t(k)]) += plan(t);
    });
    return P;
  }

  // (transport cost, discrete entropy, E[log b + sum log a]).
  Objective objective() const {
    Objective obj;
    for_each_tuple([&](const std::vector<int>& t) {
      const double v = plan(t);
      if (v == 0.0) return;
      double c = 0.0;
      for (int k = 0; k < pr_.N; ++k)
        c += step_cost(pr_, pr_.grid.point(t[std::size_t(k)]), pr_.grid.point(t[std::size_t(k + 1)]));
      obj.transport_cost += v * c;
      obj.entropy += v * std::log(v);
      double lk = pr_.mode == EndpointMode::penalization
                      ? log_scale_
                      : std::log(endpoint_weight(t[0], t[std::size_t(pr_.N)]));
      for (int k = 1; k <= pr_.N - 1; ++k)
        lk += std::log(a_[std::size_t(k - 1)][t[std::size_t(k)]]);
      obj.kl_to_alpha += v * lk;
    });
    return obj;
  }

 private:
  const Problem& pr_;
  int M_;
  std::vector<Field> a_;
  PairField b_;     // constraint mode (zero off the support of pi)
  PairField pi_;    // dense copy of the endpoint coupling
  double log_scale_ = 0.0;
};

} // namespace gflow::oracle
