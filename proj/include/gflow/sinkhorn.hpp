#pragma once

// Multi-marginal Sinkhorn scaling for the time-discretized generalized
// incompressible flow problem. The implicit plan is
//   gamma(x_0..x_N) = b(x_0,x_N) prod_k a_k(x_k) prod_k K(x_{k+1}-x_k)
// and is never materialized: all contractions run over pair-lifted chain
// messages F_k(x_0, x_k) / G_k(x_0, x_k), O(N * cells * kernel_apply) per
// sweep and O(cells^2) per message front.

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gflow/coupling.hpp"
#include "gflow/grid.hpp"
#include "gflow/kernels.hpp"
#include "gflow/parallel.hpp"

namespace gflow {

enum class EndpointMode { constraint, penalization };

struct Stopping {
  double eta = 1e-4;
  int max_sweeps = 10000;
  bool include_b = true; // count the b term in the Hilbert stopping sum
};

struct Problem {
  Grid grid;
  int N = 1;      // time steps, N+1 slices
  double T = 1.0; // horizon
  double eps = 1e-3;
  ProductKernel kernel;
  EndpointMode mode = EndpointMode::constraint;
  EndpointCoupling pi;    // constraint mode
  PairField beta_weights; // penalization mode
  Stopping stopping;
  int threads = 1;

  void validate() const {
    if (N < 1) throw std::invalid_argument("Problem: N must be >= 1");
    if (!(stopping.eta > 0.0)) throw std::invalid_argument("Problem: eta must be positive");
    if (mode == EndpointMode::constraint && pi.grid.cells() != grid.cells())
      throw std::invalid_argument("Problem: coupling does not match the grid");
    if (mode == EndpointMode::penalization && beta_weights.n != grid.cells())
      throw std::invalid_argument("Problem: penalty weights do not match the grid");
  }
};

struct Potentials {
  // Interior potentials are a[k][x] * 2^{a_exp[k][x]}; the exponent arrays
  // stay empty (all exponents zero) until an update produces a value outside
  // plain double range, so in tame regimes a[k][x] is the value itself.
  std::vector<Field> a; // interior slices 1..N-1, strictly positive mantissas
  std::vector<std::vector<int>> a_exp;
  std::vector<double> b_sparse; // constraint mode, sparse pi: mantissa per source
  std::vector<int> b_exp;       // optional exponents, same convention as a_exp
  PairField b_dense;            // constraint mode, dense pi
  double log_scale = 0.0;       // penalization mode: gauge constant

  const int* a_exp_ptr(std::size_t k) const {
    return (k < a_exp.size() && !a_exp[k].empty()) ? a_exp[k].data() : nullptr;
  }
  void ensure_a_exp(std::size_t k) {
    if (a_exp.size() < a.size()) a_exp.resize(a.size());
    if (a_exp[k].empty()) a_exp[k].assign(a[k].size(), 0);
  }
  void ensure_b_exp() {
    if (b_exp.empty()) b_exp.assign(b_sparse.size(), 0);
  }
};

struct DisconnectedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Hilbert projective metric log(max_i p_i/q_i / min_i p_i/q_i).
inline double hilbert_metric(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size() || p.empty())
    throw std::invalid_argument("hilbert_metric: shape mismatch");
  double rmax = 0.0, rmin = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] > 0.0) || !(q[i] > 0.0))
      throw std::invalid_argument("hilbert_metric: entries must be strictly positive");
    const double r = p[i] / q[i];
    if (i == 0) {
      rmax = rmin = r;
    } else {
      if (r > rmax) rmax = r;
      if (r < rmin) rmin = r;
    }
  }
  return std::log(rmax / rmin);
}

inline double hilbert_metric(const Field& p, const Field& q) {
  return hilbert_metric(p.v, q.v);
}

// Hilbert distance between two positive scaled vectors (mantissa, optional
// power-of-two exponent per entry), computed through log ratios so huge
// exponent spreads cannot overflow.
inline double hilbert_metric_scaled(const std::vector<double>& pv, const int* pe,
                                    const std::vector<double>& qv, const int* qe) {
  if (pv.size() != qv.size() || pv.empty())
    throw std::invalid_argument("hilbert_metric: shape mismatch");
  constexpr double ln2 = 0.6931471805599453;
  double rmax = -std::numeric_limits<double>::infinity();
  double rmin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (!(pv[i] > 0.0) || !(qv[i] > 0.0))
      throw std::invalid_argument("hilbert_metric: entries must be strictly positive");
    const double lr = std::log(pv[i] / qv[i]) +
                      ln2 * double((pe ? pe[i] : 0) - (qe ? qe[i] : 0));
    rmax = std::max(rmax, lr);
    rmin = std::min(rmin, lr);
  }
  return rmax - rmin;
}

// Sum of per-slice Hilbert distances, plus the b term in constraint mode when
// enabled. Potentials must share shapes.
inline double hilbert_total(const Problem& problem, const Potentials& prev,
                            const Potentials& next) {
  double s = 0.0;
  for (std::size_t k = 0; k < prev.a.size(); ++k) {
    const int* pe = prev.a_exp_ptr(k);
    const int* ne = next.a_exp_ptr(k);
    if (pe || ne)
      s += hilbert_metric_scaled(next.a[k].v, ne, prev.a[k].v, pe);
    else
      s += hilbert_metric(next.a[k], prev.a[k]);
  }
  if (problem.mode == EndpointMode::constraint && problem.stopping.include_b) {
    if (problem.pi.sparse) {
      if (!prev.b_exp.empty() || !next.b_exp.empty())
        s += hilbert_metric_scaled(next.b_sparse,
                                   next.b_exp.empty() ? nullptr : next.b_exp.data(),
                                   prev.b_sparse,
                                   prev.b_exp.empty() ? nullptr : prev.b_exp.data());
      else
        s += hilbert_metric(next.b_sparse, prev.b_sparse);
    } else {
      std::vector<double> p, q;
      p.reserve(prev.b_dense.v.size());
      for (std::size_t i = 0; i < prev.b_dense.v.size(); ++i)
        if (problem.pi.dense.v[i] > 0.0) {
          p.push_back(next.b_dense.v[i]);
          q.push_back(prev.b_dense.v[i]);
        }
      s += hilbert_metric(p, q);
    }
  }
  return s;
}

namespace detail {

// Pair-lifted chain messages, one M-entry row per initial cell i0, with a
// per-entry power-of-two exponent: the represented value is
// v(i0, x) * 2^e(i0, x), and v == 0 marks an absent entry. At the Sinkhorn
// fixed point the entries of a single row span the potentials' full dynamic
// range (exp(phi/eps) factors, thousands of digits at production scale), so a
// shared per-row exponent cannot represent them. Scaling by powers of two is
// exact, and every row is reduced serially, which preserves bitwise
// determinism across thread counts.
struct Fronts {
  std::vector<double> v; // M x M mantissas
  std::vector<int> e;    // M x M exponents

  double at(int r, int x, int M) const {
    const std::size_t i = std::size_t(r) * M + x;
    return std::ldexp(v[i], e[i]);
  }
};

// One chain step applied to every row of a front:
// out(i0, .) = K^T (scale (.) in(i0, .)), raw matrix product (no quadrature
// weight; constant factors are absorbed by the potentials), accumulated with
// running per-entry exponents.
inline void step_rows(const Problem& pr, const Fronts& in, Fronts& out, const double* scale,
                      const int* scale_e = nullptr) {
  const int M = pr.grid.cells();
  out.v.resize(in.v.size());
  out.e.resize(in.v.size());
  // Split the scale factors once; their dynamic range lives in sme[].
  std::vector<double> smv;
  std::vector<int> sme;
  if (scale) {
    smv.resize(std::size_t(M));
    sme.resize(std::size_t(M));
    for (int x = 0; x < M; ++x) {
      int e2 = 0;
      smv[std::size_t(x)] = std::frexp(scale[x], &e2);
      sme[std::size_t(x)] = e2 + (scale_e ? scale_e[x] : 0);
    }
  }
  parallel_for(M, pr.threads, [&](int b, int e) {
    std::vector<double> tv(static_cast<std::size_t>(M)), sv(static_cast<std::size_t>(M));
    std::vector<int> te(static_cast<std::size_t>(M)), se(static_cast<std::size_t>(M));
    for (int r = b; r < e; ++r) {
      const double* iv = in.v.data() + std::size_t(r) * M;
      const int* ie = in.e.data() + std::size_t(r) * M;
      for (int x = 0; x < M; ++x) {
        if (iv[x] == 0.0 || (scale && smv[std::size_t(x)] == 0.0)) {
          tv[std::size_t(x)] = 0.0;
          te[std::size_t(x)] = 0;
          continue;
        }
        int e1 = 0;
        double mv = std::frexp(iv[x], &e1);
        if (scale) {
          mv *= smv[std::size_t(x)]; // still within [0.25, 1)
          e1 += sme[std::size_t(x)];
        }
        tv[std::size_t(x)] = mv;
        te[std::size_t(x)] = ie[x] + e1;
      }
      scaled_kernel_contract(pr.kernel, tv.data(), te.data(),
                             out.v.data() + std::size_t(r) * M,
                             out.e.data() + std::size_t(r) * M, sv.data(), se.data());
    }
  });
}

inline void delta_rows(int M, Fronts& F) {
  F.v.assign(std::size_t(M) * M, 0.0);
  F.e.assign(std::size_t(M) * M, 0);
  for (int r = 0; r < M; ++r) F.v[std::size_t(r) * M + r] = 1.0;
}

// Endpoint rows: b (constraint) or the penalty weights (penalization).
inline void endpoint_rows(const Problem& pr, const Potentials& pot, Fronts& G) {
  const int M = pr.grid.cells();
  G.e.assign(std::size_t(M) * M, 0);
  if (pr.mode == EndpointMode::penalization) {
    G.v = pr.beta_weights.v;
    if (pot.log_scale != 0.0) {
      // Split the gauge constant into a power of two and a residual in [1, 2)
      // so no magnitude of log_scale can overflow the mantissas.
      constexpr double ln2 = 0.6931471805599453;
      const double l2 = pot.log_scale / ln2;
      const int shift = int(std::floor(l2));
      const double c = std::exp2(l2 - double(shift));
      for (std::size_t i = 0; i < G.v.size(); ++i) {
        G.v[i] *= c;
        G.e[i] = shift;
      }
    }
    return;
  }
  if (pr.pi.sparse) {
    G.v.assign(std::size_t(M) * M, 0.0);
    for (int s = 0; s < M; ++s) {
      const std::size_t i = std::size_t(s) * M + pr.pi.target[std::size_t(s)];
      G.v[i] = pot.b_sparse[std::size_t(s)];
      if (!pot.b_exp.empty()) G.e[i] = pot.b_exp[std::size_t(s)];
    }
  } else {
    G.v = pot.b_dense.v;
  }
}

// Forward chain S(i0, xN) through all N steps with the current interior
// potentials (b excluded).
inline void forward_chain(const Problem& pr, const Potentials& pot, Fronts& F, Fronts& buf) {
  const int M = pr.grid.cells();
  delta_rows(M, F);
  for (int k = 0; k < pr.N; ++k) {
    const double* scale = (k >= 1) ? pot.a[std::size_t(k - 1)].v.data() : nullptr;
    const int* scale_e = (k >= 1) ? pot.a_exp_ptr(std::size_t(k - 1)) : nullptr;
    step_rows(pr, F, buf, scale, scale_e);
    std::swap(F, buf);
  }
}

// Backward fronts G[k], k = 1..N-1 (G[0] unused), each excluding a_k and
// including everything from slice k to N plus the endpoint factor.
inline void backward_fronts(const Problem& pr, const Potentials& pot,
                            std::vector<Fronts>& G, Fronts& buf) {
  G.resize(std::size_t(pr.N));
  Fronts cur;
  endpoint_rows(pr, pot, cur); // G_N
  for (int k = pr.N - 1; k >= 1; --k) {
    const double* scale = (k + 1 <= pr.N - 1) ? pot.a[std::size_t(k)].v.data() : nullptr;
    const int* scale_e = (k + 1 <= pr.N - 1) ? pot.a_exp_ptr(std::size_t(k)) : nullptr;
    step_rows(pr, cur, buf, scale, scale_e);
    std::swap(cur, buf);
    G[std::size_t(k)] = cur;
  }
}

inline double uniform_mass(const Problem& pr) { return 1.0 / pr.grid.cells(); }

// A(x) = sum_{i0} F(i0,x) G(i0,x) 2^{eF(i0)+eG(i0)}, accumulated per x in
// ascending i0 order with a running per-x exponent so mixed-magnitude rows
// combine without over/underflow.
constexpr int kNoExp = std::numeric_limits<int>::min();

// Variant keeping the per-cell exponent: A[x] * 2^{Ae[x]}, Ae[x] == kNoExp for
// cells with no contribution.
inline void contract_fronts_scaled(int M, const Fronts& F, const Fronts& G,
                                   std::vector<double>& A, std::vector<int>& Ae) {
  A.assign(std::size_t(M), 0.0);
  Ae.assign(std::size_t(M), kNoExp);
  for (int r = 0; r < M; ++r) {
    const double* f = F.v.data() + std::size_t(r) * M;
    const double* g = G.v.data() + std::size_t(r) * M;
    const int* fe = F.e.data() + std::size_t(r) * M;
    const int* ge = G.e.data() + std::size_t(r) * M;
    for (int x = 0; x < M; ++x) {
      if (f[x] == 0.0 || g[x] == 0.0) continue;
      // frexp both mantissas before multiplying: the raw product can
      // underflow even when the represented term is well inside range.
      int ef = 0, eg = 0;
      const double t = std::frexp(f[x], &ef) * std::frexp(g[x], &eg);
      const int E = fe[x] + ge[x] + ef + eg;
      if (Ae[std::size_t(x)] == kNoExp) {
        A[std::size_t(x)] = t;
        Ae[std::size_t(x)] = E;
      } else if (E >= Ae[std::size_t(x)]) {
        A[std::size_t(x)] = std::ldexp(A[std::size_t(x)], Ae[std::size_t(x)] - E) + t;
        Ae[std::size_t(x)] = E;
      } else {
        A[std::size_t(x)] += std::ldexp(t, E - Ae[std::size_t(x)]);
      }
    }
  }
}

inline void contract_fronts(int M, const Fronts& F, const Fronts& G, std::vector<double>& A) {
  std::vector<int> Ae;
  contract_fronts_scaled(M, F, G, A, Ae);
  for (int x = 0; x < M; ++x)
    if (Ae[std::size_t(x)] != kNoExp) A[std::size_t(x)] = std::ldexp(A[std::size_t(x)], Ae[std::size_t(x)]);
}

// How much a starved potential is raised per sweep when its matching
// contraction has no representable contribution. Any fixed power-of-two factor
// works: the boost is a valid positive Sinkhorn iterate that pulls mass toward
// the starved cell until the contraction becomes representable, and a genuinely
// disconnected cell keeps growing without the Hilbert trace ever meeting eta,
// so the run honestly reports non-convergence.
constexpr int kStarvedBoost = 512;

// Returns true when any starved potential was boosted instead of solved for;
// a sweep containing a boost must not be allowed to declare convergence.
inline bool set_b_from_chain(const Problem& pr, Potentials& pot, const Fronts& S) {
  bool boosted = false;
  const int M = pr.grid.cells();
  if (pr.pi.sparse) {
    pot.b_sparse.resize(std::size_t(M), 1.0);
    const double mass = uniform_mass(pr);
    for (int s = 0; s < M; ++s) {
      const int t = pr.pi.target[std::size_t(s)];
      const double sv = S.v[std::size_t(s) * M + t];
      const int se = S.e[std::size_t(s) * M + t];
      if (sv == 0.0) {
        pot.ensure_b_exp();
        pot.b_exp[std::size_t(s)] += kStarvedBoost;
        boosted = true;
        continue;
      }
      const double collapsed = std::ldexp(sv, se);
      const double q = mass / collapsed;
      if (std::isnormal(collapsed) && std::isnormal(q)) {
        pot.b_sparse[std::size_t(s)] = q;
        if (!pot.b_exp.empty()) pot.b_exp[std::size_t(s)] = 0;
      } else {
        int sve = 0;
        const double svm = std::frexp(sv, &sve);
        pot.ensure_b_exp();
        pot.b_sparse[std::size_t(s)] = mass / svm;
        pot.b_exp[std::size_t(s)] = -(se + sve);
      }
    }
  } else {
    pot.b_dense = PairField(M);
    for (int s = 0; s < M; ++s)
      for (int t = 0; t < M; ++t) {
        const double p = pr.pi.dense.at(s, t);
        if (p == 0.0) continue;
        const double denom = S.at(s, t, M);
        if (!(denom > 0.0)) {
          std::ostringstream msg;
          msg << "sinkhorn: chain contraction vanished for required pair (source "
              << s << ", target " << t
              << "); the kernel has disconnected this pair - increase eps or "
                 "relax the band threshold";
          throw DisconnectedError(msg.str());
        }
        pot.b_dense.at(s, t) = p / denom;
      }
  }
  return boosted;
}

inline bool set_a_from_contraction(const Problem& pr, Potentials& pot, int k,
                                   const std::vector<double>& A,
                                   const std::vector<int>& Ae) {
  bool boosted = false;
  const int M = pr.grid.cells();
  const double mass = uniform_mass(pr);
  Field& a = pot.a[std::size_t(k - 1)];
  a.v.resize(std::size_t(M), 1.0);
  for (int x = 0; x < M; ++x) {
    if (A[std::size_t(x)] == 0.0 || Ae[std::size_t(x)] == kNoExp) {
      pot.ensure_a_exp(std::size_t(k - 1));
      pot.a_exp[std::size_t(k - 1)][std::size_t(x)] += kStarvedBoost;
      boosted = true;
      continue;
    }
    const double collapsed = std::ldexp(A[std::size_t(x)], Ae[std::size_t(x)]);
    const double q = mass / collapsed;
    if (std::isnormal(collapsed) && std::isnormal(q)) {
      a.v[std::size_t(x)] = q;
      if (!pot.a_exp.empty() && !pot.a_exp[std::size_t(k - 1)].empty())
        pot.a_exp[std::size_t(k - 1)][std::size_t(x)] = 0;
    } else {
      int ave = 0;
      const double avm = std::frexp(A[std::size_t(x)], &ave);
      pot.ensure_a_exp(std::size_t(k - 1));
      a.v[std::size_t(x)] = mass / avm;
      pot.a_exp[std::size_t(k - 1)][std::size_t(x)] = -(Ae[std::size_t(x)] + ave);
    }
  }
  return boosted;
}

// Geometric-mean gauge: rescale every a_k to geometric mean 1 and absorb the
// removed constants into b (constraint) or the recorded scalar (penalization).
inline void apply_gauge(const Problem& pr, Potentials& pot) {
  constexpr double ln2 = 0.6931471805599453;
  double log_removed = 0.0;
  bool scaled = false;
  for (std::size_t k = 0; k < pot.a.size(); ++k) {
    Field& a = pot.a[k];
    const int* ae = pot.a_exp_ptr(k);
    double lg = 0.0;
    double vmin = std::numeric_limits<double>::infinity(), vmax = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) {
      lg += std::log(a.v[i]) + (ae ? ln2 * double(ae[i]) : 0.0);
      vmin = std::min(vmin, a.v[i]);
      vmax = std::max(vmax, a.v[i]);
    }
    lg /= double(a.size());
    const double g_tame = std::exp(lg);
    // The plain division is exactness-preserving only while every rescaled
    // entry stays a normal double; otherwise shift powers of two into the
    // exponent array instead.
    if (!ae && std::fabs(lg) < 128.0 && std::isnormal(vmin / g_tame) &&
        std::isfinite(vmax / g_tame)) {
      for (double& x : a.v) x /= g_tame;
    } else {
      // Split the gauge factor into a power of two (moved to the exponents)
      // and a residual in [1, 2) so nothing over/underflows.
      scaled = true;
      const double l2 = lg / ln2;
      const int shift = int(std::floor(l2));
      const double g = std::exp2(l2 - double(shift));
      pot.ensure_a_exp(k);
      for (std::size_t i = 0; i < a.v.size(); ++i) {
        a.v[i] /= g;
        pot.a_exp[k][i] -= shift;
      }
    }
    log_removed += lg;
  }
  if (log_removed == 0.0) return;
  if (pr.mode == EndpointMode::penalization) {
    pot.log_scale += log_removed;
    return;
  }
  if (!scaled && pot.b_exp.empty() && std::fabs(log_removed) < 128.0) {
    const double c = std::exp(log_removed);
    double bmin = std::numeric_limits<double>::infinity(), bmax = 0.0;
    for (const double x : pot.b_sparse) {
      bmin = std::min(bmin, x);
      bmax = std::max(bmax, x);
    }
    if (pot.b_sparse.empty() ||
        (std::isnormal(bmin * c) && std::isfinite(bmax * c))) {
      for (double& x : pot.b_sparse) x *= c;
      for (double& x : pot.b_dense.v) x *= c;
      return;
    }
  }
  const double l2 = log_removed / ln2;
  const int shift = int(std::floor(l2));
  const double c = std::exp2(l2 - double(shift));
  if (!pot.b_sparse.empty()) {
    pot.ensure_b_exp();
    for (std::size_t s = 0; s < pot.b_sparse.size(); ++s) {
      pot.b_sparse[s] *= c;
      pot.b_exp[s] += shift;
    }
  }
  for (double& x : pot.b_dense.v) x *= std::exp(log_removed);
}

} // namespace detail

inline Potentials initial_potentials(const Problem& pr) {
  Potentials pot;
  pot.a.assign(std::size_t(pr.N - 1), Field(pr.grid.cells(), 1.0));
  if (pr.mode == EndpointMode::constraint) {
    if (pr.pi.sparse)
      pot.b_sparse.assign(std::size_t(pr.grid.cells()), 1.0);
    else {
      pot.b_dense = PairField(pr.grid.cells());
      for (std::size_t i = 0; i < pot.b_dense.v.size(); ++i)
        pot.b_dense.v[i] = pr.pi.dense.v[i] > 0.0 ? 1.0 : 0.0;
    }
  }
  return pot;
}

// Exact b-update: after it the (0,N) pair marginal of the implicit plan equals
// pi up to rounding.
inline void update_b(const Problem& pr, Potentials& pot) {
  if (pr.mode != EndpointMode::constraint)
    throw std::logic_error("update_b: constraint mode only");
  detail::Fronts S, buf;
  detail::forward_chain(pr, pot, S, buf);
  detail::set_b_from_chain(pr, pot, S);
}

// Exact a_k update (1 <= k <= N-1): after it the slice-k marginal equals the
// uniform field up to rounding.
inline void update_a(const Problem& pr, Potentials& pot, int k) {
  if (k < 1 || k > pr.N - 1) throw std::invalid_argument("update_a: slice index out of range");
  const int M = pr.grid.cells();
  detail::Fronts F, G, buf;
  detail::delta_rows(M, F);
  for (int j = 1; j <= k; ++j) {
    const double* scale = (j >= 2) ? pot.a[std::size_t(j - 2)].v.data() : nullptr;
    const int* scale_e = (j >= 2) ? pot.a_exp_ptr(std::size_t(j - 2)) : nullptr;
    detail::step_rows(pr, F, buf, scale, scale_e);
    std::swap(F, buf);
  }
  detail::endpoint_rows(pr, pot, G);
  for (int j = pr.N - 1; j >= k; --j) {
    const double* scale = (j + 1 <= pr.N - 1) ? pot.a[std::size_t(j)].v.data() : nullptr;
    const int* scale_e = (j + 1 <= pr.N - 1) ? pot.a_exp_ptr(std::size_t(j)) : nullptr;
    detail::step_rows(pr, G, buf, scale, scale_e);
    std::swap(G, buf);
  }
  std::vector<double> A;
  std::vector<int> Ae;
  detail::contract_fronts_scaled(M, F, G, A, Ae);
  detail::set_a_from_contraction(pr, pot, k, A, Ae);
}

// Slice-k marginal of the implicit plan, 0 <= k <= N.
inline Field time_marginal(const Problem& pr, const Potentials& pot, int k) {
  if (k < 0 || k > pr.N) throw std::invalid_argument("time_marginal: slice index out of range");
  const int M = pr.grid.cells();
  detail::Fronts F, G, buf;
  detail::delta_rows(M, F);
  for (int j = 1; j <= k; ++j) {
    const double* scale = (j >= 2) ? pot.a[std::size_t(j - 2)].v.data() : nullptr;
    const int* scale_e = (j >= 2) ? pot.a_exp_ptr(std::size_t(j - 2)) : nullptr;
    detail::step_rows(pr, F, buf, scale, scale_e);
    std::swap(F, buf);
  }
  detail::endpoint_rows(pr, pot, G);
  for (int j = pr.N - 1; j >= k; --j) {
    const double* scale = (j + 1 <= pr.N - 1) ? pot.a[std::size_t(j)].v.data() : nullptr;
    const int* scale_e = (j + 1 <= pr.N - 1) ? pot.a_exp_ptr(std::size_t(j)) : nullptr;
    detail::step_rows(pr, G, buf, scale, scale_e);
    std::swap(G, buf);
  }
  std::vector<double> A;
  std::vector<int> Ae;
  detail::contract_fronts_scaled(M, F, G, A, Ae);
  Field marg(M, 0.0);
  const double* ak = (k >= 1 && k <= pr.N - 1) ? pot.a[std::size_t(k - 1)].v.data() : nullptr;
  const int* ake = (k >= 1 && k <= pr.N - 1) ? pot.a_exp_ptr(std::size_t(k - 1)) : nullptr;
  for (int x = 0; x < M; ++x) {
    if (A[std::size_t(x)] == 0.0 || Ae[std::size_t(x)] == detail::kNoExp) continue;
    if (ak) {
      int e1 = 0, e2 = 0;
      const double p = std::frexp(A[std::size_t(x)], &e1) * std::frexp(ak[x], &e2);
      marg[x] = std::ldexp(p, Ae[std::size_t(x)] + e1 + e2 + (ake ? ake[x] : 0));
    } else {
      marg[x] = std::ldexp(A[std::size_t(x)], Ae[std::size_t(x)]);
    }
  }
  return marg;
}

struct SweepRecord {
  int sweep = 0;
  double hilbert = 0.0;
  double marginal_gap = 0.0; // max interior-slice L1 gap to uniform
  double seconds = 0.0;      // elapsed since solve start
};

struct Solution {
  Potentials pot;
  std::vector<SweepRecord> trace;
  bool converged = false;
  int sweeps = 0;
  double max_marginal_gap = 0.0; // interior slices, final state
  double endpoint_gap = 0.0;     // L1 gap of the (0,N) pair marginal to pi
};

namespace detail {

struct Feasibility {
  double interior_gap = 0.0;
  double endpoint_gap = 0.0;
};

// Interior marginal gaps and the endpoint pair gap for the current state.
// One backward pass (storing fronts) and one forward pass.
inline Feasibility feasibility(const Problem& pr, const Potentials& pot,
                               std::vector<Fronts>& G, Fronts& F, Fronts& buf) {
  const int M = pr.grid.cells();
  const double u = uniform_mass(pr);
  backward_fronts(pr, pot, G, buf);
  Feasibility fe;

  delta_rows(M, F);
  std::vector<double> A;
  std::vector<int> Ae;
  for (int k = 1; k <= pr.N - 1; ++k) {
    const double* scale = (k >= 2) ? pot.a[std::size_t(k - 2)].v.data() : nullptr;
    const int* scale_e = (k >= 2) ? pot.a_exp_ptr(std::size_t(k - 2)) : nullptr;
    step_rows(pr, F, buf, scale, scale_e);
    std::swap(F, buf);
    contract_fronts_scaled(M, F, G[std::size_t(k)], A, Ae);
    double gap = 0.0;
    const double* ak = pot.a[std::size_t(k - 1)].v.data();
    const int* ake = pot.a_exp_ptr(std::size_t(k - 1));
    for (int x = 0; x < M; ++x) {
      double mass = 0.0;
      if (A[std::size_t(x)] != 0.0 && Ae[std::size_t(x)] != kNoExp) {
        int e1 = 0, e2 = 0;
        const double p = std::frexp(ak[x], &e1) * std::frexp(A[std::size_t(x)], &e2);
        mass = std::ldexp(p, Ae[std::size_t(x)] + e1 + e2 + (ake ? ake[x] : 0));
      }
      gap += std::fabs(mass - u);
    }
    fe.interior_gap = std::max(fe.interior_gap, gap);
  }
  // endpoint pair marginal F_N (.) endpoint rows
  const double* scale = (pr.N >= 2) ? pot.a[std::size_t(pr.N - 2)].v.data() : nullptr;
  const int* scale_e = (pr.N >= 2) ? pot.a_exp_ptr(std::size_t(pr.N - 2)) : nullptr;
  step_rows(pr, F, buf, scale, scale_e);
  std::swap(F, buf);
  if (pr.mode == EndpointMode::constraint) {
    double gap = 0.0;
    Fronts end;
    endpoint_rows(pr, pot, end);
    for (int s = 0; s < M; ++s)
      for (int t = 0; t < M; ++t) {
        const double fv = F.v[std::size_t(s) * M + t];
        const double ev = end.v[std::size_t(s) * M + t];
        double pair = 0.0;
        if (fv != 0.0 && ev != 0.0) {
          int e1 = 0, e2 = 0;
          const double p = std::frexp(fv, &e1) * std::frexp(ev, &e2);
          pair = std::ldexp(p, F.e[std::size_t(s) * M + t] +
                                   end.e[std::size_t(s) * M + t] + e1 + e2);
        }
        gap += std::fabs(pair - pr.pi.mass(s, t));
      }
    fe.endpoint_gap = gap;
  }
  return fe;
}

} // namespace detail

// Full solve: sweeps of (update_b, update_a for k = 1..N-1) until the Hilbert
// distance between consecutive sweeps drops below eta. A trailing b-update
// restores the endpoint constraint exactly in constraint mode.
inline Solution run(const Problem& pr) {
  pr.validate();
  const int M = pr.grid.cells();
  Solution sol;
  sol.pot = initial_potentials(pr);

  detail::Fronts F, buf;
  std::vector<detail::Fronts> G;
  std::vector<double> A;
  std::vector<int> Ae;

  const auto t0 = std::chrono::steady_clock::now();
  for (int sweep = 1; sweep <= pr.stopping.max_sweeps; ++sweep) {
    const Potentials prev = sol.pot;
    bool boosted = false;

    if (pr.mode == EndpointMode::constraint) {
      detail::forward_chain(pr, sol.pot, F, buf);
      boosted |= detail::set_b_from_chain(pr, sol.pot, F);
    }
    detail::backward_fronts(pr, sol.pot, G, buf);
    detail::delta_rows(M, F);
    for (int k = 1; k <= pr.N - 1; ++k) {
      const double* scale = (k >= 2) ? sol.pot.a[std::size_t(k - 2)].v.data() : nullptr;
      const int* scale_e = (k >= 2) ? sol.pot.a_exp_ptr(std::size_t(k - 2)) : nullptr;
      detail::step_rows(pr, F, buf, scale, scale_e);
      std::swap(F, buf);
      detail::contract_fronts_scaled(M, F, G[std::size_t(k)], A, Ae);
      boosted |= detail::set_a_from_contraction(pr, sol.pot, k, A, Ae);
    }
    detail::apply_gauge(pr, sol.pot);

    const double hil = hilbert_total(pr, prev, sol.pot);
    const auto fe = detail::feasibility(pr, sol.pot, G, F, buf);
    SweepRecord rec;
    rec.sweep = sweep;
    rec.hilbert = hil;
    rec.marginal_gap = fe.interior_gap;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    sol.trace.push_back(rec);
    sol.sweeps = sweep;
    sol.max_marginal_gap = fe.interior_gap;
    sol.endpoint_gap = fe.endpoint_gap;

    // A sweep that had to boost a starved potential is not a valid fixed-point
    // candidate: the boost shifts whole rows uniformly, which the projective
    // Hilbert metric cannot see. Keep iterating instead.
    if (hil <= pr.stopping.eta && !boosted) {
      sol.converged = true;
      break;
    }
  }

  if (pr.mode == EndpointMode::constraint) {
    update_b(pr, sol.pot);
    const auto fe = detail::feasibility(pr, sol.pot, G, F, buf);
    sol.max_marginal_gap = fe.interior_gap;
    sol.endpoint_gap = fe.endpoint_gap;
  }
  return sol;
}

struct Objective {
  double transport_cost = 0.0;
  double entropy = 0.0; // sum gamma log gamma over the discrete support
  double kl_to_alpha = 0.0;
};

// Per-step cost matching the kernel mode: the quadratic cost in Gaussian mode,
// -eps log g_{eps T/N} in heat mode.
inline double step_cost(const Problem& pr, const Point& x, const Point& y) {
  if (pr.kernel.mode == KernelMode::gaussian) {
    const double d = distance(x, y, pr.grid.domain);
    return d * d * double(pr.N) / (2.0 * pr.T);
  }
  double lg = 0.0;
  for (int ax = 0; ax < pr.grid.domain.dim; ++ax) {
    const double d = axis_distance(x[ax], y[ax], pr.grid.domain);
    lg += log_periodized_heat_1d(d, pr.kernel.axes[std::size_t(ax)].sigma2,
                                 pr.grid.domain.side);
  }
  return -pr.eps * lg;
}

// Transport cost, discrete entropy, and KL against the product kernel,
// evaluated from consecutive-pair marginals. Intended for small and medium
// instances (O(N cells^3)).
inline Objective objective(const Problem& pr, const Potentials& pot) {
  const int M = pr.grid.cells();
  Objective obj;

  // forward fronts for every k (excluding a_k), stored
  std::vector<detail::Fronts> Fk(std::size_t(pr.N) + 1);
  detail::Fronts buf;
  detail::delta_rows(M, Fk[0]);
  for (int k = 1; k <= pr.N; ++k) {
    const double* scale = (k >= 2) ? pot.a[std::size_t(k - 2)].v.data() : nullptr;
    const int* scale_e = (k >= 2) ? pot.a_exp_ptr(std::size_t(k - 2)) : nullptr;
    detail::step_rows(pr, Fk[std::size_t(k - 1)], Fk[std::size_t(k)], scale, scale_e);
  }
  std::vector<detail::Fronts> G;
  detail::backward_fronts(pr, pot, G, buf);
  detail::Fronts GN;
  detail::endpoint_rows(pr, pot, GN);

  double cost = 0.0, kl = 0.0;
  const double log_norm = pr.kernel.log_norm_total();
  double sum_log_alpha = 0.0;
  constexpr int kNoExp = std::numeric_limits<int>::min();
  for (int k = 0; k < pr.N; ++k) {
    const double* ak = (k >= 1) ? pot.a[std::size_t(k - 1)].v.data() : nullptr;
    const int* ake = (k >= 1) ? pot.a_exp_ptr(std::size_t(k - 1)) : nullptr;
    const double* ak1 = (k + 1 <= pr.N - 1) ? pot.a[std::size_t(k)].v.data() : nullptr;
    const int* ak1e = (k + 1 <= pr.N - 1) ? pot.a_exp_ptr(std::size_t(k)) : nullptr;
    const detail::Fronts& Gnext = (k + 1 == pr.N) ? GN : G[std::size_t(k + 1)];
    // C(x,y) = sum_i0 Fk(i0,x) Gnext(i0,y)
    for (int x = 0; x < M; ++x) {
      const Point px = pr.grid.point(x);
      for (int y = 0; y < M; ++y) {
        double Kxy = 1.0;
        for (int ax = 0; ax < pr.grid.domain.dim; ++ax)
          Kxy *= pr.kernel.axes[std::size_t(ax)].banded_at(pr.grid.axis_index(x, ax),
                                                           pr.grid.axis_index(y, ax));
        if (Kxy == 0.0) continue;
        double C = 0.0;
        int Ce = kNoExp;
        for (int r = 0; r < M; ++r) {
          const double fv = Fk[std::size_t(k)].v[std::size_t(r) * M + x];
          const double gv = Gnext.v[std::size_t(r) * M + y];
          if (fv == 0.0 || gv == 0.0) continue;
          int ef = 0, eg = 0;
          const double t = std::frexp(fv, &ef) * std::frexp(gv, &eg);
          const int E = Fk[std::size_t(k)].e[std::size_t(r) * M + x] +
                        Gnext.e[std::size_t(r) * M + y] + ef + eg;
          if (Ce == kNoExp) {
            C = t;
            Ce = E;
          } else if (E >= Ce) {
            C = std::ldexp(C, Ce - E) + t;
            Ce = E;
          } else {
            C += std::ldexp(t, E - Ce);
          }
        }
        if (Ce == kNoExp) continue;
        double mass = C;
        int me = Ce;
        const auto merge = [&mass, &me](double f) {
          int e1 = 0, e2 = 0;
          mass = std::frexp(mass, &e1) * std::frexp(f, &e2);
          me += e1 + e2;
        };
        merge(Kxy);
        if (ak) {
          merge(ak[x]);
          if (ake) me += ake[x];
        }
        if (ak1) {
          merge(ak1[y]);
          if (ak1e) me += ak1e[y];
        }
        mass = std::ldexp(mass, me);
        if (mass == 0.0) continue;
        const double c = step_cost(pr, px, pr.grid.point(y));
        cost += mass * c;
        sum_log_alpha += mass * (-c / pr.eps - log_norm);
      }
    }
  }
  obj.transport_cost = cost;

  // kl = E[log b + sum log a_k] under the plan
  for (int k = 1; k <= pr.N - 1; ++k) {
    const Field marg = time_marginal(pr, pot, k);
    const double* ak = pot.a[std::size_t(k - 1)].v.data();
    const int* ake = pot.a_exp_ptr(std::size_t(k - 1));
    constexpr double ln2 = 0.6931471805599453;
    for (int x = 0; x < M; ++x)
      if (marg[x] > 0.0)
        kl += marg[x] * (std::log(ak[x]) + (ake ? ln2 * double(ake[x]) : 0.0));
  }
  if (pr.mode == EndpointMode::constraint) {
    // endpoint pair marginal is F_N (.) b
    for (int s = 0; s < M; ++s)
      for (int t = 0; t < M; ++t) {
        const double bst = GN.v[std::size_t(s) * M + t];
        const double fv = Fk[std::size_t(pr.N)].v[std::size_t(s) * M + t];
        if (bst <= 0.0 || fv <= 0.0) continue;
        constexpr double ln2 = 0.6931471805599453;
        int e1 = 0, e2 = 0;
        const double p = std::frexp(fv, &e1) * std::frexp(bst, &e2);
        const double mass = std::ldexp(p, Fk[std::size_t(pr.N)].e[std::size_t(s) * M + t] +
                                              GN.e[std::size_t(s) * M + t] + e1 + e2);
        if (mass > 0.0)
          kl += mass * (std::log(bst) + ln2 * double(GN.e[std::size_t(s) * M + t]));
      }
  } else if (pot.log_scale != 0.0) {
    double total = 0.0;
    for (int s = 0; s < M; ++s)
      for (int t = 0; t < M; ++t) {
        const double fv = Fk[std::size_t(pr.N)].v[std::size_t(s) * M + t];
        const double gv = GN.v[std::size_t(s) * M + t];
        if (fv == 0.0 || gv == 0.0) continue;
        int e1 = 0, e2 = 0;
        const double p = std::frexp(fv, &e1) * std::frexp(gv, &e2);
        total += std::ldexp(p, Fk[std::size_t(pr.N)].e[std::size_t(s) * M + t] +
                                   GN.e[std::size_t(s) * M + t] + e1 + e2);
      }
    kl += pot.log_scale * total;
  }
  obj.kl_to_alpha = kl;
  obj.entropy = kl + sum_log_alpha;
  return obj;
}

} // namespace gflow
