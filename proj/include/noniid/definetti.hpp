#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "noniid/clifford.hpp"
#include "noniid/ensemble.hpp"
#include "noniid/parallel.hpp"
#include "noniid/povm.hpp"
#include "noniid/stats.hpp"

namespace noniid {

// Monte Carlo estimate of one side-by-side comparison: measured-norm distance
// between a conditional block and its exact product reference, and the
// closed-form bound it must stay under. Natural log throughout.
struct DefinettiEstimate {
  double lhs_mean = 0;
  double std_error = 0;
  double rhs_bound = 0;
  int trials = 0;
  int N = 0, k = 0, d = 0;
  std::string family_id;
};

inline std::vector<BasisMeasurement> family_computational() {
  return {BasisMeasurement(Mat::Identity(2, 2))};
}

inline std::vector<BasisMeasurement> family_pauli3() {
  return pauli_basis_measurements();
}

inline std::vector<BasisMeasurement> family_clifford1() {
  std::vector<BasisMeasurement> out;
  for (const auto& u : single_qubit_cliffords()) out.push_back(BasisMeasurement(u));
  return out;
}

namespace definetti_detail {

using fastpath::BranchEnsemble;

// tab[(r * outcomes + x) * B + b] = tr(E_{r,x} sigma_b)
inline std::vector<double> outcome_table(const BranchEnsemble& e,
                                         const std::vector<Povm>& povms) {
  int X = povms.empty() ? 0 : povms[0].outcomes();
  std::vector<double> tab;
  tab.reserve(povms.size() * static_cast<std::size_t>(X) * e.B);
  for (const auto& p : povms) {
    auto part = fastpath::povm_table(e, p);
    tab.insert(tab.end(), part.begin(), part.end());
  }
  return tab;
}

// One trial of the randomized-local estimator on a branch ensemble.
// Measured block: m sites with devices drawn from the family law; test block:
// identity on the first site, k channels on the next k sites. Exact posterior
// conditioning; returns the measured trace norm of block minus product.
struct FastCtx {
  const BranchEnsemble* ens;
  const std::vector<double>* tab;
  int R, X;
  const std::vector<double>* law;  // empty = uniform
};

inline int draw_device(const FastCtx& c, Rng& rng) {
  if (!c.law || c.law->empty()) return uniform_int(rng, 0, c.R - 1);
  return static_cast<int>(sample_index(rng, *c.law));
}

inline double fast_trial(const FastCtx& c, int k, int n_measured, Rng& rng,
                         std::vector<double>& w, std::vector<Cplx>& scratch) {
  const auto& e = *c.ens;
  const auto& tab = *c.tab;
  const int d = e.d, B = e.B, X = c.X;
  w.assign(e.weights.begin(), e.weights.end());

  for (int site = 0; site < n_measured; ++site) {
    int r = draw_device(c, rng);
    // outcome distribution under current posterior
    double px[8];
    double tot = 0;
    for (int x = 0; x < X; ++x) {
      const double* col = tab.data() + (static_cast<long>(r) * X + x) * B;
      double s = 0;
      for (int b = 0; b < B; ++b) s += w[b] * col[b];
      px[x] = std::max(s, 0.0);
      tot += px[x];
    }
    double u = uniform01(rng) * tot;
    int x = X - 1;
    double acc = 0;
    for (int xx = 0; xx + 1 < X; ++xx) {
      acc += px[xx];
      if (u < acc) {
        x = xx;
        break;
      }
    }
    const double* col = tab.data() + (static_cast<long>(r) * X + x) * B;
    double norm = px[x];
    if (norm <= kProbFloor) {
      // null event: posterior convention is the maximally mixed fallback;
      // for the estimator this contributes a zero-probability path, keep
      // weights unchanged instead (cannot happen for valid states).
      continue;
    }
    for (int b = 0; b < B; ++b) w[b] *= col[b] / norm;
  }

  // test-block devices r_2..r_{k+1}
  int rdev[8];
  for (int i = 0; i < k; ++i) rdev[i] = draw_device(c, rng);

  // sbar = sum_b w_b sigma_b ; pbar_i(x) = sum_b w_b tab[r_i][x][b]
  const int dd = d * d;
  std::vector<Cplx>& acc = scratch;
  long tuples = 1;
  for (int i = 0; i < k; ++i) tuples *= X;
  acc.assign((tuples + 1) * dd, Cplx(0, 0));
  Cplx* sbar = acc.data() + tuples * dd;
  std::vector<double> pbar(static_cast<std::size_t>(k) * X, 0.0);

  for (int b = 0; b < B; ++b) {
    double wb = w[b];
    if (wb <= 0) continue;
    const Cplx* f = e.factor(b);
    for (int i = 0; i < dd; ++i) sbar[i] += wb * f[i];
    for (int i = 0; i < k; ++i) {
      const double* col = tab.data() + (static_cast<long>(rdev[i]) * X) * B + b;
      for (int x = 0; x < X; ++x) pbar[i * X + x] += wb * col[static_cast<long>(x) * B];
    }
    // walk tuples with an odometer, maintaining the running product
    double prod[9];
    prod[0] = wb;
    int digit[8] = {0};
    for (int i = 0; i < k; ++i)
      prod[i + 1] = prod[i] * tab[(static_cast<long>(rdev[i]) * X + 0) * B + b];
    for (long t = 0;;) {
      double cb = prod[k];
      Cplx* dst = acc.data() + t * dd;
      for (int i = 0; i < dd; ++i) dst[i] += cb * f[i];
      // increment odometer (last digit fastest)
      int pos = k - 1;
      while (pos >= 0) {
        if (++digit[pos] < X) break;
        digit[pos] = 0;
        --pos;
      }
      if (pos < 0) break;
      for (int i = pos; i < k; ++i)
        prod[i + 1] = prod[i] * tab[(static_cast<long>(rdev[i]) * X + digit[i]) * B + b];
      t = 0;
      for (int i = 0; i < k; ++i) t = t * X + digit[i];
    }
  }

  // subtract product reference and sum trace norms
  double lhs = 0;
  Cplx blk[64];
  int digit[8] = {0};
  for (long t = 0; t < tuples; ++t) {
    double coeff = 1.0;
    for (int i = 0; i < k; ++i) coeff *= pbar[i * X + digit[i]];
    const Cplx* m = acc.data() + t * dd;
    for (int i = 0; i < dd; ++i) blk[i] = m[i] - coeff * sbar[i];
    lhs += fastpath::trace_norm_small(blk, d);
    int pos = k - 1;
    while (pos >= 0) {
      if (++digit[pos] < X) break;
      digit[pos] = 0;
      --pos;
    }
  }
  return lhs;
}

}  // namespace definetti_detail

// Randomized-local estimator: Monte Carlo over (l, devices, outcomes) of
//   || id (x) Lambda_{r_2} .. Lambda_{r_{k+1}} ( rho_w^{A_1..A_{k+1}}
//      - (rho_w^{A_N})^{(x)(k+1)} ) ||_1
// where w comes from measuring sites l+1..k+N/2 with family devices.
// RHS = sqrt(4 k^2 ln(d) / N).
inline DefinettiEstimate randomized_definetti_lhs(const MultipartiteState& state,
                                                  const MeasurementFamily& family,
                                                  int k, int trials, Rng& rng) {
  const int N = state.n_sites;
  if (k < 1 || 2 * k >= N)
    throw std::invalid_argument("randomized de Finetti requires 1 <= k < N/2");
  const int M = N / 2;
  const int d = state.site_dim;

  DefinettiEstimate est;
  est.N = N;
  est.k = k;
  est.d = d;
  est.trials = trials;
  est.family_id = family.id;
  est.rhs_bound = std::sqrt(4.0 * k * k * std::log(static_cast<double>(d)) / N);

  std::uint64_t master = rng();
  std::vector<double> samples(trials, 0.0);

  if (fastpath::site_uniform(state)) {
    auto ens = fastpath::make_ensemble(state);
    std::vector<Povm> povms;
    for (const auto& m : family.members) povms.push_back(m.to_povm());
    auto tab = definetti_detail::outcome_table(ens, povms);
    if (!povms.empty() && povms[0].outcomes() > 8)
      throw std::invalid_argument("randomized_definetti_lhs: outcome capacity");
    definetti_detail::FastCtx ctx{&ens, &tab, static_cast<int>(povms.size()),
                                  povms.empty() ? 0 : povms[0].outcomes(),
                                  &family.law};
    parallel_for(trials, [&](std::size_t t) {
      thread_local std::vector<double> w;
      thread_local std::vector<Cplx> scratch;
      Rng trng = derive_rng(master, "rlocal", t);
      int l = k + 1 + uniform_int(trng, 0, M - 1);
      int m_measured = k + M - l;
      samples[t] =
          definetti_detail::fast_trial(ctx, k, m_measured, trng, w, scratch);
    });
  } else {
    // dense path: exact sequential conditioning on the full density matrix
    for (int t = 0; t < trials; ++t) {
      Rng trng = derive_rng(master, "rlocal", t);
      int l = k + 1 + uniform_int(trng, 0, M - 1);
      MultipartiteState cur = state;
      // measured block is sites l+1..k+N/2 (1-based); removing from the top
      // keeps the remaining 0-based indices stable
      for (int site = k + M - 1; site >= l; --site) {
        int r = family.law.empty()
                    ? uniform_int(trng, 0, family.size() - 1)
                    : static_cast<int>(sample_index(trng, family.law));
        auto povm = family.members[r].to_povm();
        auto [x, cond] = sample_outcome(povm, cur, site, trng);
        cur = std::move(cond.post_state);
      }
      // test-block channels
      std::vector<Povm> chans;
      for (int i = 0; i < k; ++i) {
        int r = family.law.empty()
                    ? uniform_int(trng, 0, family.size() - 1)
                    : static_cast<int>(sample_index(trng, family.law));
        chans.push_back(family.members[r].to_povm());
      }
      Mat sbar = reduced(cur, cur.n_sites - 1).rho;
      // enumerate outcome tuples on sites 1..k
      long tuples = 1;
      for (int i = 0; i < k; ++i) tuples *= d;
      double lhs = 0;
      std::vector<int> sites(k);
      for (int i = 0; i < k; ++i) sites[i] = i + 1;
      for (long t2 = 0; t2 < tuples; ++t2) {
        long r2 = t2;
        std::vector<int> xs(k);
        for (int i = k - 1; i >= 0; --i) {
          xs[i] = static_cast<int>(r2 % d);
          r2 /= d;
        }
        std::vector<Mat> effs;
        double coeff = 1.0;
        for (int i = 0; i < k; ++i) {
          effs.push_back(chans[i].elements[xs[i]]);
          coeff *= apply_channel(chans[i], reduced(cur, sites[i]))[xs[i]];
        }
        auto cr = condition_on_outcome_multi(cur, sites, tensor(effs));
        Mat blockM;
        if (cr.probability <= kProbFloor)
          blockM = Mat::Zero(d, d);
        else
          blockM = cr.probability * reduced(cr.post_state, 0).rho;
        lhs += trace_norm(symmetrize(blockM - coeff * sbar));
      }
      samples[t] = lhs;
    }
  }

  RunningStat rs;
  for (double x : samples) rs.add(x);
  est.lhs_mean = rs.mean();
  est.std_error = rs.std_error();
  return est;
}

// (gF)-style estimator with a fixed informationally complete device:
// E_{l, w ~ mdist^(l-k)} || rho_w^{A_1..A_k} - (rho_w^{A_1})^{(x)k} ||_1
// in the plain trace norm. RHS = 2 sqrt(2 k^3 d^2 ln(d) / N).
inline DefinettiEstimate gf_lhs(const MultipartiteState& state, const Povm& m_dist,
                                int k, int trials, Rng& rng) {
  const int N = state.n_sites;
  if (k < 1 || 2 * k >= N) throw std::invalid_argument("gf_lhs: 1 <= k < N/2");
  const int M = N / 2;
  const int d = state.site_dim;
  long block_dim = 1;
  for (int i = 0; i < k; ++i) {
    block_dim *= d;
    if (block_dim > 64) throw std::invalid_argument("gf_lhs: d^k block too large");
  }

  DefinettiEstimate est;
  est.N = N;
  est.k = k;
  est.d = d;
  est.trials = trials;
  est.family_id = "mdist";
  est.rhs_bound =
      2.0 * std::sqrt(2.0 * k * k * k * d * d * std::log(static_cast<double>(d)) / N);

  std::uint64_t master = rng();
  std::vector<double> samples(trials, 0.0);

  if (!fastpath::site_uniform(state))
    throw std::invalid_argument("gf_lhs: product-mixture input required");

  auto ens = fastpath::make_ensemble(state);
  std::vector<Povm> povms{m_dist};
  auto tab = definetti_detail::outcome_table(ens, povms);
  const int X = m_dist.outcomes();
  const int B = ens.B;

  parallel_for(trials, [&](std::size_t t) {
    Rng trng = derive_rng(master, "gf", t);
    int l = k + 1 + uniform_int(trng, 0, M - 1);
    int m_measured = l - k;
    std::vector<double> w(ens.weights);
    for (int site = 0; site < m_measured; ++site) {
      std::vector<double> px(X, 0.0);
      for (int x = 0; x < X; ++x) {
        const double* col = tab.data() + static_cast<long>(x) * B;
        double s = 0;
        for (int b = 0; b < B; ++b) s += w[b] * col[b];
        px[x] = std::max(s, 0.0);
      }
      int x = static_cast<int>(sample_index(trng, px));
      const double* col = tab.data() + static_cast<long>(x) * B;
      double norm = px[x];
      if (norm <= kProbFloor) continue;
      for (int b = 0; b < B; ++b) w[b] *= col[b] / norm;
    }
    // dense k-fold block vs product of the conditional marginal
    Mat sbar = Mat::Zero(d, d);
    for (int b = 0; b < B; ++b) {
      if (w[b] <= 0) continue;
      Mat f(d, d);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) f(i, j) = ens.factor(b)[i * d + j];
      sbar += w[b] * f;
    }
    Mat block = Mat::Zero(block_dim, block_dim);
    for (int b = 0; b < B; ++b) {
      if (w[b] <= 0) continue;
      Mat f(d, d);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) f(i, j) = ens.factor(b)[i * d + j];
      Mat pw = f;
      for (int i = 1; i < k; ++i) pw = tensor(pw, f);
      block += w[b] * pw;
    }
    Mat ref = sbar;
    for (int i = 1; i < k; ++i) ref = tensor(ref, sbar);
    samples[t] = trace_norm(symmetrize(block - ref));
  });

  RunningStat rs;
  for (double x : samples) rs.add(x);
  est.lhs_mean = rs.mean();
  est.std_error = rs.std_error();
  return est;
}

// ---- closed-form worked example: Haar mixture, binary device ----

struct AppendixBRecord {
  int l = 0, w_weight = 0, k = 0;
  double p_star = 0;
  Mat analytic_reduced;   // diag(1 - p*, p*)
  Mat numeric_reduced;    // quadrature of the Beta-weighted integrand
  double lhs_numeric = 0;
  double analytic_bound = 0;  // sqrt(9 k ln(l+1) / l)
};

// Gauss-Legendre nodes/weights on [0, 1].
inline void gauss_legendre_01(int n, std::vector<double>& nodes,
                              std::vector<double>& weights) {
  nodes.resize(n);
  weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (x * p0 - p1) / (x * x - 1.0);
      double dx = p0 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    double wgt = 2.0 / ((1.0 - x * x) * pp * pp);
    nodes[i] = 0.5 * (1.0 - x);
    nodes[n - 1 - i] = 0.5 * (1.0 + x);
    weights[i] = 0.5 * wgt;
    weights[n - 1 - i] = 0.5 * wgt;
  }
}

inline AppendixBRecord appendix_b_analytic(int l, int w_weight, int k) {
  if (l < 1 || w_weight < 0 || w_weight > l)
    throw std::invalid_argument("appendix_b: need 0 <= |w| <= l, l >= 1");
  AppendixBRecord r;
  r.l = l;
  r.w_weight = w_weight;
  r.k = k;
  r.p_star = (w_weight + 1.0) / (l + 2.0);
  r.analytic_reduced = Mat::Zero(2, 2);
  r.analytic_reduced(0, 0) = 1.0 - r.p_star;
  r.analytic_reduced(1, 1) = r.p_star;
  r.analytic_bound = std::sqrt(9.0 * k * std::log(l + 1.0) / l);
  return r;
}

inline AppendixBRecord appendix_b_numeric(int l, int w_weight, int k,
                                          int quad_points) {
  if (quad_points < 64) throw std::invalid_argument("appendix_b: quad_points >= 64");
  AppendixBRecord r = appendix_b_analytic(l, w_weight, k);
  std::vector<double> xs, ws;
  gauss_legendre_01(quad_points, xs, ws);
  // Beta(w+1, l-w+1) density via logs for large l
  double logc = std::log(l + 1.0) + std::lgamma(l + 1.0) -
                std::lgamma(w_weight + 1.0) - std::lgamma(l - w_weight + 1.0);
  auto density = [&](double p) {
    if (p <= 0.0 || p >= 1.0)
      return (w_weight == 0 && p <= 0.0) || (w_weight == l && p >= 1.0)
                 ? std::exp(logc)
                 : 0.0;
    return std::exp(logc + (l - w_weight) * std::log1p(-p) +
                    w_weight * std::log(p));
  };

  double m00 = 0, m11 = 0;
  for (int i = 0; i < quad_points; ++i) {
    double p = xs[i], wq = ws[i] * density(p);
    m00 += wq * (1.0 - p);
    m11 += wq * p;
  }
  r.numeric_reduced = Mat::Zero(2, 2);
  r.numeric_reduced(0, 0) = m00;
  r.numeric_reduced(1, 1) = m11;

  // all matrices diagonal: trace norm = l1 over the 2^k diagonal entries
  double lhs = 0;
  long tuples = 1L << k;
  for (long z = 0; z < tuples; ++z) {
    double integral = 0;
    for (int i = 0; i < quad_points; ++i) {
      double p = xs[i], wq = ws[i] * density(p);
      double prod = 1.0;
      for (int q = 0; q < k; ++q) prod *= (z >> (k - 1 - q) & 1) ? p : (1.0 - p);
      integral += wq * prod;
    }
    double ref = 1.0;
    for (int q = 0; q < k; ++q)
      ref *= (z >> (k - 1 - q) & 1) ? r.p_star : (1.0 - r.p_star);
    lhs += std::abs(integral - ref);
  }
  r.lhs_numeric = lhs;
  return r;
}

}  // namespace noniid
