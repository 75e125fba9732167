#pragma once

#include <vector>

#include "noniid/povm.hpp"

namespace noniid {
namespace fastpath {

// Contiguous view of a site-uniform product mixture: branch weights plus one
// single-site factor per branch (flattened row-major, d*d complex each).
// Conditioning such a state on single-site outcomes only reweights branches,
// so wrapper runs reduce to posterior updates over this view.
struct BranchEnsemble {
  int d = 0;
  int B = 0;
  std::vector<double> weights;
  std::vector<Cplx> sigma;  // B * d * d

  const Cplx* factor(int b) const {
    return sigma.data() + static_cast<long>(b) * d * d;
  }
  Mat factor_mat(int b) const {
    Mat f(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) f(i, j) = factor(b)[i * d + j];
    return f;
  }
};

inline bool site_uniform(const MultipartiteState& s) {
  if (s.is_dense()) return false;
  for (const auto& b : s.mixture_rep().branches)
    for (std::size_t i = 1; i < b.factors.size(); ++i)
      if ((b.factors[i] - b.factors[0]).cwiseAbs().maxCoeff() > 0) return false;
  return true;
}

inline BranchEnsemble make_ensemble(const MultipartiteState& s) {
  BranchEnsemble e;
  e.d = s.site_dim;
  const auto& branches = s.mixture_rep().branches;
  e.B = static_cast<int>(branches.size());
  e.weights.reserve(e.B);
  e.sigma.resize(static_cast<long>(e.B) * e.d * e.d);
  for (int b = 0; b < e.B; ++b) {
    e.weights.push_back(branches[b].weight);
    const Mat& f = branches[b].factors[0];
    for (int i = 0; i < e.d; ++i)
      for (int j = 0; j < e.d; ++j)
        e.sigma[(static_cast<long>(b) * e.d + i) * e.d + j] = f(i, j);
  }
  return e;
}

// table[x * B + b] = tr(E_x sigma_b)
inline std::vector<double> povm_table(const BranchEnsemble& e, const Povm& povm) {
  const int X = povm.outcomes();
  std::vector<double> tab(static_cast<long>(X) * e.B);
  for (int x = 0; x < X; ++x) {
    const Mat& eff = povm.elements[x];
    for (int b = 0; b < e.B; ++b) {
      const Cplx* f = e.factor(b);
      Cplx tr = 0;
      for (int i = 0; i < e.d; ++i)
        for (int j = 0; j < e.d; ++j) tr += eff(j, i) * f[i * e.d + j];
      tab[static_cast<long>(x) * e.B + b] = tr.real();
    }
  }
  return tab;
}

// Samples one outcome under the posterior `w` and updates it in place.
inline int sample_posterior_outcome(std::vector<double>& w,
                                    const std::vector<double>& table, int X,
                                    Rng& rng) {
  const int B = static_cast<int>(w.size());
  double px[16];
  double tot = 0;
  for (int x = 0; x < X; ++x) {
    const double* col = table.data() + static_cast<long>(x) * B;
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
  const double* col = table.data() + static_cast<long>(x) * B;
  if (px[x] > 1e-300) {
    double inv = 1.0 / px[x];
    for (int b = 0; b < B; ++b) w[b] *= col[b] * inv;
  }
  return x;
}

inline Mat posterior_mean(const BranchEnsemble& e, const std::vector<double>& w) {
  Mat out = Mat::Zero(e.d, e.d);
  for (int b = 0; b < e.B; ++b) {
    if (w[b] <= 0) continue;
    const Cplx* f = e.factor(b);
    for (int i = 0; i < e.d; ++i)
      for (int j = 0; j < e.d; ++j) out(i, j) += w[b] * f[i * e.d + j];
  }
  return out;
}

inline double trace_norm_small(const Cplx* m, int d) {
  if (d == 2) {
    double a = m[0].real(), dd = m[3].real();
    double off = std::norm(m[1]);
    double h = 0.5 * (a - dd), t = 0.5 * (a + dd);
    double r = std::sqrt(h * h + off);
    return std::abs(t + r) + std::abs(t - r);
  }
  Mat mm(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) mm(i, j) = m[i * d + j];
  return trace_norm(symmetrize(mm));
}

}  // namespace fastpath
}  // namespace noniid
