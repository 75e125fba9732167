#pragma once

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace noniid {

// Joint probability table over (X_1, ..., X_k, C); the last axis is the
// conditioning variable. Flat storage, row-major, last axis fastest.
struct ProbTable {
  std::vector<int> dims;  // k+1 entries, last = |C|
  std::vector<double> p;  // product(dims) entries, sums to 1

  ProbTable(std::vector<int> d, std::vector<double> probs)
      : dims(std::move(d)), p(std::move(probs)) {
    long total = 1;
    for (int x : dims) {
      if (x < 1) throw std::invalid_argument("table axis must be positive");
      total *= x;
    }
    if (static_cast<long>(p.size()) != total)
      throw std::invalid_argument("table size mismatch");
    double s = 0;
    for (double v : p) {
      if (v < -1e-15) throw std::invalid_argument("negative probability");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-10)
      throw std::invalid_argument("table does not sum to 1");
  }

  int vars() const { return static_cast<int>(dims.size()) - 1; }
};

namespace info_detail {

inline double h_nats(const std::vector<double>& p) {
  double h = 0;
  for (double x : p)
    if (x > 0) h -= x * std::log(x);
  return h;
}

}  // namespace info_detail

// sum_c p(c) [ sum_i H(X_i | c) - H(X_1..X_k | c) ], in nats.
inline double conditional_mutual_information(const ProbTable& t) {
  const int k = t.vars();
  if (k < 1) throw std::invalid_argument("need at least one variable");
  const int nc = t.dims.back();
  long joint_size = 1;
  for (int i = 0; i < k; ++i) joint_size *= t.dims[i];

  double total = 0;
  for (int c = 0; c < nc; ++c) {
    // conditional joint p(x|c) and p(c)
    std::vector<double> joint(joint_size, 0.0);
    double pc = 0;
    for (long idx = 0; idx < joint_size; ++idx) {
      double v = t.p[idx * nc + c];
      joint[idx] = v;
      pc += v;
    }
    if (pc <= 0) continue;
    for (auto& v : joint) v /= pc;

    double sum_marg = 0;
    long stride = joint_size;
    for (int i = 0; i < k; ++i) {
      stride /= t.dims[i];
      std::vector<double> marg(t.dims[i], 0.0);
      for (long idx = 0; idx < joint_size; ++idx)
        marg[(idx / stride) % t.dims[i]] += joint[idx];
      sum_marg += info_detail::h_nats(marg);
    }
    total += pc * (sum_marg - info_detail::h_nats(joint));
  }
  return total;
}

// Merge the first `group` variables into one axis (for chain-rule checks).
inline ProbTable merge_leading(const ProbTable& t, int group) {
  if (group < 1 || group > t.vars()) throw std::invalid_argument("bad group size");
  long merged = 1;
  for (int i = 0; i < group; ++i) merged *= t.dims[i];
  std::vector<int> nd;
  nd.push_back(static_cast<int>(merged));
  for (std::size_t i = group; i < t.dims.size(); ++i) nd.push_back(t.dims[i]);
  return ProbTable(std::move(nd), t.p);
}

// Drop the last variable axis before C by marginalizing it out.
inline ProbTable marginalize_last_var(const ProbTable& t) {
  const int k = t.vars();
  if (k < 2) throw std::invalid_argument("need two variables to marginalize");
  const int nc = t.dims.back();
  const int dlast = t.dims[k - 1];
  long outer = 1;
  for (int i = 0; i < k - 1; ++i) outer *= t.dims[i];
  std::vector<double> np(outer * nc, 0.0);
  for (long o = 0; o < outer; ++o)
    for (int v = 0; v < dlast; ++v)
      for (int c = 0; c < nc; ++c)
        np[o * nc + c] += t.p[(o * dlast + v) * nc + c];
  std::vector<int> nd(t.dims.begin(), t.dims.end() - 2);
  nd.push_back(nc);
  return ProbTable(std::move(nd), std::move(np));
}

}  // namespace noniid
