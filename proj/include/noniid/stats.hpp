#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace noniid {

// Streaming mean / standard error (Welford).
class RunningStat {
 public:
  void add(double x) {
    ++n_;
    double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }
  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double std_error() const {
    return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
  }

 private:
  std::size_t n_ = 0;
  double mean_ = 0;
  double m2_ = 0;
};

struct Interval {
  double lo = 0, hi = 0;
  double halfwidth() const { return 0.5 * (hi - lo); }
};

// Wilson score interval for a binomial proportion.
inline Interval wilson_interval(std::size_t successes, std::size_t trials,
                                double z = 1.959963984540054) {
  if (trials == 0) return {0.0, 1.0};
  double n = static_cast<double>(trials);
  double p = static_cast<double>(successes) / n;
  double z2 = z * z;
  double denom = 1.0 + z2 / n;
  double center = (p + z2 / (2 * n)) / denom;
  double half = (z / denom) * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n));
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

// Regularized lower incomplete gamma P(a, x); series + continued fraction.
inline double regularized_gamma_p(double a, double x) {
  if (x < 0 || a <= 0) throw std::invalid_argument("gamma_p domain");
  if (x == 0) return 0.0;
  double gln = std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a, sum = 1.0 / a, del = sum;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - gln);
  }
  // Lentz continued fraction for Q(a,x)
  double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
  for (int i = 1; i <= 500; ++i) {
    double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  double q = std::exp(-x + a * std::log(x) - gln) * h;
  return 1.0 - q;
}

// Survival function of a chi-square distribution with df degrees of freedom.
inline double chi2_sf(double stat, double df) {
  return 1.0 - regularized_gamma_p(df / 2.0, stat / 2.0);
}

// Goodness-of-fit chi-square p-value against expected counts.
inline double chi2_gof_pvalue(const std::vector<double>& observed,
                              const std::vector<double>& expected) {
  if (observed.size() != expected.size() || observed.empty())
    throw std::invalid_argument("chi2: size mismatch");
  double stat = 0;
  std::size_t df = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (expected[i] <= 0) continue;
    double d = observed[i] - expected[i];
    stat += d * d / expected[i];
    ++df;
  }
  if (df < 2) return 1.0;
  return chi2_sf(stat, static_cast<double>(df - 1));
}

// Two-sample chi-square on binned counts (same bin edges for both samples).
inline double chi2_two_sample_pvalue(const std::vector<double>& a,
                                     const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("chi2: size mismatch");
  double na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += a[i];
    nb += b[i];
  }
  double stat = 0;
  std::size_t df = 0;
  double ka = std::sqrt(nb / na), kb = std::sqrt(na / nb);
  for (std::size_t i = 0; i < a.size(); ++i) {
    double tot = a[i] + b[i];
    if (tot <= 0) continue;
    double d = ka * a[i] - kb * b[i];
    stat += d * d / tot;
    ++df;
  }
  if (df < 2) return 1.0;
  return chi2_sf(stat, static_cast<double>(df - 1));
}

// Bin a scalar sample into equiprobable bins of the pooled sample; merges
// low-count tails so chi-square assumptions hold.
inline std::pair<std::vector<double>, std::vector<double>> bin_two_samples(
    std::vector<double> a, std::vector<double> b, int bins) {
  std::vector<double> pooled;
  pooled.reserve(a.size() + b.size());
  pooled.insert(pooled.end(), a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::sort(pooled.begin(), pooled.end());
  std::vector<double> edges;
  for (int i = 1; i < bins; ++i) {
    std::size_t idx = pooled.size() * static_cast<std::size_t>(i) / bins;
    edges.push_back(pooled[std::min(idx, pooled.size() - 1)]);
  }
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  auto count = [&](const std::vector<double>& v) {
    std::vector<double> c(edges.size() + 1, 0.0);
    for (double x : v) {
      std::size_t j = std::upper_bound(edges.begin(), edges.end(), x) - edges.begin();
      c[j] += 1.0;
    }
    return c;
  };
  return {count(a), count(b)};
}

// Lower-middle median: for even length returns element n/2-1 of the sorted
// sequence, deterministic and reproducible.
inline double median_lower(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of empty sequence");
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

}  // namespace noniid
