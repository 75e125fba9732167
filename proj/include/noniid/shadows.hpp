#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "noniid/povm.hpp"
#include "noniid/stats.hpp"

namespace noniid {

// Unbiased single-measurement state estimate; not PSD in general, trace 1.
struct ShadowSnapshot {
  Mat matrix;
  std::string basis_label;
  int outcome = 0;
};

// (d+1) U^dag |v><v| U - I
inline ShadowSnapshot global_snapshot(const BasisMeasurement& u, int outcome, int d) {
  if (outcome < 0 || outcome >= d)
    throw std::invalid_argument("global_snapshot: outcome out of range");
  Vec col = u.unitary.adjoint().col(outcome);
  ShadowSnapshot s;
  s.matrix = (d + 1.0) * projector(col) - Mat::Identity(d, d);
  s.basis_label = "global";
  s.outcome = outcome;
  return s;
}

// Tensor of per-qubit inverses (3 u^dag |v><v| u - I).
inline ShadowSnapshot local_snapshot(
    const std::vector<std::pair<Mat, int>>& per_qubit) {
  if (per_qubit.empty()) throw std::invalid_argument("local_snapshot: empty input");
  Mat acc = Mat::Identity(1, 1);
  int packed = 0;
  for (const auto& [u, v] : per_qubit) {
    Vec col = u.adjoint().col(v);
    acc = tensor(acc, 3.0 * projector(col) - Mat::Identity(2, 2));
    packed = packed * 2 + v;
  }
  ShadowSnapshot s;
  s.matrix = std::move(acc);
  s.basis_label = "local";
  s.outcome = packed;
  return s;
}

// Exact expectation of the snapshot estimator over bases and outcomes; the
// independent enumeration oracle for unbiasedness (dim-2 only).
inline Mat shadow_mean_exact(const DensityMatrix& rho,
                             const std::vector<BasisMeasurement>& bases,
                             const std::vector<double>& weights) {
  if (rho.dim() != 2) throw std::invalid_argument("shadow_mean_exact: dim 2 only");
  if (bases.size() != weights.size())
    throw std::invalid_argument("shadow_mean_exact: weight count mismatch");
  Mat acc = Mat::Zero(2, 2);
  for (std::size_t b = 0; b < bases.size(); ++b) {
    for (int v = 0; v < 2; ++v) {
      Vec col = bases[b].unitary.adjoint().col(v);
      double p = (projector(col) * rho.rho).trace().real();
      acc += weights[b] * p * global_snapshot(bases[b], v, 2).matrix;
    }
  }
  return acc;
}

// Median of K group means; trailing remainder is dropped (count reported via
// dropped_out when provided).
inline double median_of_means(const std::vector<double>& values, int K,
                              int* dropped_out = nullptr) {
  if (values.empty()) throw std::invalid_argument("median_of_means: empty input");
  if (K < 1) throw std::invalid_argument("median_of_means: K >= 1");
  std::size_t group = values.size() / static_cast<std::size_t>(K);
  if (group == 0) throw std::invalid_argument("median_of_means: K too large");
  if (dropped_out) *dropped_out = static_cast<int>(values.size() - group * K);
  std::vector<double> means(K, 0.0);
  for (int g = 0; g < K; ++g) {
    double s = 0;
    for (std::size_t i = 0; i < group; ++i) s += values[g * group + i];
    means[g] = s / static_cast<double>(group);
  }
  return median_lower(means);
}

inline std::vector<double> estimate_expectations(
    const std::vector<ShadowSnapshot>& snapshots,
    const std::vector<Mat>& observables, int K) {
  std::vector<double> out;
  out.reserve(observables.size());
  for (const auto& o : observables) {
    std::vector<double> vals;
    vals.reserve(snapshots.size());
    for (const auto& s : snapshots) vals.push_back((s.matrix * o).trace().real());
    out.push_back(median_of_means(vals, K));
  }
  return out;
}

// ---- line-delimited snapshot records for replay ----

inline void write_snapshot_records(std::ostream& os,
                                   const std::vector<ShadowSnapshot>& snaps,
                                   bool with_matrix = false) {
  os.precision(17);
  for (const auto& s : snaps) {
    os << s.basis_label << ' ' << s.outcome;
    if (with_matrix) {
      os << ' ' << s.matrix.rows();
      for (long i = 0; i < s.matrix.rows(); ++i)
        for (long j = 0; j < s.matrix.cols(); ++j)
          os << ' ' << s.matrix(i, j).real() << ' ' << s.matrix(i, j).imag();
    }
    os << '\n';
  }
}

inline std::vector<ShadowSnapshot> read_snapshot_records(std::istream& is) {
  std::vector<ShadowSnapshot> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    ShadowSnapshot s;
    ls >> s.basis_label >> s.outcome;
    long dim = 0;
    if (ls >> dim) {
      s.matrix = Mat::Zero(dim, dim);
      for (long i = 0; i < dim; ++i)
        for (long j = 0; j < dim; ++j) {
          double re, im;
          ls >> re >> im;
          s.matrix(i, j) = Cplx(re, im);
        }
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace noniid
