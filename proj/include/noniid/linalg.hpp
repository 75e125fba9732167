#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <complex>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "noniid/rng.hpp"

namespace noniid {

using Cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;

constexpr double kHermTol = 1e-12;
constexpr double kEvalFloor = -1e-10;
constexpr double kTraceTol = 1e-10;

inline Mat identity(int d) { return Mat::Identity(d, d); }

inline bool is_hermitian(const Mat& m, double tol = kHermTol) {
  if (m.rows() != m.cols()) return false;
  return (m - m.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

// Absorb roundoff before eigen-solving.
inline Mat symmetrize(const Mat& m) { return 0.5 * (m + m.adjoint()); }

inline void require_hermitian(const Mat& m, double tol = kHermTol) {
  if (!is_hermitian(m, tol)) throw std::invalid_argument("matrix is not Hermitian");
}

inline Mat tensor(const Mat& a, const Mat& b) {
  Mat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline Mat tensor(const std::vector<Mat>& factors) {
  if (factors.empty()) return Mat::Identity(1, 1);
  Mat out = factors.front();
  for (std::size_t i = 1; i < factors.size(); ++i) out = tensor(out, factors[i]);
  return out;
}

// One positive integer per site; product must match the operator dimension.
struct SubsystemDims {
  std::vector<int> dims;

  explicit SubsystemDims(std::vector<int> d) : dims(std::move(d)) {
    for (int x : dims)
      if (x < 1) throw std::invalid_argument("subsystem dims must be positive");
  }
  static SubsystemDims uniform(int site_dim, int n_sites) {
    return SubsystemDims(std::vector<int>(n_sites, site_dim));
  }
  int n_sites() const { return static_cast<int>(dims.size()); }
  long total() const {
    return std::accumulate(dims.begin(), dims.end(), 1L,
                           [](long a, int b) { return a * b; });
  }
};

// Partial trace keeping the sites in `keep` (0-based), row-major site order.
inline Mat partial_trace(const Mat& m, const SubsystemDims& dims,
                         const std::vector<int>& keep) {
  const int n = dims.n_sites();
  if (m.rows() != m.cols() || dims.total() != m.rows())
    throw std::invalid_argument("partial_trace: dims inconsistent with matrix");
  std::vector<bool> keep_mask(n, false);
  for (int s : keep) {
    if (s < 0 || s >= n) throw std::invalid_argument("partial_trace: bad site index");
    keep_mask[s] = true;
  }
  long dk = 1, dt = 1;
  for (int s = 0; s < n; ++s) (keep_mask[s] ? dk : dt) *= dims.dims[s];

  // strides of each site in the full index
  std::vector<long> stride(n, 1);
  for (int s = n - 2; s >= 0; --s) stride[s] = stride[s + 1] * dims.dims[s + 1];

  std::vector<int> keep_sites, traced_sites;
  for (int s = 0; s < n; ++s) (keep_mask[s] ? keep_sites : traced_sites).push_back(s);

  auto unrank = [&](long r, const std::vector<int>& sites, std::vector<int>& digits) {
    for (int i = static_cast<int>(sites.size()) - 1; i >= 0; --i) {
      digits[i] = static_cast<int>(r % dims.dims[sites[i]]);
      r /= dims.dims[sites[i]];
    }
  };

  Mat out = Mat::Zero(dk, dk);
  std::vector<int> kd_i(keep_sites.size()), kd_j(keep_sites.size()), td(traced_sites.size());
  for (long i = 0; i < dk; ++i) {
    unrank(i, keep_sites, kd_i);
    for (long j = 0; j < dk; ++j) {
      unrank(j, keep_sites, kd_j);
      Cplx acc = 0.0;
      for (long t = 0; t < dt; ++t) {
        unrank(t, traced_sites, td);
        long row = 0, col = 0;
        for (std::size_t u = 0; u < keep_sites.size(); ++u) {
          row += stride[keep_sites[u]] * kd_i[u];
          col += stride[keep_sites[u]] * kd_j[u];
        }
        for (std::size_t u = 0; u < traced_sites.size(); ++u) {
          row += stride[traced_sites[u]] * td[u];
          col += stride[traced_sites[u]] * td[u];
        }
        acc += m(row, col);
      }
      out(i, j) = acc;
    }
  }
  return out;
}

// Ascending eigenvalues of a Hermitian matrix.
inline std::vector<double> hermitian_eigenvalues(const Mat& m) {
  require_hermitian(m, 1e-9);
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m), Eigen::EigenvaluesOnly);
  std::vector<double> ev(es.eigenvalues().data(),
                         es.eigenvalues().data() + es.eigenvalues().size());
  return ev;
}

inline double trace_norm(const Mat& m) {
  if (m.rows() == 1) return std::abs(m(0, 0).real());
  if (m.rows() == 2) {
    // closed form for 2x2 Hermitian: eigenvalues t/2 +- sqrt(det discriminant)
    double a = m(0, 0).real(), d = m(1, 1).real();
    double off = std::norm(m(0, 1));
    double h = 0.5 * (a - d);
    double r = std::sqrt(h * h + off);
    double t = 0.5 * (a + d);
    return std::abs(t + r) + std::abs(t - r);
  }
  double s = 0;
  for (double ev : hermitian_eigenvalues(m)) s += std::abs(ev);
  return s;
}

struct HermitianOperator {
  Mat entries;

  explicit HermitianOperator(Mat m) : entries(std::move(m)) {
    if (entries.rows() != entries.cols() || entries.rows() < 1)
      throw std::invalid_argument("operator must be square, dim >= 1");
    require_hermitian(entries);
  }
  int dim() const { return static_cast<int>(entries.rows()); }
};

struct DensityMatrix {
  Mat rho;

  DensityMatrix() : rho(Mat::Identity(1, 1)) {}
  explicit DensityMatrix(Mat m, bool validate = true) : rho(std::move(m)) {
    if (validate) {
      require_hermitian(rho, 1e-10);
      if (std::abs(rho.trace().real() - 1.0) > kTraceTol ||
          std::abs(rho.trace().imag()) > kTraceTol)
        throw std::invalid_argument("density matrix trace != 1");
      Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(rho), Eigen::EigenvaluesOnly);
      if (es.eigenvalues().minCoeff() < kEvalFloor)
        throw std::invalid_argument("density matrix has negative eigenvalue");
    }
  }
  int dim() const { return static_cast<int>(rho.rows()); }
};

inline DensityMatrix maximally_mixed(int d) {
  return DensityMatrix(Mat::Identity(d, d) / static_cast<double>(d));
}

inline double fidelity_with_pure(const Vec& psi, const Mat& rho) {
  if (std::abs(psi.norm() - 1.0) > 1e-12)
    throw std::invalid_argument("fidelity_with_pure: state vector not normalized");
  Cplx v = (psi.adjoint() * rho * psi)(0, 0);
  if (std::abs(v.imag()) > 1e-12)
    throw std::invalid_argument("fidelity_with_pure: non-real overlap");
  return v.real();
}

inline double fidelity_with_pure(const Vec& psi, const DensityMatrix& rho) {
  return fidelity_with_pure(psi, rho.rho);
}

// ---- random inputs for tests and Monte Carlo ----

inline Vec haar_unit_vector(int d, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vec v(d);
  for (int i = 0; i < d; ++i) v(i) = Cplx(g(rng), g(rng));
  return v / v.norm();
}

inline Mat random_hermitian(int d, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, 1.0);
  Mat m(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = Cplx(g(rng), g(rng));
  return symmetrize(m) * scale;
}

// Hilbert-Schmidt random density matrix (Ginibre).
inline DensityMatrix random_density(int d, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Mat gmat(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) gmat(i, j) = Cplx(g(rng), g(rng));
  Mat w = gmat * gmat.adjoint();
  w /= w.trace().real();
  return DensityMatrix(symmetrize(w));
}

inline Vec basis_vector(int d, int i) {
  Vec v = Vec::Zero(d);
  v(i) = 1.0;
  return v;
}

inline Mat projector(const Vec& v) { return v * v.adjoint(); }

// Pauli matrices
inline Mat pauli_x() {
  Mat m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}
inline Mat pauli_y() {
  Mat m(2, 2);
  m << Cplx(0, 0), Cplx(0, -1), Cplx(0, 1), Cplx(0, 0);
  return m;
}
inline Mat pauli_z() {
  Mat m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}

}  // namespace noniid
