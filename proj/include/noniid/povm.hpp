#pragma once

#include <string>
#include <vector>

#include "noniid/linalg.hpp"
#include "noniid/states.hpp"

namespace noniid {

struct Povm {
  std::vector<Mat> elements;
  std::vector<std::string> labels;

  int dim() const { return elements.empty() ? 0 : static_cast<int>(elements[0].rows()); }
  int outcomes() const { return static_cast<int>(elements.size()); }
};

struct PovmDiagnostics {
  bool ok = false;
  double min_eigenvalue = 0;       // most negative effect eigenvalue
  double completeness_error = 0;   // max-abs deviation of sum from identity
};

inline PovmDiagnostics validate_povm(const Povm& p, double tol = 1e-10) {
  PovmDiagnostics d;
  if (p.elements.empty()) return d;
  int dim = p.dim();
  Mat sum = Mat::Zero(dim, dim);
  double min_ev = 0;
  for (const auto& e : p.elements) {
    if (e.rows() != dim || !is_hermitian(e, 1e-9)) return d;
    auto ev = hermitian_eigenvalues(e);
    min_ev = std::min(min_ev, ev.front());
    sum += e;
  }
  d.min_eigenvalue = min_ev;
  d.completeness_error = (sum - Mat::Identity(dim, dim)).cwiseAbs().maxCoeff();
  d.ok = min_ev >= -1e-10 && d.completeness_error <= tol;
  return d;
}

// Basis measurement from a unitary: effects U^dag |v><v| U.
struct BasisMeasurement {
  Mat unitary;

  explicit BasisMeasurement(Mat u) : unitary(std::move(u)) {
    if ((unitary.adjoint() * unitary - Mat::Identity(unitary.rows(), unitary.cols()))
            .cwiseAbs()
            .maxCoeff() > 1e-10)
      throw std::invalid_argument("basis measurement: matrix is not unitary");
  }
  int dim() const { return static_cast<int>(unitary.rows()); }
  Povm to_povm() const {
    Povm p;
    for (int v = 0; v < dim(); ++v) {
      Vec col = unitary.adjoint().col(v);
      p.elements.push_back(projector(col));
      p.labels.push_back(std::to_string(v));
    }
    return p;
  }
};

// Outcome probabilities (tr(M_x rho))_x.
inline std::vector<double> apply_channel(const Povm& p, const Mat& rho) {
  if (rho.rows() != p.dim()) throw std::invalid_argument("apply_channel: dim mismatch");
  std::vector<double> out;
  out.reserve(p.elements.size());
  for (const auto& e : p.elements) out.push_back((e * rho).trace().real());
  return out;
}

inline std::vector<double> apply_channel(const Povm& p, const DensityMatrix& rho) {
  return apply_channel(p, rho.rho);
}

// Measures one site within the joint state; conditioning carries correlations.
inline std::pair<int, ConditionResult> sample_outcome(const Povm& p,
                                                      const MultipartiteState& s,
                                                      int site, Rng& rng) {
  auto marg = reduced(s, site);
  auto probs = apply_channel(p, marg);
  int x = static_cast<int>(sample_index(rng, probs));
  return {x, condition_on_outcome(s, site, p.elements[x], false)};
}

inline Povm computational_povm(int d) {
  Povm p;
  for (int i = 0; i < d; ++i) {
    p.elements.push_back(projector(basis_vector(d, i)));
    p.labels.push_back(std::to_string(i));
  }
  return p;
}

// 6-outcome qubit POVM {(1/3)|b,v><b,v| : b in {Z,X,Y}, v in {+,-}}.
// Ordering (Z+, Z-, X+, X-, Y+, Y-).
inline Povm pauli6_povm() {
  Povm p;
  const double s = 1.0 / std::sqrt(2.0);
  std::vector<std::pair<std::string, Vec>> basis;
  Vec zp = basis_vector(2, 0), zm = basis_vector(2, 1);
  Vec xp(2), xm(2), yp(2), ym(2);
  xp << s, s;
  xm << s, -s;
  yp << s, Cplx(0, s);
  ym << s, Cplx(0, -s);
  basis = {{"Z+", zp}, {"Z-", zm}, {"X+", xp}, {"X-", xm}, {"Y+", yp}, {"Y-", ym}};
  for (auto& [lab, v] : basis) {
    p.elements.push_back(projector(v) / 3.0);
    p.labels.push_back(lab);
  }
  return p;
}

// X/Y/Z basis measurements as unitaries (rows of U are the basis bras).
inline std::vector<BasisMeasurement> pauli_basis_measurements() {
  const double s = 1.0 / std::sqrt(2.0);
  Mat uz = Mat::Identity(2, 2);
  Mat ux(2, 2), uy(2, 2);
  ux << s, s, s, -s;                            // H
  uy << s, Cplx(0, -s), s, Cplx(0, s);          // maps Y eigenbasis to Z
  return {BasisMeasurement(ux), BasisMeasurement(uy), BasisMeasurement(uz)};
}

inline Povm tensor_povm(const std::vector<Povm>& ps) {
  if (ps.empty()) throw std::invalid_argument("tensor_povm: empty input");
  Povm out = ps[0];
  for (std::size_t i = 1; i < ps.size(); ++i) {
    Povm next;
    for (std::size_t a = 0; a < out.elements.size(); ++a)
      for (std::size_t b = 0; b < ps[i].elements.size(); ++b) {
        next.elements.push_back(tensor(out.elements[a], ps[i].elements[b]));
        next.labels.push_back(out.labels[a] + "," + ps[i].labels[b]);
      }
    out = std::move(next);
  }
  return out;
}

// Max over sampled traceless Hermitian differences of
// trace_norm(D) / l1_norm(channel image of D); lower-bounds the distortion
// constant of an informationally complete measurement.
inline bool is_informationally_complete(const Povm& p, double tol = 1e-10) {
  int d = p.dim();
  Eigen::MatrixXcd flat(p.outcomes(), d * d);
  for (int i = 0; i < p.outcomes(); ++i)
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) flat(i, r * d + c) = p.elements[i](r, c);
  Eigen::FullPivLU<Eigen::MatrixXcd> lu(flat);
  lu.setThreshold(tol);
  return lu.rank() == d * d;
}

inline double distortion_lower_bound(const Povm& p, int trials, Rng& rng) {
  int d = p.dim();
  if (!is_informationally_complete(p))
    throw std::invalid_argument(
        "distortion_lower_bound: POVM is not informationally complete");
  double best = 0;
  bool saw_signal = false;
  for (int t = 0; t < trials; ++t) {
    Mat a = random_density(d, rng).rho;
    Mat b = random_density(d, rng).rho;
    Mat delta = a - b;
    double tn = trace_norm(delta);
    if (tn < 1e-12) continue;
    double img = 0;
    for (const auto& e : p.elements) img += std::abs((e * delta).trace().real());
    if (img < 1e-12) {
      throw std::invalid_argument(
          "distortion_lower_bound: zero channel image, POVM is not "
          "informationally complete");
    }
    saw_signal = true;
    best = std::max(best, tn / img);
  }
  if (!saw_signal)
    throw std::invalid_argument("distortion_lower_bound: degenerate sampling");
  return best;
}

// A finite family of basis measurements with a sampling law over indices.
struct MeasurementFamily {
  std::vector<BasisMeasurement> members;
  std::vector<double> law;  // probability vector; empty means uniform
  std::string id;

  int size() const { return static_cast<int>(members.size()); }
  int sample(Rng& rng) const {
    if (law.empty()) return uniform_int(rng, 0, size() - 1);
    return static_cast<int>(sample_index(rng, law));
  }
};

}  // namespace noniid
