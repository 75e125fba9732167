#pragma once

#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "noniid/povm.hpp"

namespace noniid {

// Structured-text state format, 17 significant digits, one token stream:
//   state v1
//   n_sites <n> site_dim <d>
//   rep dense|mixture
//   dense: <d^n * d^n re im pairs>
//   mixture: branches <B> then per branch: weight <w> and n 'factor' blocks
//   of d*d re im pairs

namespace io_detail {

inline void write_mat(std::ostream& os, const Mat& m) {
  for (long i = 0; i < m.rows(); ++i)
    for (long j = 0; j < m.cols(); ++j)
      os << ' ' << m(i, j).real() << ' ' << m(i, j).imag();
}

inline Mat read_mat(std::istream& is, long rows, long cols) {
  Mat m(rows, cols);
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < cols; ++j) {
      double re, im;
      if (!(is >> re >> im)) throw std::runtime_error("state parse: bad entry");
      m(i, j) = Cplx(re, im);
    }
  return m;
}

}  // namespace io_detail

inline void save_state(std::ostream& os, const MultipartiteState& s) {
  os.precision(17);
  os << "state v1\nn_sites " << s.n_sites << " site_dim " << s.site_dim << '\n';
  if (s.is_dense()) {
    os << "rep dense\n";
    io_detail::write_mat(os, s.dense_rep().rho);
    os << '\n';
    return;
  }
  const auto& branches = s.mixture_rep().branches;
  os << "rep mixture\nbranches " << branches.size() << '\n';
  for (const auto& b : branches) {
    os << "weight " << b.weight << '\n';
    for (const auto& f : b.factors) {
      os << "factor";
      io_detail::write_mat(os, f);
      os << '\n';
    }
  }
}

inline MultipartiteState load_state(std::istream& is) {
  std::string tok, ver;
  is >> tok >> ver;
  if (tok != "state" || ver != "v1") throw std::runtime_error("state parse: header");
  int n = 0, d = 0;
  is >> tok >> n >> tok >> d;
  is >> tok >> tok;
  if (tok == "dense") {
    long total = 1;
    for (int i = 0; i < n; ++i) total *= d;
    return MultipartiteState::dense(n, d, io_detail::read_mat(is, total, total));
  }
  std::size_t count = 0;
  is >> tok >> count;
  std::vector<MixtureBranch> branches;
  for (std::size_t b = 0; b < count; ++b) {
    MixtureBranch br;
    is >> tok >> br.weight;
    for (int i = 0; i < n; ++i) {
      is >> tok;
      br.factors.push_back(io_detail::read_mat(is, d, d));
    }
    branches.push_back(std::move(br));
  }
  return MultipartiteState::mixture(n, d, std::move(branches));
}

inline void save_povm(std::ostream& os, const Povm& p) {
  os.precision(17);
  os << "povm v1\noutcomes " << p.outcomes() << " dim " << p.dim() << '\n';
  for (int i = 0; i < p.outcomes(); ++i) {
    os << "label " << (i < (int)p.labels.size() ? p.labels[i] : std::to_string(i))
       << '\n';
    os << "element";
    io_detail::write_mat(os, p.elements[i]);
    os << '\n';
  }
}

inline Povm load_povm(std::istream& is) {
  std::string tok, ver;
  is >> tok >> ver;
  if (tok != "povm" || ver != "v1") throw std::runtime_error("povm parse: header");
  int outcomes = 0, dim = 0;
  is >> tok >> outcomes >> tok >> dim;
  Povm p;
  for (int i = 0; i < outcomes; ++i) {
    std::string label;
    is >> tok >> label;
    is >> tok;
    p.labels.push_back(label);
    p.elements.push_back(io_detail::read_mat(is, dim, dim));
  }
  return p;
}

}  // namespace noniid
