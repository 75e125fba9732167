#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include "noniid/povm.hpp"

namespace noniid {

// Pauli row of a stabilizer tableau: (-1)^sign prod_q i^{x_q z_q} X^x Z^z,
// bit q of x/z for qubit q.
struct PauliRow {
  std::uint32_t x = 0, z = 0;
  int sign = 0;
};

namespace clifford_detail {

// symplectic product over F2 on 2n-bit vectors (low n bits = x, high = z)
inline int sympl(std::uint32_t a, std::uint32_t b, int n) {
  std::uint32_t ax = a & ((1u << n) - 1), az = a >> n;
  std::uint32_t bx = b & ((1u << n) - 1), bz = b >> n;
  return __builtin_popcount((ax & bz) ^ (az & bx)) & 1;
}

// Uniform images of a full symplectic basis of the subspace spanned by
// `basis` (a list of hyperbolic pairs c1,d1,...,cm,dm). Returns 2m vectors.
inline std::vector<std::uint32_t> sample_symplectic_images(
    std::vector<std::uint32_t> basis, int n, Rng& rng) {
  std::vector<std::uint32_t> out;
  while (!basis.empty()) {
    const int m2 = static_cast<int>(basis.size());  // = 2m
    // a: uniform nonzero combination
    std::uint32_t alpha = 0;
    while (alpha == 0)
      alpha = static_cast<std::uint32_t>(rng() & ((1ull << m2) - 1));
    auto combo = [&](std::uint32_t coeff) {
      std::uint32_t v = 0;
      for (int i = 0; i < m2; ++i)
        if (coeff >> i & 1) v ^= basis[i];
      return v;
    };
    std::uint32_t a = combo(alpha);
    // b: uniform over {v in span : <a,v> = 1}
    std::uint32_t g = 0;
    for (int i = 0; i < m2; ++i)
      if (sympl(a, basis[i], n)) g |= 1u << i;
    int pivot = __builtin_ctz(g);
    std::uint32_t beta = static_cast<std::uint32_t>(rng() & ((1ull << m2) - 1));
    beta &= ~(1u << pivot);
    int par = __builtin_popcount(beta & g) & 1;
    if (par == 0) beta |= 1u << pivot;
    std::uint32_t b = combo(beta);
    out.push_back(a);
    out.push_back(b);
    // complement basis via symplectic Gram-Schmidt against (a, b)
    std::vector<std::uint32_t> reduced;
    for (std::uint32_t v : basis) {
      std::uint32_t w = v;
      if (sympl(w, b, n)) w ^= a;
      if (sympl(w, a, n)) w ^= b;
      if (w) reduced.push_back(w);
    }
    std::vector<std::uint32_t> next;
    while (static_cast<int>(next.size()) < m2 - 2) {
      // first vector independent of the pairs already in `next`
      std::size_t ui = 0;
      std::uint32_t u = 0;
      for (; ui < reduced.size(); ++ui) {
        u = reduced[ui];
        if (u) break;
      }
      if (ui == reduced.size()) throw std::logic_error("symplectic basis collapsed");
      std::size_t wi = ui + 1;
      for (; wi < reduced.size(); ++wi)
        if (sympl(u, reduced[wi], n)) break;
      if (wi == reduced.size()) {
        // u lies in the span of earlier pairs; drop it
        reduced.erase(reduced.begin() + ui);
        continue;
      }
      std::uint32_t w = reduced[wi];
      next.push_back(u);
      next.push_back(w);
      reduced.erase(reduced.begin() + wi);
      reduced.erase(reduced.begin() + ui);
      for (auto& v : reduced) {
        if (sympl(v, w, n)) v ^= u;
        if (sympl(v, u, n)) v ^= w;
      }
    }
    basis = std::move(next);
  }
  return out;
}

struct Gate {
  enum Kind { H, S, CNOT, X, Z } kind;
  int a = 0, b = 0;
};

inline void apply_gate(std::vector<PauliRow>& rows, const Gate& g) {
  for (auto& r : rows) {
    auto xb = [&](int q) -> int { return r.x >> q & 1; };
    auto zb = [&](int q) -> int { return r.z >> q & 1; };
    switch (g.kind) {
      case Gate::H:
        r.sign ^= xb(g.a) & zb(g.a);
        if (xb(g.a) != zb(g.a)) {
          r.x ^= 1u << g.a;
          r.z ^= 1u << g.a;
        }
        break;
      case Gate::S:
        r.sign ^= xb(g.a) & zb(g.a);
        r.z ^= static_cast<std::uint32_t>(xb(g.a)) << g.a;
        break;
      case Gate::CNOT:
        r.sign ^= xb(g.a) & zb(g.b) & (xb(g.b) ^ zb(g.a) ^ 1);
        r.x ^= static_cast<std::uint32_t>(xb(g.a)) << g.b;
        r.z ^= static_cast<std::uint32_t>(zb(g.b)) << g.a;
        break;
      case Gate::X:
        r.sign ^= zb(g.a);
        break;
      case Gate::Z:
        r.sign ^= xb(g.a);
        break;
    }
  }
}

inline Mat embed_single(const Mat& g, int q, int n) {
  std::vector<Mat> ops(n, Mat::Identity(2, 2));
  ops[q] = g;
  return tensor(ops);
}

inline Mat dense_gate(const Gate& g, int n) {
  const double s = 1.0 / std::sqrt(2.0);
  switch (g.kind) {
    case Gate::H: {
      Mat h(2, 2);
      h << s, s, s, -s;
      return embed_single(h, g.a, n);
    }
    case Gate::S: {
      Mat m(2, 2);
      m << 1, 0, 0, Cplx(0, 1);
      return embed_single(m, g.a, n);
    }
    case Gate::X:
      return embed_single(pauli_x(), g.a, n);
    case Gate::Z:
      return embed_single(pauli_z(), g.a, n);
    case Gate::CNOT: {
      long dim = 1L << n;
      Mat m = Mat::Zero(dim, dim);
      for (long i = 0; i < dim; ++i) {
        // qubit 0 is the most significant bit, matching tensor order
        int ca = n - 1 - g.a, tb = n - 1 - g.b;
        long j = (i >> ca & 1) ? (i ^ (1L << tb)) : i;
        m(j, i) = 1.0;
      }
      return m;
    }
  }
  throw std::logic_error("unreachable");
}

}  // namespace clifford_detail

// Dense matrix of a signed Pauli row (test oracle for the tableau machinery).
inline Mat pauli_row_dense(const PauliRow& r, int n) {
  Mat out = Mat::Identity(1, 1);
  for (int q = 0; q < n; ++q) {
    int x = r.x >> q & 1, z = r.z >> q & 1;
    Mat p = Mat::Identity(2, 2);
    if (x && z)
      p = pauli_y();
    else if (x)
      p = pauli_x();
    else if (z)
      p = pauli_z();
    out = tensor(out, p);
  }
  if (r.sign) out = -out;
  return out;
}

// Uniformly random Clifford tableau: rows 0..n-1 are images of X_q, rows
// n..2n-1 images of Z_q, with uniform sign bits.
inline std::vector<PauliRow> random_clifford_tableau(int n, Rng& rng) {
  using namespace clifford_detail;
  std::vector<std::uint32_t> basis;
  for (int q = 0; q < n; ++q) {
    basis.push_back(1u << q);        // X_q
    basis.push_back(1u << (n + q));  // Z_q
  }
  auto img = sample_symplectic_images(std::move(basis), n, rng);
  std::vector<PauliRow> rows(2 * n);
  for (int q = 0; q < n; ++q) {
    std::uint32_t a = img[2 * q], b = img[2 * q + 1];
    rows[q] = {a & ((1u << n) - 1), a >> n, static_cast<int>(rng() & 1)};
    rows[n + q] = {b & ((1u << n) - 1), b >> n, static_cast<int>(rng() & 1)};
  }
  return rows;
}

// Synthesizes the tableau into a dense unitary with U X_q U^dag = rows[q],
// U Z_q U^dag = rows[n+q]; result is phase-normalized so the first nonzero
// entry in column-major order is positive real.
inline Mat clifford_tableau_to_unitary(std::vector<PauliRow> rows, int n) {
  using namespace clifford_detail;
  std::vector<Gate> gates;
  auto emit = [&](Gate::Kind k, int a, int b = 0) {
    Gate g{k, a, b};
    apply_gate(rows, g);
    gates.push_back(g);
  };
  auto emit_cz = [&](int a, int b) {
    emit(Gate::H, b);
    emit(Gate::CNOT, a, b);
    emit(Gate::H, b);
  };
  auto emit_swap = [&](int a, int b) {
    emit(Gate::CNOT, a, b);
    emit(Gate::CNOT, b, a);
    emit(Gate::CNOT, a, b);
  };

  for (int i = 0; i < n; ++i) {
    auto reduce_to_x = [&](int row) {
      // make rows[row] equal +-X_i, assuming support only on qubits >= i
      // and x-part nonempty after an H if needed
      bool has_x = (rows[row].x >> i) != 0;
      if (!has_x) {
        for (int j = i; j < n; ++j)
          if (rows[row].z >> j & 1) {
            emit(Gate::H, j);
            break;
          }
      }
      int piv = __builtin_ctz(rows[row].x >> i) + i;
      if (piv != i) emit_swap(i, piv);
      for (int j = i + 1; j < n; ++j)
        if (rows[row].x >> j & 1) emit(Gate::CNOT, i, j);
      if (rows[row].z >> i & 1) emit(Gate::S, i);
      for (int j = i + 1; j < n; ++j)
        if (rows[row].z >> j & 1) emit_cz(i, j);
    };
    reduce_to_x(i);       // destabilizer row -> +-X_i
    emit(Gate::H, i);     // -> +-Z_i; stabilizer row now has x_i = 1
    // stabilizer row -> +-X_i without moving the pivot
    for (int j = i + 1; j < n; ++j)
      if (rows[n + i].x >> j & 1) emit(Gate::CNOT, i, j);
    if (rows[n + i].z >> i & 1) emit(Gate::S, i);
    for (int j = i + 1; j < n; ++j)
      if (rows[n + i].z >> j & 1) emit_cz(i, j);
    emit(Gate::H, i);     // stab -> +-Z_i, destab back to +-X_i
  }
  for (int i = 0; i < n; ++i) {
    if (rows[i].sign) emit(Gate::Z, i);
    if (rows[n + i].sign) emit(Gate::X, i);
  }

  long dim = 1L << n;
  Mat u = Mat::Identity(dim, dim);
  for (const auto& g : gates) u = u * dense_gate(g, n).adjoint();

  // phase normalization
  for (long j = 0; j < dim; ++j)
    for (long i = 0; i < dim; ++i)
      if (std::abs(u(i, j)) > 1e-9) {
        u /= u(i, j) / std::abs(u(i, j));
        return u;
      }
  return u;
}

inline BasisMeasurement random_clifford(int n_qubits, Rng& rng) {
  if (n_qubits < 1 || n_qubits > 3)
    throw std::invalid_argument("random_clifford: 1 <= n_qubits <= 3");
  auto rows = random_clifford_tableau(n_qubits, rng);
  return BasisMeasurement(clifford_tableau_to_unitary(std::move(rows), n_qubits));
}

// The 24 single-qubit Cliffords (phase-normalized), generated by H and S.
inline const std::vector<Mat>& single_qubit_cliffords() {
  static const std::vector<Mat> group = [] {
    const double s = 1.0 / std::sqrt(2.0);
    Mat h(2, 2), sp(2, 2);
    h << s, s, s, -s;
    sp << 1, 0, 0, Cplx(0, 1);
    auto normalize = [](Mat u) {
      for (long j = 0; j < 2; ++j)
        for (long i = 0; i < 2; ++i)
          if (std::abs(u(i, j)) > 1e-9) {
            u /= u(i, j) / std::abs(u(i, j));
            return u;
          }
      return u;
    };
    auto key = [](const Mat& u) {
      std::array<long, 8> k{};
      int idx = 0;
      for (long i = 0; i < 2; ++i)
        for (long j = 0; j < 2; ++j) {
          k[idx++] = std::lround(u(i, j).real() * 1e6);
          k[idx++] = std::lround(u(i, j).imag() * 1e6);
        }
      return k;
    };
    std::map<std::array<long, 8>, Mat> seen;
    std::vector<Mat> frontier = {normalize(Mat::Identity(2, 2))};
    seen[key(frontier[0])] = frontier[0];
    while (!frontier.empty()) {
      std::vector<Mat> next;
      for (const auto& u : frontier)
        for (const Mat* g : {&h, &sp}) {
          Mat v = normalize((*g) * u);
          auto k = key(v);
          if (!seen.count(k)) {
            seen[k] = v;
            next.push_back(v);
          }
        }
      frontier = std::move(next);
    }
    std::vector<Mat> out;
    for (auto& [k, v] : seen) out.push_back(v);
    return out;
  }();
  return group;
}

// Index of u in the 24-element list, matching up to global phase; -1 if absent.
inline int clifford1_phase_class(const Mat& u) {
  const auto& group = single_qubit_cliffords();
  for (std::size_t i = 0; i < group.size(); ++i) {
    // compare u against group[i] up to phase: u g^dag should be phase * I
    Mat m = u * group[i].adjoint();
    if (std::abs(std::abs(m(0, 0)) - 1.0) < 1e-6 &&
        std::abs(m(0, 1)) < 1e-6 && std::abs(m(1, 0)) < 1e-6 &&
        std::abs(m(0, 0) - m(1, 1)) < 1e-6)
      return static_cast<int>(i);
  }
  return -1;
}

}  // namespace noniid
