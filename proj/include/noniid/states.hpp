#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

#include "noniid/linalg.hpp"
#include "noniid/rng.hpp"

namespace noniid {

constexpr double kProbFloor = 1e-14;

// One classically-correlated component: weight * factor_1 x ... x factor_n.
struct MixtureBranch {
  double weight = 0;
  std::vector<Mat> factors;  // one single-site density matrix per site
};

struct DenseRep {
  Mat rho;  // density matrix on site_dim^n_sites
};

struct ProductMixtureRep {
  std::vector<MixtureBranch> branches;
};

class MultipartiteState {
 public:
  int n_sites = 0;
  int site_dim = 0;
  std::variant<DenseRep, ProductMixtureRep> rep;

  static MultipartiteState dense(int n_sites, int site_dim, Mat rho) {
    MultipartiteState s;
    s.n_sites = n_sites;
    s.site_dim = site_dim;
    long total = 1;
    for (int i = 0; i < n_sites; ++i) total *= site_dim;
    if (rho.rows() != total)
      throw std::invalid_argument("dense state: dimension mismatch");
    s.rep = DenseRep{std::move(rho)};
    return s;
  }

  static MultipartiteState mixture(int n_sites, int site_dim,
                                   std::vector<MixtureBranch> branches) {
    MultipartiteState s;
    s.n_sites = n_sites;
    s.site_dim = site_dim;
    double wsum = 0;
    for (const auto& b : branches) {
      if (b.weight < -1e-15) throw std::invalid_argument("negative branch weight");
      if (static_cast<int>(b.factors.size()) != n_sites)
        throw std::invalid_argument("branch factor count != n_sites");
      for (const auto& f : b.factors)
        if (f.rows() != site_dim) throw std::invalid_argument("branch factor dim");
      wsum += b.weight;
    }
    if (std::abs(wsum - 1.0) > 1e-10)
      throw std::invalid_argument("branch weights do not sum to 1");
    s.rep = ProductMixtureRep{std::move(branches)};
    return s;
  }

  bool is_dense() const { return std::holds_alternative<DenseRep>(rep); }
  const DenseRep& dense_rep() const { return std::get<DenseRep>(rep); }
  const ProductMixtureRep& mixture_rep() const {
    return std::get<ProductMixtureRep>(rep);
  }

  SubsystemDims dims() const { return SubsystemDims::uniform(site_dim, n_sites); }
};

struct ConditionResult {
  double probability = 0;
  MultipartiteState post_state;  // measured site removed
};

// ---- constructors ----

inline MultipartiteState iid_state(const DensityMatrix& sigma, int n) {
  MixtureBranch b;
  b.weight = 1.0;
  b.factors.assign(n, sigma.rho);
  return MultipartiteState::mixture(n, sigma.dim(), {std::move(b)});
}

// (1/d) sum_i |i..i><i..i|
inline MultipartiteState basis_mixture(int d, int n) {
  if (d < 2) throw std::invalid_argument("basis_mixture: d >= 2 required");
  std::vector<MixtureBranch> branches;
  branches.reserve(d);
  for (int i = 0; i < d; ++i) {
    MixtureBranch b;
    b.weight = 1.0 / d;
    b.factors.assign(n, projector(basis_vector(d, i)));
    branches.push_back(std::move(b));
  }
  return MultipartiteState::mixture(n, d, std::move(branches));
}

// One sampled branch of the Haar integral: identical pure factors |phi><phi|.
inline MixtureBranch haar_branch_sample(int n, Rng& rng, double weight = 1.0,
                                        int site_dim = 2) {
  Vec phi = haar_unit_vector(site_dim, rng);
  MixtureBranch b;
  b.weight = weight;
  b.factors.assign(n, projector(phi));
  return b;
}

// Finite-branch stand-in for the continuous Haar mixture.
inline MultipartiteState haar_mixture(int n, int branch_count, Rng& rng,
                                      int site_dim = 2) {
  std::vector<MixtureBranch> branches;
  branches.reserve(branch_count);
  for (int i = 0; i < branch_count; ++i)
    branches.push_back(haar_branch_sample(n, rng, 1.0 / branch_count, site_dim));
  return MultipartiteState::mixture(n, site_dim, std::move(branches));
}

inline MultipartiteState ghz_pure(int n) {
  if (n > 12) throw std::invalid_argument("ghz_pure: n > 12 exceeds dense capacity");
  long total = 1L << n;
  Vec psi = Vec::Zero(total);
  psi(0) = 1.0 / std::sqrt(2.0);
  psi(total - 1) = 1.0 / std::sqrt(2.0);
  return MultipartiteState::dense(n, 2, projector(psi));
}

// ---- core operations ----

inline Mat densify(const MultipartiteState& s) {
  if (s.is_dense()) return s.dense_rep().rho;
  long total = s.dims().total();
  if (total > 4096) throw std::invalid_argument("densify: dimension above 4096");
  Mat rho = Mat::Zero(total, total);
  for (const auto& b : s.mixture_rep().branches) rho += b.weight * tensor(b.factors);
  return rho;
}

inline DensityMatrix reduced(const MultipartiteState& s, int site) {
  if (site < 0 || site >= s.n_sites) throw std::invalid_argument("reduced: bad site");
  if (s.is_dense()) {
    Mat m = partial_trace(s.dense_rep().rho, s.dims(), {site});
    return DensityMatrix(symmetrize(m), false);
  }
  Mat m = Mat::Zero(s.site_dim, s.site_dim);
  for (const auto& b : s.mixture_rep().branches) m += b.weight * b.factors[site];
  return DensityMatrix(symmetrize(m), false);
}

inline void require_effect(const Mat& element, int d) {
  if (element.rows() != d || element.cols() != d)
    throw std::invalid_argument("effect dimension mismatch");
  require_hermitian(element, 1e-10);
  auto ev = hermitian_eigenvalues(element);
  if (ev.front() < -1e-10 || ev.back() > 1.0 + 1e-10)
    throw std::invalid_argument("operator is not an effect (0 <= M <= I)");
}

// Drops `site`; zero-probability outcomes fall back to the maximally mixed
// product state, matching the convention for conditioning on null events.
inline ConditionResult condition_on_outcome(const MultipartiteState& s, int site,
                                            const Mat& element,
                                            bool validate_element = true) {
  if (site < 0 || site >= s.n_sites)
    throw std::invalid_argument("condition_on_outcome: bad site");
  if (validate_element) require_effect(element, s.site_dim);
  const int m = s.n_sites - 1;

  auto fallback = [&]() {
    MixtureBranch b;
    b.weight = 1.0;
    b.factors.assign(m, Mat::Identity(s.site_dim, s.site_dim) / s.site_dim);
    return MultipartiteState::mixture(m, s.site_dim, {std::move(b)});
  };

  if (s.is_dense()) {
    const Mat& rho = s.dense_rep().rho;
    std::vector<Mat> ops(s.n_sites, Mat::Identity(s.site_dim, s.site_dim));
    ops[site] = element;
    Mat big = tensor(ops);
    double prob = (big * rho).trace().real();
    if (prob <= kProbFloor) return {std::max(prob, 0.0), fallback()};
    std::vector<int> keep;
    for (int i = 0; i < s.n_sites; ++i)
      if (i != site) keep.push_back(i);
    Mat post = partial_trace(big * rho, s.dims(), keep) / prob;
    return {prob, MultipartiteState::dense(m, s.site_dim, symmetrize(post))};
  }

  std::vector<MixtureBranch> out;
  out.reserve(s.mixture_rep().branches.size());
  double prob = 0;
  for (const auto& b : s.mixture_rep().branches) {
    double pb = (element * b.factors[site]).trace().real();
    MixtureBranch nb;
    nb.weight = b.weight * std::max(pb, 0.0);
    nb.factors.reserve(m);
    for (int i = 0; i < s.n_sites; ++i)
      if (i != site) nb.factors.push_back(b.factors[i]);
    prob += nb.weight;
    out.push_back(std::move(nb));
  }
  if (prob <= kProbFloor) return {std::max(prob, 0.0), fallback()};
  for (auto& b : out) b.weight /= prob;
  return {prob, MultipartiteState::mixture(m, s.site_dim, std::move(out))};
}

// Conditions on an effect acting jointly on a set of sites (ascending order).
inline ConditionResult condition_on_outcome_multi(const MultipartiteState& s,
                                                  const std::vector<int>& sites,
                                                  const Mat& element) {
  if (sites.empty()) throw std::invalid_argument("no sites to condition on");
  for (std::size_t i = 1; i < sites.size(); ++i)
    if (sites[i] <= sites[i - 1])
      throw std::invalid_argument("sites must be strictly ascending");
  long block = 1;
  for (std::size_t i = 0; i < sites.size(); ++i) block *= s.site_dim;
  if (element.rows() != block)
    throw std::invalid_argument("multi-site effect dimension mismatch");
  const int m = s.n_sites - static_cast<int>(sites.size());

  auto fallback = [&]() {
    MixtureBranch b;
    b.weight = 1.0;
    b.factors.assign(m, Mat::Identity(s.site_dim, s.site_dim) / s.site_dim);
    return MultipartiteState::mixture(m, s.site_dim, {std::move(b)});
  };

  std::vector<bool> mask(s.n_sites, false);
  for (int x : sites) mask[x] = true;

  if (s.is_dense()) {
    // embed element at the measured sites
    const Mat& rho = s.dense_rep().rho;
    long total = s.dims().total();
    Mat big = Mat::Zero(total, total);
    // build by iterating block indices: reorder via tensor with identity then
    // permutation is avoided by direct index arithmetic
    std::vector<long> stride(s.n_sites, 1);
    for (int t = s.n_sites - 2; t >= 0; --t) stride[t] = stride[t + 1] * s.site_dim;
    std::vector<int> free_sites;
    for (int t = 0; t < s.n_sites; ++t)
      if (!mask[t]) free_sites.push_back(t);
    long dfree = 1;
    for (std::size_t i = 0; i < free_sites.size(); ++i) dfree *= s.site_dim;
    auto unrank = [&](long r, const std::vector<int>& ss, std::vector<int>& dig) {
      for (int i = static_cast<int>(ss.size()) - 1; i >= 0; --i) {
        dig[i] = static_cast<int>(r % s.site_dim);
        r /= s.site_dim;
      }
    };
    std::vector<int> bi(sites.size()), bj(sites.size()), fd(free_sites.size());
    for (long i = 0; i < block; ++i) {
      unrank(i, sites, bi);
      for (long j = 0; j < block; ++j) {
        if (element(i, j) == Cplx(0, 0)) continue;
        unrank(j, sites, bj);
        for (long f = 0; f < dfree; ++f) {
          unrank(f, free_sites, fd);
          long row = 0, col = 0;
          for (std::size_t u = 0; u < sites.size(); ++u) {
            row += stride[sites[u]] * bi[u];
            col += stride[sites[u]] * bj[u];
          }
          for (std::size_t u = 0; u < free_sites.size(); ++u) {
            row += stride[free_sites[u]] * fd[u];
            col += stride[free_sites[u]] * fd[u];
          }
          big(row, col) += element(i, j);
        }
      }
    }
    double prob = (big * rho).trace().real();
    if (prob <= kProbFloor) return {std::max(prob, 0.0), fallback()};
    Mat post = partial_trace(big * rho, s.dims(), free_sites) / prob;
    return {prob, MultipartiteState::dense(m, s.site_dim, symmetrize(post))};
  }

  std::vector<MixtureBranch> out;
  out.reserve(s.mixture_rep().branches.size());
  double prob = 0;
  for (const auto& b : s.mixture_rep().branches) {
    std::vector<Mat> blockfacs;
    for (int x : sites) blockfacs.push_back(b.factors[x]);
    double pb = (element * tensor(blockfacs)).trace().real();
    MixtureBranch nb;
    nb.weight = b.weight * std::max(pb, 0.0);
    for (int i = 0; i < s.n_sites; ++i)
      if (!mask[i]) nb.factors.push_back(b.factors[i]);
    prob += nb.weight;
    out.push_back(std::move(nb));
  }
  if (prob <= kProbFloor) return {std::max(prob, 0.0), fallback()};
  for (auto& b : out) b.weight /= prob;
  return {prob, MultipartiteState::mixture(m, s.site_dim, std::move(out))};
}

// ---- permutations ----

inline std::vector<int> random_permutation(int n, Rng& rng) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    int j = uniform_int(rng, 0, i);
    std::swap(p[i], p[j]);
  }
  return p;
}

// Applies site permutation perm: new site i holds what was at site perm[i].
inline MultipartiteState permute_sites(const MultipartiteState& s,
                                       const std::vector<int>& perm) {
  if (static_cast<int>(perm.size()) != s.n_sites)
    throw std::invalid_argument("permute: size mismatch");
  if (!s.is_dense()) {
    std::vector<MixtureBranch> out;
    out.reserve(s.mixture_rep().branches.size());
    for (const auto& b : s.mixture_rep().branches) {
      MixtureBranch nb;
      nb.weight = b.weight;
      nb.factors.reserve(s.n_sites);
      for (int i = 0; i < s.n_sites; ++i) nb.factors.push_back(b.factors[perm[i]]);
      out.push_back(std::move(nb));
    }
    return MultipartiteState::mixture(s.n_sites, s.site_dim, std::move(out));
  }
  const Mat& rho = s.dense_rep().rho;
  long total = s.dims().total();
  std::vector<long> stride(s.n_sites, 1);
  for (int t = s.n_sites - 2; t >= 0; --t) stride[t] = stride[t + 1] * s.site_dim;
  std::vector<long> map(total);
  for (long idx = 0; idx < total; ++idx) {
    long r = idx, out_idx = 0;
    std::vector<int> dig(s.n_sites);
    for (int t = s.n_sites - 1; t >= 0; --t) {
      dig[t] = static_cast<int>(r % s.site_dim);
      r /= s.site_dim;
    }
    for (int t = 0; t < s.n_sites; ++t) out_idx += stride[t] * dig[perm[t]];
    map[idx] = out_idx;
  }
  Mat out = Mat::Zero(total, total);
  for (long i = 0; i < total; ++i)
    for (long j = 0; j < total; ++j) out(map[i], map[j]) = rho(i, j);
  return MultipartiteState::dense(s.n_sites, s.site_dim, std::move(out));
}

inline std::pair<MultipartiteState, std::vector<int>> permute_random(
    const MultipartiteState& s, Rng& rng) {
  auto perm = random_permutation(s.n_sites, rng);
  return {permute_sites(s, perm), perm};
}

// Full permutation average (1/N!) sum_pi rho^pi. The alternative to shuffling
// for adversarial inputs; dense enumeration caps the site count.
inline MultipartiteState symmetrize_state(const MultipartiteState& s) {
  if (s.n_sites > 8)
    throw std::invalid_argument("symmetrize_state: n_sites > 8");
  if (!s.is_dense()) {
    std::vector<MixtureBranch> out;
    std::vector<int> perm(s.n_sites);
    std::iota(perm.begin(), perm.end(), 0);
    long count = 0;
    std::vector<std::vector<int>> perms;
    do {
      perms.push_back(perm);
      ++count;
    } while (std::next_permutation(perm.begin(), perm.end()));
    for (const auto& b : s.mixture_rep().branches)
      for (const auto& p : perms) {
        MixtureBranch nb;
        nb.weight = b.weight / count;
        for (int i = 0; i < s.n_sites; ++i) nb.factors.push_back(b.factors[p[i]]);
        out.push_back(std::move(nb));
      }
    return MultipartiteState::mixture(s.n_sites, s.site_dim, std::move(out));
  }
  std::vector<int> perm(s.n_sites);
  std::iota(perm.begin(), perm.end(), 0);
  Mat acc = Mat::Zero(s.dims().total(), s.dims().total());
  long count = 0;
  do {
    acc += permute_sites(s, perm).dense_rep().rho;
    ++count;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return MultipartiteState::dense(s.n_sites, s.site_dim, acc / count);
}

inline bool is_permutation_invariant(const MultipartiteState& s, int trials,
                                     Rng& rng, double tol = 1e-10) {
  if (s.is_dense()) {
    for (int t = 0; t < trials; ++t) {
      auto perm = random_permutation(s.n_sites, rng);
      Mat diff = s.dense_rep().rho - permute_sites(s, perm).dense_rep().rho;
      if (trace_norm(symmetrize(diff)) > tol) return false;
    }
    return true;
  }
  // Mixture test: every branch must be invariant as a multiset of factors,
  // i.e. permuting factor lists maps the branch multiset to itself. Branches
  // with identical factors are trivially invariant; otherwise compare the
  // permuted branch list against the original up to reordering.
  const auto& branches = s.mixture_rep().branches;
  auto branch_close = [&](const MixtureBranch& a, const MixtureBranch& b) {
    if (std::abs(a.weight - b.weight) > 1e-12) return false;
    for (int i = 0; i < s.n_sites; ++i)
      if ((a.factors[i] - b.factors[i]).cwiseAbs().maxCoeff() > tol) return false;
    return true;
  };
  for (int t = 0; t < trials; ++t) {
    auto perm = random_permutation(s.n_sites, rng);
    for (const auto& b : branches) {
      MixtureBranch pb;
      pb.weight = b.weight;
      for (int i = 0; i < s.n_sites; ++i) pb.factors.push_back(b.factors[perm[i]]);
      bool found = false;
      for (const auto& c : branches)
        if (branch_close(pb, c)) {
          found = true;
          break;
        }
      if (!found) return false;
    }
  }
  return true;
}

}  // namespace noniid
