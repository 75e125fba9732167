#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <variant>

#include "noniid/ensemble.hpp"
#include "noniid/parallel.hpp"
#include "noniid/povm.hpp"
#include "noniid/stats.hpp"

namespace noniid {

// ---- predictions ----

struct CoverageFailure {};
struct ExpectationTuple {
  std::vector<double> values;  // each in [0, 1]
};
struct StateDescription {
  Mat rho;
};
struct BitPrediction {
  int value = 0;  // 0 = accept / null hypothesis, 1 = reject / alternate
};
struct ScalarPrediction {
  double value = 0;
};

using Prediction = std::variant<CoverageFailure, ExpectationTuple,
                                StateDescription, BitPrediction, ScalarPrediction>;

inline std::string prediction_key(const Prediction& p) {
  std::ostringstream os;
  os.precision(17);
  if (std::holds_alternative<CoverageFailure>(p)) {
    os << "miss";
  } else if (const auto* e = std::get_if<ExpectationTuple>(&p)) {
    os << "e";
    for (double v : e->values) os << ':' << v;
  } else if (const auto* s = std::get_if<StateDescription>(&p)) {
    os << "s";
    for (long i = 0; i < s->rho.size(); ++i)
      os << ':' << s->rho(i / s->rho.cols(), i % s->rho.cols());
  } else if (const auto* b = std::get_if<BitPrediction>(&p)) {
    os << "b:" << b->value;
  } else if (const auto* v = std::get_if<ScalarPrediction>(&p)) {
    os << "x:" << v->value;
  }
  return os.str();
}

inline std::string prediction_summary(const Prediction& p) {
  std::ostringstream os;
  os.precision(6);
  if (std::holds_alternative<CoverageFailure>(p)) {
    os << "coverage-failure";
  } else if (const auto* e = std::get_if<ExpectationTuple>(&p)) {
    os << "mu=[";
    for (std::size_t i = 0; i < e->values.size(); ++i)
      os << (i ? " " : "") << e->values[i];
    os << "]";
  } else if (std::get_if<StateDescription>(&p)) {
    os << "state";
  } else if (const auto* b = std::get_if<BitPrediction>(&p)) {
    os << "bit=" << b->value;
  } else if (const auto* v = std::get_if<ScalarPrediction>(&p)) {
    os << "scalar=" << v->value;
  }
  return os.str();
}

// ---- non-adaptive i.i.d. learner description ----

// One per-copy measurement device. Basis devices carry their unitary so
// predictors can rebuild snapshots from outcomes.
struct Device {
  Povm povm;
  std::optional<Mat> basis_unitary;
};

// An indexed family of per-copy devices plus a classical predictor mapping
// the k_A ordered outcomes (one per device) to a prediction.
struct IidAlgorithmSpec {
  std::vector<Device> devices;
  std::function<Prediction(const std::vector<int>&, Rng&)> predictor;
  double delta_A = 0.1;

  int k_A() const { return static_cast<int>(devices.size()); }
  // learning-block size K = k_A ceil(ln(k_A / delta_A))
  int calibration_block() const {
    int ka = k_A();
    double f = std::log(static_cast<double>(ka) / delta_A);
    return ka * std::max(1, static_cast<int>(std::ceil(f)));
  }
};

// coupon-collector failure bound k_A e^{-K/k_A}
inline double coverage_failure_bound(int k_A, int K) {
  return k_A * std::exp(-static_cast<double>(K) / k_A);
}

struct RunRecord {
  int l = 0;
  std::vector<int> r;  // device index per measured site, in site order
  std::vector<int> w;  // projection-phase outcomes (sites K+1..l)
  std::vector<int> v;  // learning-phase outcomes (sites 1..K)
  bool coverage_ok = true;
  Prediction p;
  DensityMatrix conditional_test_state;
};

struct ErrorEstimate {
  double delta_hat = 0;
  double ci_halfwidth = 0;
  int trials = 0;
};

// ---- SUCCESS predicates ----

struct ShadowTomographyPredicate {
  std::vector<Mat> observables;  // each 0 <= O <= I
  double epsilon;
};
struct TomographyPredicate {
  double epsilon;
};
// Promise predicates carry the protocol's gap (base_epsilon) separately from
// the evaluation precision: raising epsilon above the base widens the promise
// region symmetrically, which is what makes the epsilon-family robust. At
// epsilon == base_epsilon these are the plain complement sets.
struct VerifyPurePredicate {
  std::vector<Vec> targets;
  double epsilon;
  double base_epsilon;

  VerifyPurePredicate(std::vector<Vec> t, double eps, double base = -1)
      : targets(std::move(t)), epsilon(eps), base_epsilon(base < 0 ? eps : base) {}
};
struct MixednessPredicate {
  double epsilon;
  double base_epsilon;

  explicit MixednessPredicate(double eps, double base = -1)
      : epsilon(eps), base_epsilon(base < 0 ? eps : base) {}
};
struct FidelityEstPredicate {
  Vec target;
  double epsilon;
};

using SuccessPredicate =
    std::variant<ShadowTomographyPredicate, TomographyPredicate,
                 VerifyPurePredicate, MixednessPredicate, FidelityEstPredicate>;

inline bool evaluate_success(const SuccessPredicate& pred, const Prediction& p,
                             const DensityMatrix& sigma) {
  if (std::holds_alternative<CoverageFailure>(p)) return false;
  if (const auto* st = std::get_if<ShadowTomographyPredicate>(&pred)) {
    const auto* mu = std::get_if<ExpectationTuple>(&p);
    if (!mu || mu->values.size() != st->observables.size()) return false;
    for (std::size_t i = 0; i < st->observables.size(); ++i) {
      double truth = (st->observables[i] * sigma.rho).trace().real();
      if (std::abs(mu->values[i] - truth) > st->epsilon) return false;
    }
    return true;
  }
  if (const auto* tm = std::get_if<TomographyPredicate>(&pred)) {
    const auto* sd = std::get_if<StateDescription>(&p);
    if (!sd) return false;
    return trace_norm(symmetrize(sd->rho - sigma.rho)) <= tm->epsilon;
  }
  if (const auto* vp = std::get_if<VerifyPurePredicate>(&pred)) {
    const auto* bit = std::get_if<BitPrediction>(&p);
    if (!bit) return false;
    double maxfid = 0;
    for (const auto& t : vp->targets)
      maxfid = std::max(maxfid, fidelity_with_pure(t, sigma));
    // complement sets widened by the slack above the promise gap
    double s = vp->epsilon - vp->base_epsilon;
    if (bit->value == 1 && maxfid >= 1.0 - vp->base_epsilon + s) return false;
    if (bit->value == 0 && maxfid <= 1.0 - 2.0 * vp->base_epsilon - s)
      return false;
    return true;
  }
  if (const auto* mx = std::get_if<MixednessPredicate>(&pred)) {
    const auto* bit = std::get_if<BitPrediction>(&p);
    if (!bit) return false;
    int d = sigma.dim();
    double dist = trace_norm(symmetrize(sigma.rho - Mat::Identity(d, d) / d));
    double s = mx->epsilon - mx->base_epsilon;
    if (bit->value == 1 && dist <= mx->base_epsilon - s) return false;
    if (bit->value == 0 && dist >= 2.0 * mx->base_epsilon + s) return false;
    return true;
  }
  const auto& fe = std::get<FidelityEstPredicate>(pred);
  const auto* sc = std::get_if<ScalarPrediction>(&p);
  if (!sc) return false;
  return std::abs(sc->value - fidelity_with_pure(fe.target, sigma)) <= fe.epsilon;
}

// ---- distance-like functions for the no-calibration analysis ----

struct TraceDistD {};
struct ShadowMaxD {
  std::vector<Mat> observables;
};
struct VerifyD {
  Vec target;
};
struct MixednessD {};

using DFunction = std::variant<TraceDistD, ShadowMaxD, VerifyD, MixednessD>;

inline double evaluate_dfunction(const DFunction& d, const Prediction& p,
                                 const DensityMatrix& sigma) {
  if (std::holds_alternative<TraceDistD>(d)) {
    const auto& sd = std::get<StateDescription>(p);
    return 0.5 * trace_norm(symmetrize(sd.rho - sigma.rho));
  }
  if (const auto* sm = std::get_if<ShadowMaxD>(&d)) {
    const auto& mu = std::get<ExpectationTuple>(p);
    double worst = 0;
    for (std::size_t i = 0; i < sm->observables.size(); ++i)
      worst = std::max(worst, std::abs(mu.values[i] -
                                       (sm->observables[i] * sigma.rho)
                                           .trace()
                                           .real()));
    return worst;
  }
  if (const auto* vd = std::get_if<VerifyD>(&d)) {
    double bit = std::get<BitPrediction>(p).value;
    return bit + (1.0 - bit) * (1.0 - fidelity_with_pure(vd->target, sigma));
  }
  double bit = std::get<BitPrediction>(p).value;
  int dim = sigma.dim();
  return bit + 0.5 * (1.0 - bit) *
                   trace_norm(symmetrize(sigma.rho - Mat::Identity(dim, dim) / dim));
}

// ---- the wrapper algorithms ----

namespace learning_detail {

// Measures `site` (0-based) of `state` with `povm`, returning the outcome and
// replacing the state by the conditioned remainder.
inline int measure_site(MultipartiteState& state, int site, const Povm& povm,
                        Rng& rng) {
  auto [x, cond] = sample_outcome(povm, state, site, rng);
  state = std::move(cond.post_state);
  return x;
}

}  // namespace learning_detail

// Runs the calibrated wrapper around a non-adaptive i.i.d. learner:
// l ~ unif{K+1..K+N/2}; devices r_t iid uniform; projection phase measures
// sites K+1..l (outcomes w), learning phase sites 1..K (outcomes v); the
// prediction uses the first-hit outcome per device; a device never hit within
// the learning block is a coverage failure, charged as an error.
inline RunRecord algorithm1_run(const MultipartiteState& state,
                                const IidAlgorithmSpec& alg, Rng& rng) {
  const int N = state.n_sites;
  const int kA = alg.k_A();
  const int K = alg.calibration_block();
  if (N <= 2 * (K + 1))
    throw std::invalid_argument(
        "algorithm1_run: need N > 2 (k_A ceil(ln(k_A / delta_A)) + 1)");
  const int M = N / 2;
  const int l = K + 1 + uniform_int(rng, 0, M - 1);

  std::vector<int> r(l);
  for (int t = 0; t < l; ++t) r[t] = uniform_int(rng, 0, kA - 1);

  bool fast = fastpath::site_uniform(state);
  for (const auto& dev : alg.devices)
    if (dev.povm.outcomes() > 16) fast = false;

  std::vector<int> w(l - K), v(K);
  DensityMatrix cond_test;
  if (fast) {
    // posterior-only conditioning: measuring a site of a site-uniform product
    // mixture just reweights branches
    auto ens = fastpath::make_ensemble(state);
    std::vector<std::vector<double>> tabs(kA);
    for (int t = 0; t < kA; ++t)
      tabs[t] = fastpath::povm_table(ens, alg.devices[t].povm);
    std::vector<double> post(ens.weights);
    for (int t = l - 1; t >= K; --t)
      w[t - K] = fastpath::sample_posterior_outcome(
          post, tabs[r[t]], alg.devices[r[t]].povm.outcomes(), rng);
    for (int t = K - 1; t >= 0; --t)
      v[t] = fastpath::sample_posterior_outcome(
          post, tabs[r[t]], alg.devices[r[t]].povm.outcomes(), rng);
    cond_test =
        DensityMatrix(symmetrize(fastpath::posterior_mean(ens, post)), false);
  } else {
    // conditioning removes sites; walk measured sites from the top so earlier
    // 0-based indices stay valid
    MultipartiteState cur = state;
    for (int t = l - 1; t >= K; --t)
      w[t - K] = learning_detail::measure_site(cur, t, alg.devices[r[t]].povm, rng);
    for (int t = K - 1; t >= 0; --t)
      v[t] = learning_detail::measure_site(cur, t, alg.devices[r[t]].povm, rng);
    cond_test = reduced(cur, cur.n_sites - 1);
  }

  RunRecord rec{l,
                std::move(r),
                std::move(w),
                std::move(v),
                true,
                CoverageFailure{},
                std::move(cond_test)};

  std::vector<int> first_hit(kA, -1);
  for (int t = 0; t < K; ++t)
    if (first_hit[rec.r[t]] < 0) first_hit[rec.r[t]] = t;
  for (int dev = 0; dev < kA; ++dev)
    if (first_hit[dev] < 0) rec.coverage_ok = false;

  if (rec.coverage_ok) {
    std::vector<int> ordered(kA);
    for (int dev = 0; dev < kA; ++dev) ordered[dev] = rec.v[first_hit[dev]];
    rec.p = alg.predictor(ordered, rng);
  }
  return rec;
}

// A general (possibly entangled) measurement on the first k copies plus a
// classical predictor.
struct GeneralAlgorithm {
  Povm measurement;  // acts on the d^k block of sites 1..k
  std::function<Prediction(int, Rng&)> predictor;
};

// Wrapper for general algorithms: per the listing, the block measurement on
// sites 1..k runs first, then l is drawn and the informationally complete
// device measures sites k+1..l. `prose_order` flips to projection-first.
inline RunRecord algorithm2_run(const MultipartiteState& state,
                                const GeneralAlgorithm& alg, const Povm& m_dist,
                                int k, Rng& rng, bool prose_order = false) {
  const int N = state.n_sites;
  if (k < 1 || 2 * k >= N) throw std::invalid_argument("algorithm2_run: 1 <= k < N/2");
  long block = 1;
  for (int i = 0; i < k; ++i) {
    block *= state.site_dim;
    if (block > 4096) throw std::invalid_argument("algorithm2_run: block capacity");
  }
  if (alg.measurement.dim() != block)
    throw std::invalid_argument("algorithm2_run: measurement dim mismatch");
  const int M = N / 2;

  MultipartiteState cur = state;
  RunRecord rec;
  int p_raw = -1;

  auto run_block = [&]() {
    // joint probabilities of the block POVM on sites 0..k-1
    std::vector<double> probs;
    probs.reserve(alg.measurement.outcomes());
    std::vector<int> sites(k);
    for (int i = 0; i < k; ++i) sites[i] = i;
    std::vector<ConditionResult> conds;
    conds.reserve(alg.measurement.outcomes());
    for (const auto& eff : alg.measurement.elements) {
      auto cr = condition_on_outcome_multi(cur, sites, eff);
      probs.push_back(cr.probability);
      conds.push_back(std::move(cr));
    }
    p_raw = static_cast<int>(sample_index(rng, probs));
    cur = std::move(conds[p_raw].post_state);
  };

  auto run_projection = [&](int l, int offset) {
    // measure sites l down to k+1 (1-based), i.e. 0-based l-1 down to k,
    // shifted by -offset when the block was already consumed
    rec.w.resize(l - k);
    for (int t = l - 1; t >= k; --t)
      rec.w[t - k] = learning_detail::measure_site(cur, t - offset, m_dist, rng);
  };

  const int l = k + 1 + uniform_int(rng, 0, M - 1);
  rec.l = l;
  if (prose_order) {
    run_projection(l, 0);
    run_block();
  } else {
    run_block();
    run_projection(l, k);
  }
  rec.coverage_ok = true;
  rec.p = alg.predictor(p_raw, rng);
  rec.conditional_test_state = reduced(cur, cur.n_sites - 1);
  rec.v = {p_raw};
  return rec;
}

// ---- error-probability functionals ----

using WrapperFn = std::function<RunRecord(const MultipartiteState&, Rng&)>;

// delta_B: fraction of runs whose (prediction, conditional test state) falls
// outside SUCCESS. Wilson 95% interval.
inline ErrorEstimate error_probability_with_calibration(
    const MultipartiteState& state, const WrapperFn& wrapper,
    const SuccessPredicate& predicate, int trials, Rng& rng) {
  std::uint64_t master = rng();
  std::vector<char> fail(trials, 0);
  parallel_for(trials, [&](std::size_t t) {
    Rng trng = derive_rng(master, "deltaB", t);
    RunRecord rec = wrapper(state, trng);
    fail[t] = !evaluate_success(predicate, rec.p, rec.conditional_test_state);
  });
  int failures = 0;
  for (char f : fail) failures += f;
  auto ci = wilson_interval(failures, trials);
  return {static_cast<double>(failures) / trials, ci.halfwidth(), trials};
}

// delta': the permutation is drawn per trial and the wrapper runs on the
// permuted state, with conditional states computed under that permutation.
inline ErrorEstimate delta_prime(const MultipartiteState& state,
                                 const WrapperFn& wrapper,
                                 const SuccessPredicate& predicate, int trials,
                                 Rng& rng) {
  std::uint64_t master = rng();
  std::vector<char> fail(trials, 0);
  parallel_for(trials, [&](std::size_t t) {
    Rng trng = derive_rng(master, "deltaP", t);
    auto perm = random_permutation(state.n_sites, trng);
    auto permuted = permute_sites(state, perm);
    RunRecord rec = wrapper(permuted, trng);
    fail[t] = !evaluate_success(predicate, rec.p, rec.conditional_test_state);
  });
  int failures = 0;
  for (char f : fail) failures += f;
  auto ci = wilson_interval(failures, trials);
  return {static_cast<double>(failures) / trials, ci.halfwidth(), trials};
}

// Second error term of the calibrated wrapper bound:
// 6 sqrt(k_A^2 ln^2(k_A/delta_A) ln(d) / (N eps^2))
inline double wrapper_overhead_bound(int k_A, double delta_A, int d, int N,
                                double eps) {
  double lg = std::log(k_A / delta_A);
  return 6.0 * std::sqrt(k_A * static_cast<double>(k_A) * lg * lg * std::log(d) /
                         (N * eps * eps));
}

// Tail bound on ||rho_{l,r,w,v} - rho_{l,r,w}||_1 > eps':
// sqrt(16 k^2 ln(d) / (N eps'^2))
inline double posterior_drift_bound(int k, int d, int N, double eps_prime) {
  return std::sqrt(16.0 * k * k * std::log(d) / (N * eps_prime * eps_prime));
}

// Analog for the general wrapper: 12 sqrt(2 k^3 d^2 ln(d) / (N eps'^2))
inline double block_posterior_drift_bound(int k, int d, int N, double eps_prime) {
  return 12.0 * std::sqrt(2.0 * k * k * k * d * d * std::log(d) /
                          (N * eps_prime * eps_prime));
}

// ---- no-calibration wrapper ----

// Same sampling as algorithm1_run; the returned test state conditions on the
// prediction only, estimated by mixing run conditionals over a stratified
// batch of runs sharing the same prediction.
inline std::pair<Prediction, DensityMatrix> algorithm3_run(
    const MultipartiteState& state, const IidAlgorithmSpec& alg, Rng& rng,
    int mixing_runs = 2000) {
  RunRecord first = algorithm1_run(state, alg, rng);
  std::string key = prediction_key(first.p);
  Mat acc = first.conditional_test_state.rho;
  int hits = 1;
  for (int t = 1; t < mixing_runs; ++t) {
    RunRecord rec = algorithm1_run(state, alg, rng);
    if (prediction_key(rec.p) == key) {
      acc += rec.conditional_test_state.rho;
      ++hits;
    }
  }
  return {first.p, DensityMatrix(symmetrize(acc / hits), false)};
}

// Exact conditional-on-prediction states for site-uniform product mixtures
// with a deterministic predictor: per branch, the learning outcomes are
// independent across devices, so the prediction law given a branch is the
// product law over the k_A first-hit outcomes.
inline std::map<std::string, std::pair<double, Mat>> algorithm3_conditional_exact(
    const MultipartiteState& state, const IidAlgorithmSpec& alg) {
  if (state.is_dense())
    throw std::invalid_argument("exact conditional requires a product mixture");
  const auto& branches = state.mixture_rep().branches;
  const int kA = alg.k_A();
  long tuples = 1;
  for (const auto& dev : alg.devices) {
    tuples *= dev.povm.outcomes();
    if (tuples > 200000)
      throw std::invalid_argument("prediction fiber too large to enumerate");
  }
  std::map<std::string, std::pair<double, Mat>> out;
  Rng dummy(0);
  for (const auto& b : branches) {
    // per-device outcome laws under this branch's single-site factor
    std::vector<std::vector<double>> law(kA);
    for (int t = 0; t < kA; ++t)
      law[t] = apply_channel(alg.devices[t].povm, b.factors[0]);
    std::vector<int> outc(kA, 0);
    for (long tup = 0; tup < tuples; ++tup) {
      long r = tup;
      double prob = b.weight;
      for (int t = kA - 1; t >= 0; --t) {
        outc[t] = static_cast<int>(r % alg.devices[t].povm.outcomes());
        r /= alg.devices[t].povm.outcomes();
        prob *= law[t][outc[t]];
      }
      if (prob <= 0) continue;
      Prediction p = alg.predictor(outc, dummy);
      std::string key = prediction_key(p);
      auto it = out.find(key);
      if (it == out.end())
        out.emplace(key,
                    std::make_pair(prob, Mat(prob * b.factors[0])));
      else {
        it->second.first += prob;
        it->second.second += prob * b.factors[0];
      }
    }
  }
  for (auto& [k, pr] : out) pr.second /= pr.first;
  return out;
}

// ---- the permutation-conditioning counterexample ----

namespace appendix_a_detail {

// exact conditional training-string distribution: counts over (N-1)-bit
// training masks, conditioned on the test bit taking `test_value`
inline std::map<std::uint32_t, long> training_counts(const std::vector<int>& x,
                                                     int test_value) {
  const int n = static_cast<int>(x.size());
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  std::map<std::uint32_t, long> counts;
  do {
    if (x[perm[n - 1]] != test_value) continue;
    std::uint32_t mask = 0;
    for (int i = 0; i < n - 1; ++i) mask = (mask << 1) | x[perm[i]];
    ++counts[mask];
  } while (std::next_permutation(perm.begin(), perm.end()));
  return counts;
}

}  // namespace appendix_a_detail

// Exact rational equality of the two conditional training distributions for
// the two-string construction (N/2 zeros + N/2 ones conditioned on test bit 1
// versus N/2+1 zeros + N/2-1 ones conditioned on test bit 0).
inline bool appendix_a_distribution_check(int N) {
  if (N % 2 != 0 || N < 4 || N > 10)
    throw std::invalid_argument("appendix_a_distribution_check: even 4 <= N <= 10");
  std::vector<int> x1(N, 0), x2(N, 0);
  for (int i = N / 2; i < N; ++i) x1[i] = 1;
  for (int i = N / 2 + 1; i < N; ++i) x2[i] = 1;
  auto c1 = appendix_a_detail::training_counts(x1, 1);
  auto c2 = appendix_a_detail::training_counts(x2, 0);
  long t1 = 0, t2 = 0;
  for (auto& [m, c] : c1) t1 += c;
  for (auto& [m, c] : c2) t2 += c;
  if (c1.size() != c2.size()) return false;
  for (auto& [mask, cnt] : c1) {
    auto it = c2.find(mask);
    if (it == c2.end()) return false;
    if (cnt * t2 != it->second * t1) return false;  // exact rational equality
  }
  return true;
}

// Exact delta' of the mean estimator on the balanced string, by full
// enumeration over all N! permutations.
inline double appendix_a_delta_prime_exact(int N, double epsilon) {
  if (N % 2 != 0 || N < 2 || N > 10)
    throw std::invalid_argument("appendix_a_delta_prime_exact: even 2 <= N <= 10");
  std::vector<int> x(N, 0);
  for (int i = N / 2; i < N; ++i) x[i] = 1;
  std::vector<int> perm(N);
  for (int i = 0; i < N; ++i) perm[i] = i;
  long failures = 0, total = 0;
  do {
    double mean = 0;
    for (int i = 0; i < N - 1; ++i) mean += x[perm[i]];
    mean /= (N - 1);
    if (std::abs(x[perm[N - 1]] - mean) > epsilon) ++failures;
    ++total;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(failures) / total;
}

// Empirical coupon-collector failure rate: all k_A devices must appear in K
// uniform draws.
inline double coverage_failure_rate(int k_A, int K, int draws, Rng& rng) {
  int misses = 0;
  std::vector<char> seen(k_A);
  for (int t = 0; t < draws; ++t) {
    std::fill(seen.begin(), seen.end(), 0);
    int distinct = 0;
    for (int i = 0; i < K && distinct < k_A; ++i) {
      int r = uniform_int(rng, 0, k_A - 1);
      if (!seen[r]) {
        seen[r] = 1;
        ++distinct;
      }
    }
    if (distinct < k_A) ++misses;
  }
  return static_cast<double>(misses) / draws;
}

}  // namespace noniid
