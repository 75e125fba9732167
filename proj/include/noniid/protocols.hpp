#pragma once

#include "noniid/clifford.hpp"
#include "noniid/learning.hpp"
#include "noniid/shadows.hpp"

namespace noniid {

// ---- classical-shadow learners ----

enum class ShadowMode { Global, Local };

// Builds a non-adaptive shadow learner: k_A basis devices drawn once at
// construction (global Clifford on the whole site, or a per-qubit tensor of
// single-qubit Cliffords), and a median-of-means predictor over the target
// observables. Predictions are clamped to [0, 1].
inline IidAlgorithmSpec make_shadow_alg(int n_qubits, int k_A, int groups,
                                        std::vector<Mat> observables,
                                        ShadowMode mode, double delta_A,
                                        Rng& rng) {
  const int d = 1 << n_qubits;
  IidAlgorithmSpec alg;
  alg.delta_A = delta_A;
  std::vector<Mat> units;
  std::vector<std::vector<Mat>> locals;  // per device, per qubit
  for (int t = 0; t < k_A; ++t) {
    if (mode == ShadowMode::Global) {
      auto bm = n_qubits == 0 ? BasisMeasurement(Mat::Identity(1, 1))
                              : random_clifford(n_qubits, rng);
      units.push_back(bm.unitary);
      alg.devices.push_back({bm.to_povm(), bm.unitary});
    } else {
      std::vector<Mat> qs;
      Mat u = Mat::Identity(1, 1);
      for (int q = 0; q < n_qubits; ++q) {
        Mat uq = random_clifford(1, rng).unitary;
        qs.push_back(uq);
        u = tensor(u, uq);
      }
      locals.push_back(qs);
      BasisMeasurement bm(u);
      units.push_back(u);
      alg.devices.push_back({bm.to_povm(), u});
    }
  }
  alg.predictor = [n_qubits, d, groups, mode, units, locals,
                   observables = std::move(observables)](
                      const std::vector<int>& outcomes, Rng&) -> Prediction {
    std::vector<ShadowSnapshot> snaps;
    snaps.reserve(outcomes.size());
    for (std::size_t t = 0; t < outcomes.size(); ++t) {
      if (mode == ShadowMode::Global) {
        snaps.push_back(
            global_snapshot(BasisMeasurement(units[t]), outcomes[t], d));
      } else {
        std::vector<std::pair<Mat, int>> pq;
        for (int q = 0; q < n_qubits; ++q) {
          int bit = (outcomes[t] >> (n_qubits - 1 - q)) & 1;
          pq.push_back({locals[t][q], bit});
        }
        snaps.push_back(local_snapshot(pq));
      }
    }
    auto vals = estimate_expectations(snaps, observables, groups);
    ExpectationTuple mu;
    for (double v : vals) mu.values.push_back(std::clamp(v, 0.0, 1.0));
    return mu;
  };
  return alg;
}

// Direct i.i.d. run of a non-adaptive learner on sigma^(x)k_A: device t
// measures its own fresh copy.
inline Prediction run_iid_directly(const IidAlgorithmSpec& alg,
                                   const DensityMatrix& sigma, Rng& rng) {
  std::vector<int> outcomes(alg.k_A());
  for (int t = 0; t < alg.k_A(); ++t) {
    auto probs = apply_channel(alg.devices[t].povm, sigma);
    outcomes[t] = static_cast<int>(sample_index(rng, probs));
  }
  return alg.predictor(outcomes, rng);
}

// ---- verification of pure states ----

// Accept iff some target's shadow estimate clears 1 - eps/2. The wrapper is
// the calibrated one; k_A defaults to the largest learner the copy budget
// N > 2 (k_A ceil(ln(k_A/delta_A)) + 1) admits.
struct VerifyOptions {
  int k_A = 0;        // 0 = auto from N
  int groups = 1;
  double delta_A = 0.02;
};

inline int max_feasible_k_A(int N, double delta_A) {
  int best = 0;
  for (int ka = 1; ka <= N; ++ka) {
    double f = std::log(ka / delta_A);
    int K = ka * std::max(1, static_cast<int>(std::ceil(f)));
    if (N > 2 * (K + 1)) best = ka;
  }
  return best;
}

inline RunRecord verify_pure_protocol(const MultipartiteState& state,
                                      const std::vector<Vec>& targets,
                                      double epsilon, double /*delta*/,
                                      ShadowMode mode, Rng& rng,
                                      VerifyOptions opt = {}) {
  if (targets.empty()) throw std::invalid_argument("verify: no targets");
  int n_qubits = 0;
  while ((1 << n_qubits) < state.site_dim) ++n_qubits;
  if ((1 << n_qubits) != state.site_dim)
    throw std::invalid_argument("verify: site dimension is not a power of two");
  int kA = opt.k_A > 0 ? opt.k_A : max_feasible_k_A(state.n_sites, opt.delta_A);
  if (kA < 1) throw std::invalid_argument("verify: N too small for any learner");

  std::vector<Mat> obs;
  for (const auto& t : targets) obs.push_back(projector(t));
  auto shadow = make_shadow_alg(n_qubits, kA, opt.groups, obs, mode,
                                opt.delta_A, rng);
  IidAlgorithmSpec alg;
  alg.devices = shadow.devices;
  alg.delta_A = shadow.delta_A;
  auto inner = shadow.predictor;
  alg.predictor = [inner, epsilon](const std::vector<int>& outcomes,
                                   Rng& prng) -> Prediction {
    Prediction mu = inner(outcomes, prng);
    const auto& vals = std::get<ExpectationTuple>(mu).values;
    for (double v : vals)
      if (v >= 1.0 - epsilon / 2) return BitPrediction{0};  // accept
    return BitPrediction{1};
  };
  return algorithm1_run(state, alg, rng);
}

// ---- verification in expectation (acceptance projector form) ----

struct VerificationExpectation {
  double completeness = 0, completeness_ci = 0;
  double soundness = 0, soundness_ci = 0;
};

// Completeness: acceptance frequency of the median-of-means threshold
// mu_v >= 1 - eps/5 on the pure i.i.d. input. Soundness: Monte Carlo of
// tr(Pi_Accept (x) (I - Psi) rho) on the adversary state, sampling (l, U,
// outcomes) and weighting accepted runs by the conditional test-state
// infidelity.
inline VerificationExpectation verification_expectation(
    const MultipartiteState& adversary, const Vec& psi, double epsilon, int k,
    int K, int N, int trials, Rng& rng) {
  if (adversary.site_dim != 2 || psi.size() != 2)
    throw std::invalid_argument("verification_expectation: qubit systems only");
  if (k < 1 || 2 * k >= N)
    throw std::invalid_argument("verification_expectation: 1 <= k < N/2");
  const int M = N / 2;
  Mat target = projector(psi);
  std::uint64_t master = rng();

  // completeness on psi^(x)N: w outcomes are irrelevant for an i.i.d. input
  std::vector<char> accept(trials, 0);
  parallel_for(trials, [&](std::size_t t) {
    Rng trng = derive_rng(master, "vexp-c", t);
    std::vector<double> vals(k);
    for (int i = 0; i < k; ++i) {
      auto bm = random_clifford(1, trng);
      auto probs = apply_channel(bm.to_povm(), target);
      int v = static_cast<int>(sample_index(trng, probs));
      vals[i] = (global_snapshot(bm, v, 2).matrix * target).trace().real();
    }
    accept[t] = median_of_means(vals, K) >= 1.0 - epsilon / 5;
  });
  int acc_count = 0;
  for (char a : accept) acc_count += a;

  VerificationExpectation out;
  out.completeness = static_cast<double>(acc_count) / trials;
  out.completeness_ci = wilson_interval(acc_count, trials).halfwidth();

  // soundness on the adversary
  if (adversary.n_sites < N)
    throw std::invalid_argument("verification_expectation: adversary too small");
  if (!fastpath::site_uniform(adversary))
    throw std::invalid_argument(
        "verification_expectation: product-mixture adversary required");
  auto ens = fastpath::make_ensemble(adversary);
  std::vector<double> weight(trials, 0.0);
  parallel_for(trials, [&](std::size_t t) {
    Rng trng = derive_rng(master, "vexp-s", t);
    int l = k + 1 + uniform_int(trng, 0, M - 1);
    std::vector<double> post(ens.weights);
    std::vector<double> vals(k);
    // projection block first (sites k+1..l), then the learning block
    for (int site = l - 1; site >= k; --site) {
      auto bm = random_clifford(1, trng);
      auto tab = fastpath::povm_table(ens, bm.to_povm());
      fastpath::sample_posterior_outcome(post, tab, 2, trng);
    }
    for (int site = k - 1; site >= 0; --site) {
      auto bm = random_clifford(1, trng);
      auto tab = fastpath::povm_table(ens, bm.to_povm());
      int v = fastpath::sample_posterior_outcome(post, tab, 2, trng);
      vals[site] = (global_snapshot(bm, v, 2).matrix * target).trace().real();
    }
    if (median_of_means(vals, K) >= 1.0 - epsilon / 5) {
      Mat cond = symmetrize(fastpath::posterior_mean(ens, post));
      weight[t] = 1.0 - fidelity_with_pure(psi, cond);
    }
  });
  RunningStat rs;
  for (double x : weight) rs.add(x);
  out.soundness = rs.mean();
  out.soundness_ci = 1.959963984540054 * rs.std_error();
  return out;
}

// ---- direct fidelity estimation ----

// Importance-sampled Pauli estimator: P_i ~ <Psi|P|Psi>^2 / d over the 4^n
// Pauli matrices, each measured m_i times with the POVM {(I-P)/2, (I+P)/2};
// S averages the rescaled parity outcomes.
struct FidelityAlg {
  IidAlgorithmSpec alg;
  std::vector<int> pauli_index;   // per sampled i
  std::vector<int> repeats;       // m_i
};

inline std::vector<Mat> pauli_strings(int n_qubits) {
  std::vector<Mat> singles = {Mat::Identity(2, 2), pauli_x(), pauli_y(), pauli_z()};
  std::vector<Mat> out = {Mat::Identity(1, 1)};
  for (int q = 0; q < n_qubits; ++q) {
    std::vector<Mat> next;
    for (const auto& a : out)
      for (const auto& b : singles) next.push_back(tensor(a, b));
    out = std::move(next);
  }
  return out;
}

// `delta` drives the estimator constants (l, m_i); `coupon_delta` only sets
// the wrapper's learning-block inflation, where a tighter budget costs copies
// rather than measurements.
inline FidelityAlg make_fidelity_alg(const Vec& psi, double epsilon, Rng& rng,
                                     double delta = 1.0 / 6,
                                     double coupon_delta = 0.02) {
  int n_qubits = 0;
  while ((1 << n_qubits) < psi.size()) ++n_qubits;
  if ((1 << n_qubits) != psi.size() || n_qubits > 2)
    throw std::invalid_argument("fidelity: 1 or 2 qubit targets");
  const int d = 1 << n_qubits;

  auto paulis = pauli_strings(n_qubits);
  std::vector<double> law(paulis.size());
  std::vector<double> overlap(paulis.size());
  double nonid = 0;
  for (std::size_t i = 0; i < paulis.size(); ++i) {
    overlap[i] = (psi.adjoint() * paulis[i] * psi)(0, 0).real();
    law[i] = overlap[i] * overlap[i] / d;
    if (i > 0) nonid += law[i];
  }
  if (nonid <= 1e-14)
    throw std::invalid_argument("fidelity: degenerate sampling law");

  const int l = static_cast<int>(std::ceil(1.0 / (epsilon * epsilon * delta)));
  FidelityAlg fa;
  fa.alg.delta_A = coupon_delta;
  for (int i = 0; i < l; ++i) {
    int pi = static_cast<int>(sample_index(rng, law));
    int m = static_cast<int>(
        std::ceil(2.0 * std::log(2.0 / delta) * delta / (overlap[pi] * overlap[pi])));
    m = std::max(m, 1);
    fa.pauli_index.push_back(pi);
    fa.repeats.push_back(m);
    Povm povm;
    povm.elements = {0.5 * (Mat::Identity(d, d) - paulis[pi]),
                     0.5 * (Mat::Identity(d, d) + paulis[pi])};
    povm.labels = {"-", "+"};
    for (int j = 0; j < m; ++j) fa.alg.devices.push_back({povm, std::nullopt});
  }
  std::vector<int> pidx = fa.pauli_index;
  std::vector<int> reps = fa.repeats;
  std::vector<double> ov = overlap;
  fa.alg.predictor = [pidx, reps, ov, l](const std::vector<int>& outcomes,
                                         Rng&) -> Prediction {
    double s = 0;
    std::size_t pos = 0;
    for (int i = 0; i < l; ++i) {
      double group = 0;
      for (int j = 0; j < reps[i]; ++j) group += 2.0 * outcomes[pos + j] - 1.0;
      s += group / (reps[i] * ov[pidx[i]]);
      pos += reps[i];
    }
    return ScalarPrediction{s / l};
  };
  return fa;
}

inline RunRecord fidelity_protocol(const MultipartiteState& state, const Vec& psi,
                                   double epsilon, Rng& rng) {
  auto fa = make_fidelity_alg(psi, epsilon, rng);
  return algorithm1_run(state, fa.alg, rng);
}

// ---- tomography and mixedness testing ----

// Euclidean projection of a Hermitian estimate onto the density-matrix set
// (eigenvalue simplex projection).
inline Mat project_to_density(const Mat& est) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(est));
  Eigen::VectorXd ev = es.eigenvalues();
  const int d = static_cast<int>(ev.size());
  std::vector<double> sorted(ev.data(), ev.data() + d);
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  double cum = 0;
  double theta = 0;
  int rank = 0;
  for (int i = 0; i < d; ++i) {
    cum += sorted[i];
    double cand = (cum - 1.0) / (i + 1);
    if (sorted[i] - cand > 0) {
      theta = cand;
      rank = i + 1;
    }
  }
  (void)rank;
  Eigen::VectorXd proj(d);
  for (int i = 0; i < d; ++i) proj(i) = std::max(ev(i) - theta, 0.0);
  return es.eigenvectors() * proj.asDiagonal() * es.eigenvectors().adjoint();
}

// Linear inversion from pauli6 outcome counts: r_b = 3 (f_{b+} - f_{b-}).
inline Mat pauli6_linear_inversion(const std::vector<double>& freqs) {
  return 0.5 * (Mat::Identity(2, 2) + 3.0 * (freqs[2] - freqs[3]) * pauli_x() +
                3.0 * (freqs[4] - freqs[5]) * pauli_y() +
                3.0 * (freqs[0] - freqs[1]) * pauli_z());
}

// Qubit tomography learner: k_A pauli6 copies, linear inversion, projection
// onto the density-matrix set.
inline IidAlgorithmSpec make_tomography_alg(int k_A, double delta_A) {
  IidAlgorithmSpec alg;
  alg.delta_A = delta_A;
  auto povm = pauli6_povm();
  for (int t = 0; t < k_A; ++t) alg.devices.push_back({povm, std::nullopt});
  alg.predictor = [k_A](const std::vector<int>& outcomes, Rng&) -> Prediction {
    std::vector<double> freqs(6, 0.0);
    for (int o : outcomes) freqs[o] += 1.0 / outcomes.size();
    Mat est = project_to_density(pauli6_linear_inversion(freqs));
    return StateDescription{est};
  };
  return alg;
}

inline RunRecord tomography_protocol(const MultipartiteState& state, int k_A,
                                     double delta_A, Rng& rng) {
  if (state.site_dim != 2)
    throw std::invalid_argument("tomography_protocol: qubit sites only");
  return algorithm1_run(state, make_tomography_alg(k_A, delta_A), rng);
}

// Mixedness tester: tomography estimator plus a threshold on the trace norm
// at the midpoint 3 eps/2 of the promise gap [eps, 2 eps].
inline IidAlgorithmSpec make_mixedness_alg(int k_A, double epsilon,
                                           double delta_A) {
  IidAlgorithmSpec alg = make_tomography_alg(k_A, delta_A);
  auto inner = alg.predictor;
  alg.predictor = [inner, epsilon](const std::vector<int>& outcomes,
                                   Rng& rng) -> Prediction {
    Prediction p = inner(outcomes, rng);
    const Mat& est = std::get<StateDescription>(p).rho;
    double dist = trace_norm(symmetrize(est - 0.5 * Mat::Identity(2, 2)));
    return BitPrediction{dist > 1.5 * epsilon ? 1 : 0};
  };
  return alg;
}

inline RunRecord mixedness_protocol(const MultipartiteState& state, int k_A,
                                    double epsilon, double delta_A, Rng& rng) {
  if (state.site_dim != 2)
    throw std::invalid_argument("mixedness_protocol: qubit sites only");
  return algorithm1_run(state, make_mixedness_alg(k_A, epsilon, delta_A), rng);
}

}  // namespace noniid
