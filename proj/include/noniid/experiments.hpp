#pragma once

#include <chrono>
#include <fstream>
#include <iomanip>
#include <json.hpp>


#include "noniid/definetti.hpp"
#include "noniid/protocols.hpp"

namespace noniid {

struct ExperimentConfig {
  std::string subcommand;
  int N = 16;
  int d = 2;
  int k = 1;
  int kA = 8;
  double epsilon = 0.1;
  double delta = 0.1;
  int trials = 10000;
  std::uint64_t seed = 1;
  std::string state = "basis-mixture";  // iid|basis-mixture|haar-mixture|ghz
  std::string family = "pauli3";  // computational|pauli3|clifford1|cliffordN
  std::string out;                // empty = stdout
  std::string format = "csv";     // csv|json
  int haar_branches = 10000;
  int bl = 4;       // appendix-b l
  int bw = 2;       // appendix-b |w|
  int quad = 256;   // appendix-b quadrature points
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline const std::vector<std::string>& subcommand_names() {
  static const std::vector<std::string> names = {
      "definetti-thm2", "definetti-gf", "appendix-b",        "appendix-a",
      "shadows-bench",  "verify",       "verify-expectation", "fidelity",
      "tomography",     "mixedness",    "coupon",             "distortion"};
  return names;
}

inline std::string canonical_config_string(const ExperimentConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "subcommand=" << c.subcommand << ";N=" << c.N << ";d=" << c.d
     << ";k=" << c.k << ";kA=" << c.kA << ";epsilon=" << c.epsilon
     << ";delta=" << c.delta << ";trials=" << c.trials << ";seed=" << c.seed
     << ";state=" << c.state << ";family=" << c.family << ";format=" << c.format
     << ";haar_branches=" << c.haar_branches << ";bl=" << c.bl << ";bw=" << c.bw
     << ";quad=" << c.quad;
  return os.str();
}

inline std::string config_hash(const ExperimentConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char ch : canonical_config_string(c)) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline void validate_config(const ExperimentConfig& c) {
  std::vector<std::string> errors;
  const auto& names = subcommand_names();
  if (std::find(names.begin(), names.end(), c.subcommand) == names.end())
    errors.push_back("unknown subcommand '" + c.subcommand + "'");
  if (c.N < 2) errors.push_back("N must be at least 2");
  if (c.d < 2) errors.push_back("d must be at least 2");
  if (c.trials < 1) errors.push_back("trials must be positive");
  if (c.epsilon <= 0 || c.epsilon >= 1)
    errors.push_back("epsilon must lie in (0, 1)");
  if (c.delta <= 0 || c.delta >= 1) errors.push_back("delta must lie in (0, 1)");
  if (c.subcommand == "definetti-thm2" || c.subcommand == "definetti-gf") {
    if (c.k < 1 || 2 * c.k >= c.N)
      errors.push_back(
          "k out of range: the randomized de Finetti estimators require "
          "1 <= k < N/2");
  }
  if (c.subcommand == "appendix-b") {
    if (c.bl < 1) errors.push_back("l must be at least 1");
    if (c.bw < 0 || c.bw > c.bl) errors.push_back("w must satisfy 0 <= w <= l");
    if (c.quad < 64) errors.push_back("quad must be at least 64");
  }
  if (c.subcommand == "appendix-a" && (c.N % 2 != 0 || c.N < 4 || c.N > 10))
    errors.push_back("appendix-a needs an even N between 4 and 10");
  if (c.state != "iid" && c.state != "basis-mixture" &&
      c.state != "haar-mixture" && c.state != "ghz")
    errors.push_back("unknown state '" + c.state + "'");
  if (c.family != "computational" && c.family != "pauli3" &&
      c.family != "clifford1" && c.family != "cliffordN")
    errors.push_back("unknown family '" + c.family + "'");
  if (c.format != "csv" && c.format != "json")
    errors.push_back("format must be csv or json");
  if (!errors.empty()) {
    std::string all;
    for (const auto& e : errors) all += (all.empty() ? "" : "; ") + e;
    throw ConfigError(all);
  }
}

// key = value lines, '#' comments. CLI flags override file values.
inline ExperimentConfig load_config(const std::string& path,
                                    ExperimentConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r'; };
    std::string stripped;
    for (char c : line)
      if (!is_space(c)) stripped += c;
    if (stripped.empty()) continue;
    auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config parse error at line " + std::to_string(lineno) +
                        ", column " + std::to_string(line.size()) +
                        ": expected key = value");
    std::string key = stripped.substr(0, eq), val = stripped.substr(eq + 1);
    try {
      if (key == "subcommand") base.subcommand = val;
      else if (key == "N") base.N = std::stoi(val);
      else if (key == "d") base.d = std::stoi(val);
      else if (key == "k") base.k = std::stoi(val);
      else if (key == "kA") base.kA = std::stoi(val);
      else if (key == "epsilon") base.epsilon = std::stod(val);
      else if (key == "delta") base.delta = std::stod(val);
      else if (key == "trials") base.trials = std::stoi(val);
      else if (key == "seed") base.seed = std::stoull(val);
      else if (key == "state") base.state = val;
      else if (key == "family") base.family = val;
      else if (key == "out") base.out = val;
      else if (key == "format") base.format = val;
      else if (key == "haar_branches") base.haar_branches = std::stoi(val);
      else if (key == "l") base.bl = std::stoi(val);
      else if (key == "w") base.bw = std::stoi(val);
      else if (key == "quad") base.quad = std::stoi(val);
      else
        throw ConfigError("config parse error at line " + std::to_string(lineno) +
                          ": unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw ConfigError("config parse error at line " + std::to_string(lineno) +
                        ", column " + std::to_string(eq + 2) +
                        ": bad value for '" + key + "'");
    }
  }
  return base;
}

struct ResultEnvelope {
  ExperimentConfig config;
  std::string hash;
  std::string started, finished;
  std::map<std::string, double> metrics;
  std::map<std::string, double> bounds;
  std::map<std::string, bool> passes;
  std::string csv;
  bool bound_violation = false;
};

namespace experiments_detail {

inline std::string timestamp() {
  auto now = std::chrono::system_clock::now();
  auto t = std::chrono::system_clock::to_time_t(now);
  std::ostringstream os;
  os << std::put_time(std::gmtime(&t), "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

inline MultipartiteState build_state(const ExperimentConfig& c, Rng& rng) {
  if (c.state == "iid") return iid_state(random_density(c.d, rng), c.N);
  if (c.state == "basis-mixture") return basis_mixture(c.d, c.N);
  if (c.state == "haar-mixture")
    return haar_mixture(c.N, c.haar_branches, rng, c.d);
  return ghz_pure(c.N);  // qubit sites
}

inline MeasurementFamily build_family(const ExperimentConfig& c, Rng& rng) {
  MeasurementFamily f;
  f.id = c.family;
  if (c.family == "computational") {
    f.members.push_back(BasisMeasurement(Mat::Identity(c.d, c.d)));
  } else if (c.family == "pauli3") {
    f.members = family_pauli3();
  } else if (c.family == "clifford1") {
    f.members = family_clifford1();
  } else {  // cliffordN: a sampled pool of multi-qubit cliffords
    int n_qubits = 0;
    while ((1 << n_qubits) < c.d) ++n_qubits;
    for (int i = 0; i < 64; ++i) f.members.push_back(random_clifford(n_qubits, rng));
  }
  return f;
}


}  // namespace experiments_detail

inline ResultEnvelope run_experiment(const ExperimentConfig& cfg) {
  validate_config(cfg);
  ResultEnvelope env;
  env.config = cfg;
  env.hash = config_hash(cfg);
  env.started = experiments_detail::timestamp();
  Rng rng = derive_rng(cfg.seed, cfg.subcommand);
  std::ostringstream csv;
  csv.precision(17);

  if (cfg.subcommand == "definetti-thm2" || cfg.subcommand == "definetti-gf") {
    auto state = experiments_detail::build_state(cfg, rng);
    DefinettiEstimate est;
    if (cfg.subcommand == "definetti-thm2") {
      auto fam = experiments_detail::build_family(cfg, rng);
      est = randomized_definetti_lhs(state, fam, cfg.k, cfg.trials, rng);
    } else {
      est = gf_lhs(state, pauli6_povm(), cfg.k, cfg.trials, rng);
    }
    csv << "N,k,d,family_id,trials,lhs_mean,lhs_stderr,rhs_bound,seed\n"
        << est.N << ',' << est.k << ',' << est.d << ',' << est.family_id << ','
        << est.trials << ',' << est.lhs_mean << ',' << est.std_error << ','
        << est.rhs_bound << ',' << cfg.seed << '\n';
    env.metrics["lhs_mean"] = est.lhs_mean;
    env.metrics["lhs_stderr"] = est.std_error;
    env.bounds["rhs_bound"] = est.rhs_bound;
    bool ok = est.lhs_mean + 3 * est.std_error <= est.rhs_bound;
    env.passes["bound_holds"] = ok;
    env.bound_violation = !ok;
  } else if (cfg.subcommand == "appendix-b") {
    auto rec = appendix_b_numeric(cfg.bl, cfg.bw, cfg.k, cfg.quad);
    double diff = (rec.numeric_reduced - rec.analytic_reduced).cwiseAbs().maxCoeff();
    csv << "l,w,k,p_star,reduced_diff,lhs_numeric,analytic_bound\n"
        << rec.l << ',' << rec.w_weight << ',' << rec.k << ',' << rec.p_star
        << ',' << diff << ',' << rec.lhs_numeric << ',' << rec.analytic_bound
        << '\n';
    env.metrics["p_star"] = rec.p_star;
    env.metrics["reduced_diff"] = diff;
    env.metrics["lhs_numeric"] = rec.lhs_numeric;
    env.bounds["analytic_bound"] = rec.analytic_bound;
    bool ok = diff <= 1e-8 && rec.lhs_numeric <= rec.analytic_bound;
    env.passes["bound_holds"] = ok;
    env.bound_violation = !ok;
  } else if (cfg.subcommand == "appendix-a") {
    bool equal = appendix_a_distribution_check(cfg.N);
    double dp = appendix_a_delta_prime_exact(cfg.N, cfg.epsilon);
    csv << "N,epsilon,distributions_equal,delta_prime_lower\n"
        << cfg.N << ',' << cfg.epsilon << ',' << (equal ? 1 : 0) << ',' << dp
        << '\n';
    env.metrics["delta_prime_lower"] = dp;
    env.passes["distributions_equal"] = equal;
    env.passes["delta_prime_large"] = dp >= 0.25;
    env.bound_violation = !(equal && dp >= 0.25);
  } else if (cfg.subcommand == "shadows-bench") {
    // unbiasedness residual (exact enumeration) + sampled concentration
    auto sigma = random_density(2, rng);
    auto p3 = pauli_basis_measurements();
    std::vector<double> w3(3, 1.0 / 3);
    double residual =
        (shadow_mean_exact(sigma, p3, w3) - sigma.rho).cwiseAbs().maxCoeff();
    Mat obs = projector(basis_vector(2, 0));
    double truth = (obs * sigma.rho).trace().real();
    std::vector<double> vals(cfg.trials);
    std::uint64_t master = rng();
    parallel_for(cfg.trials, [&](std::size_t t) {
      Rng trng = derive_rng(master, "bench", t);
      auto bm = random_clifford(1, trng);
      auto probs = apply_channel(bm.to_povm(), sigma);
      int v = static_cast<int>(sample_index(trng, probs));
      vals[t] = (global_snapshot(bm, v, 2).matrix * obs).trace().real();
    });
    double est = median_of_means(vals, 10);
    csv << "trials,exact_residual,estimate,truth,abs_dev\n"
        << cfg.trials << ',' << residual << ',' << est << ',' << truth << ','
        << std::abs(est - truth) << '\n';
    env.metrics["exact_residual"] = residual;
    env.metrics["abs_dev"] = std::abs(est - truth);
    env.passes["unbiased"] = residual <= 1e-12;
    env.bound_violation = residual > 1e-12;
  } else if (cfg.subcommand == "verify") {
    auto state = experiments_detail::build_state(cfg, rng);
    std::vector<Vec> targets = {basis_vector(cfg.d, 0),
                                basis_vector(cfg.d, cfg.d - 1)};
    std::uint64_t master = rng();
    csv << "trial,l,coverage_ok,prediction,success,max_fidelity\n";
    int accepts = 0, sound = 0;
    std::vector<std::string> rows(cfg.trials);
    std::vector<int> acc(cfg.trials, 0), snd(cfg.trials, 0);
    parallel_for(cfg.trials, [&](std::size_t t) {
      Rng trng = derive_rng(master, "verify", t);
      auto rec = verify_pure_protocol(state, targets, cfg.epsilon, cfg.delta,
                                      ShadowMode::Global, trng);
      double maxfid = 0;
      for (const auto& tg : targets)
        maxfid =
            std::max(maxfid, fidelity_with_pure(tg, rec.conditional_test_state));
      VerifyPurePredicate pred{targets, cfg.epsilon};
      bool success = evaluate_success(pred, rec.p, rec.conditional_test_state);
      const auto* b = std::get_if<BitPrediction>(&rec.p);
      if (b && b->value == 0) {
        acc[t] = 1;
        snd[t] = maxfid >= 1 - cfg.epsilon;
      }
      std::ostringstream row;
      row.precision(17);
      row << t << ',' << rec.l << ',' << rec.coverage_ok << ','
          << prediction_summary(rec.p) << ',' << success << ',' << maxfid << '\n';
      rows[t] = row.str();
    });
    for (int t = 0; t < cfg.trials; ++t) {
      csv << rows[t];
      accepts += acc[t];
      sound += snd[t];
    }
    env.metrics["accept_rate"] = static_cast<double>(accepts) / cfg.trials;
    env.metrics["sound_given_accept"] =
        accepts ? static_cast<double>(sound) / accepts : 1.0;
  } else if (cfg.subcommand == "verify-expectation") {
    auto adversary = experiments_detail::build_state(cfg, rng);
    int K = std::max(1, static_cast<int>(std::ceil(2 * std::log(1 / cfg.epsilon))));
    auto res = verification_expectation(adversary, basis_vector(2, 0), cfg.epsilon,
                                        cfg.kA, K, cfg.N, cfg.trials, rng);
    csv << "completeness,completeness_ci,soundness,soundness_ci\n"
        << res.completeness << ',' << res.completeness_ci << ',' << res.soundness
        << ',' << res.soundness_ci << '\n';
    env.metrics["completeness"] = res.completeness;
    env.metrics["soundness"] = res.soundness;
    env.bounds["completeness_floor"] = 1 - cfg.epsilon;
    env.bounds["soundness_cap"] = cfg.epsilon;
    bool ok = res.completeness >= 1 - cfg.epsilon - res.completeness_ci &&
              res.soundness <= cfg.epsilon + res.soundness_ci;
    env.passes["expectation_bounds"] = ok;
    env.bound_violation = !ok;
  } else if (cfg.subcommand == "fidelity") {
    Vec psi = basis_vector(2, 0);
    std::uint64_t master = rng();
    csv << "trial,l,coverage_ok,prediction,success,true_fidelity\n";
    std::vector<int> good(cfg.trials, 0);
    std::vector<std::string> rows(cfg.trials);
    parallel_for(cfg.trials, [&](std::size_t t) {
      Rng trng = derive_rng(master, "fid", t);
      auto fa = make_fidelity_alg(psi, cfg.epsilon, trng);
      int N = std::max(cfg.N, 2 * (fa.alg.calibration_block() + 1) + 2);
      auto state = iid_state(DensityMatrix(projector(psi)), N);
      auto rec = algorithm1_run(state, fa.alg, trng);
      double fid = fidelity_with_pure(psi, rec.conditional_test_state);
      bool ok = false;
      if (const auto* s = std::get_if<ScalarPrediction>(&rec.p))
        ok = std::abs(s->value - fid) <= 2 * cfg.epsilon;
      good[t] = ok;
      std::ostringstream row;
      row.precision(17);
      row << t << ',' << rec.l << ',' << rec.coverage_ok << ','
          << prediction_summary(rec.p) << ',' << ok << ',' << fid << '\n';
      rows[t] = row.str();
    });
    int hits = 0;
    for (int t = 0; t < cfg.trials; ++t) {
      csv << rows[t];
      hits += good[t];
    }
    env.metrics["within_2eps_rate"] = static_cast<double>(hits) / cfg.trials;
    env.bounds["target_rate"] = 5.0 / 6;
    bool ok = env.metrics["within_2eps_rate"] >=
              5.0 / 6 - wilson_interval(hits, cfg.trials).halfwidth();
    env.passes["fidelity_rate"] = ok;
    env.bound_violation = !ok;
  } else if (cfg.subcommand == "tomography" || cfg.subcommand == "mixedness") {
    auto state = experiments_detail::build_state(cfg, rng);
    std::uint64_t master = rng();
    csv << "trial,l,coverage_ok,prediction,success,cond_trace_dist\n";
    std::vector<std::string> rows(cfg.trials);
    std::vector<int> succ(cfg.trials, 0);
    parallel_for(cfg.trials, [&](std::size_t t) {
      Rng trng = derive_rng(master, "tom", t);
      RunRecord rec;
      bool success = false;
      double diag = 0;
      if (cfg.subcommand == "tomography") {
        rec = tomography_protocol(state, cfg.kA, cfg.delta, trng);
        TomographyPredicate pred{cfg.epsilon};
        success = evaluate_success(pred, rec.p, rec.conditional_test_state);
        if (const auto* sd = std::get_if<StateDescription>(&rec.p))
          diag = trace_norm(
              symmetrize(sd->rho - rec.conditional_test_state.rho));
      } else {
        rec = mixedness_protocol(state, cfg.kA, cfg.epsilon, cfg.delta, trng);
        MixednessPredicate pred{cfg.epsilon};
        success = evaluate_success(pred, rec.p, rec.conditional_test_state);
        diag = trace_norm(symmetrize(rec.conditional_test_state.rho -
                                     0.5 * Mat::Identity(2, 2)));
      }
      succ[t] = success;
      std::ostringstream row;
      row.precision(17);
      row << t << ',' << rec.l << ',' << rec.coverage_ok << ','
          << prediction_summary(rec.p) << ',' << success << ',' << diag << '\n';
      rows[t] = row.str();
    });
    int hits = 0;
    for (int t = 0; t < cfg.trials; ++t) {
      csv << rows[t];
      hits += succ[t];
    }
    env.metrics["success_rate"] = static_cast<double>(hits) / cfg.trials;
    env.metrics["delta_hat"] = 1.0 - env.metrics["success_rate"];
    env.metrics["ci_halfwidth"] =
        wilson_interval(cfg.trials - hits, cfg.trials).halfwidth();
  } else if (cfg.subcommand == "coupon") {
    csv << "kA,K,failure_rate,union_bound\n";
    bool all_ok = true;
    for (int ka : {2, 4, 8}) {
      int K = ka * static_cast<int>(std::ceil(std::log(ka / cfg.delta)));
      double rate = coverage_failure_rate(ka, K, cfg.trials, rng);
      double bound = coverage_failure_bound(ka, K);
      double sig = std::sqrt(bound * (1 - bound) / cfg.trials);
      csv << ka << ',' << K << ',' << rate << ',' << bound << '\n';
      env.metrics["rate_kA" + std::to_string(ka)] = rate;
      env.bounds["bound_kA" + std::to_string(ka)] = bound;
      all_ok = all_ok && rate <= bound + 3 * sig;
    }
    env.passes["coupon_bound"] = all_ok;
    env.bound_violation = !all_ok;
  } else if (cfg.subcommand == "distortion") {
    double est = distortion_lower_bound(pauli6_povm(), cfg.trials, rng);
    csv << "trials,distortion_lower_bound,cap_2d\n"
        << cfg.trials << ',' << est << ',' << 2 * cfg.d << '\n';
    env.metrics["distortion_lower_bound"] = est;
    env.bounds["cap_2d"] = 2.0 * cfg.d;
    bool ok = est <= 2.0 * cfg.d && est <= 3.0 + 1e-6;
    env.passes["distortion_bounds"] = ok;
    env.bound_violation = !ok;
  }

  env.csv = csv.str();
  env.finished = experiments_detail::timestamp();
  return env;
}

inline std::string envelope_json(const ResultEnvelope& env) {
  nlohmann::json j;
  j["subcommand"] = env.config.subcommand;
  j["config"] = canonical_config_string(env.config);
  j["config_hash"] = env.hash;
  j["seed"] = env.config.seed;
  j["log_base"] = "natural";  // every bound formula uses ln
  j["started"] = env.started;
  j["finished"] = env.finished;
  for (const auto& [k, v] : env.metrics) j["metrics"][k] = v;
  for (const auto& [k, v] : env.bounds) j["bounds"][k] = v;
  for (const auto& [k, v] : env.passes) j["passes"][k] = v;
  j["bound_violation"] = env.bound_violation;
  return j.dump(2);
}

}  // namespace noniid
