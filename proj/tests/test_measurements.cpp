#include <catch2/catch_amalgamated.hpp>

#include "noniid/povm.hpp"
#include "noniid/stats.hpp"

using namespace noniid;

TEST_CASE("povm validation") {
  REQUIRE(validate_povm(computational_povm(2)).ok);
  Povm half{{0.5 * Mat::Identity(2, 2), 0.5 * Mat::Identity(2, 2)}, {"a", "b"}};
  REQUIRE(validate_povm(half).ok);

  Povm bad{{projector(basis_vector(2, 0)), projector(basis_vector(2, 0))},
           {"0", "0"}};
  auto d = validate_povm(bad);
  REQUIRE_FALSE(d.ok);
  REQUIRE(d.completeness_error > 0.5);
}

TEST_CASE("apply channel") {
  Vec plus(2);
  plus << 1 / std::sqrt(2.0), 1 / std::sqrt(2.0);
  auto probs = apply_channel(computational_povm(2), projector(plus));
  REQUIRE(probs[0] == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(probs[1] == Catch::Approx(0.5).margin(1e-12));

  Rng rng(31);
  for (const auto& povm : {computational_povm(2), pauli6_povm()}) {
    auto p = apply_channel(povm, random_density(2, rng));
    double sum = 0;
    for (double x : p) {
      REQUIRE(x >= -1e-12);
      sum += x;
    }
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-10));
  }

  // pauli6 on |0><0|, ordering (Z+, Z-, X+, X-, Y+, Y-)
  auto p6 = apply_channel(pauli6_povm(), projector(basis_vector(2, 0)));
  std::vector<double> expect{1.0 / 3, 0.0, 1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6};
  for (int i = 0; i < 6; ++i) REQUIRE(p6[i] == Catch::Approx(expect[i]).margin(1e-12));
}

TEST_CASE("sampling outcomes respects correlations") {
  Rng rng(32);
  SECTION("deterministic case") {
    auto s = iid_state(DensityMatrix(projector(basis_vector(2, 0))), 3);
    for (int t = 0; t < 20; ++t) {
      auto [x, cr] = sample_outcome(computational_povm(2), s, 0, rng);
      REQUIRE(x == 0);
    }
  }
  SECTION("basis mixture pins later outcomes") {
    auto s = basis_mixture(2, 5);
    for (int t = 0; t < 10; ++t) {
      auto cur = s;
      auto [x0, cr0] = sample_outcome(computational_povm(2), cur, 0, rng);
      auto next = cr0.post_state;
      for (int j = 0; j < 4; ++j) {
        auto [x, cr] = sample_outcome(computational_povm(2), next, 0, rng);
        REQUIRE(x == x0);
        next = cr.post_state;
      }
    }
  }
  SECTION("empirical frequencies match apply_channel") {
    auto rho = random_density(2, rng);
    auto s = iid_state(rho, 2);
    auto povm = pauli6_povm();
    auto want = apply_channel(povm, rho);
    const int n = 100000;
    std::vector<double> counts(6, 0.0);
    for (int t = 0; t < n; ++t) {
      auto [x, cr] = sample_outcome(povm, s, 0, rng);
      counts[x] += 1;
    }
    for (int i = 0; i < 6; ++i) {
      double se = std::sqrt(want[i] * (1 - want[i]) / n);
      REQUIRE(std::abs(counts[i] / n - want[i]) <= 3 * se + 1e-9);
    }
  }
}

TEST_CASE("pauli6 structure") {
  auto p6 = pauli6_povm();
  REQUIRE(validate_povm(p6).ok);

  // Gram matrix rank 4: effects span Hermitian 2x2 space
  Eigen::MatrixXd gram(6, 6);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j)
      gram(i, j) = (p6.elements[i] * p6.elements[j]).trace().real();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
  lu.setThreshold(1e-10);
  REQUIRE(lu.rank() == 4);

  auto probs = apply_channel(p6, maximally_mixed(2));
  for (double p : probs) REQUIRE(p == Catch::Approx(1.0 / 6).margin(1e-12));
}

TEST_CASE("pauli6 linear inversion is exact") {
  // tomographic completeness: reconstruct any qubit state from exact
  // outcome probabilities, r_b = 3 (p_{b+} - p_{b-})
  Rng rng(33);
  for (int rep = 0; rep < 10; ++rep) {
    auto rho = random_density(2, rng);
    auto p = apply_channel(pauli6_povm(), rho);
    Mat rec = 0.5 * (Mat::Identity(2, 2) + 3.0 * (p[2] - p[3]) * pauli_x() +
                     3.0 * (p[4] - p[5]) * pauli_y() +
                     3.0 * (p[0] - p[1]) * pauli_z());
    REQUIRE((rec - rho.rho).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("distortion lower bound") {
  Rng rng(34);
  double est = distortion_lower_bound(pauli6_povm(), 20000, rng);
  REQUIRE(est <= 3.0 + 1e-6);
  REQUIRE(est <= 4.0);  // 2 d with d = 2
  REQUIRE(est > 2.0);
  REQUIRE_THROWS(distortion_lower_bound(computational_povm(2), 1000, rng));
}

TEST_CASE("tensor povm") {
  auto t = tensor_povm({computational_povm(2), computational_povm(2)});
  REQUIRE(t.outcomes() == 4);
  REQUIRE(validate_povm(t).ok);
  auto big = tensor_povm({pauli6_povm(), computational_povm(2)});
  REQUIRE(big.outcomes() == 12);
  REQUIRE(validate_povm(big, 1e-9).ok);
}

TEST_CASE("data processing: measured l1 distance never exceeds trace distance") {
  Rng rng(35);
  for (const auto& povm : {computational_povm(2), pauli6_povm()}) {
    for (int rep = 0; rep < 20; ++rep) {
      Mat a = random_density(2, rng).rho, b = random_density(2, rng).rho;
      auto pa = apply_channel(povm, a), pb = apply_channel(povm, b);
      double l1 = 0;
      for (std::size_t i = 0; i < pa.size(); ++i) l1 += std::abs(pa[i] - pb[i]);
      REQUIRE(l1 <= trace_norm(a - b) + 1e-10);
    }
  }
}
