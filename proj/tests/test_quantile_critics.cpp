#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "coxq/oracles.hpp"
#include "coxq/quantile_critics.hpp"
#include "coxq/rng.hpp"

using namespace coxq;

TEST_CASE("tau levels are (m - 0.5) / M") {
  Vec tau = tau_levels(4);
  CHECK(tau[0] == doctest::Approx(0.125));
  CHECK(tau[1] == doctest::Approx(0.375));
  CHECK(tau[2] == doctest::Approx(0.625));
  CHECK(tau[3] == doctest::Approx(0.875));
  for (int i = 1; i < 4; ++i) CHECK(tau[i] > tau[i - 1]);
}

TEST_CASE("quantile_stats population statistics") {
  SUBCASE("single critic has zero std") {
    Mat atoms(1, 3);
    atoms << 1, 2, 3;
    QuantileStats st = quantile_stats(atoms);
    CHECK(st.stddev.norm() == 0.0);
    CHECK(st.mean.isApprox(atoms.row(0).transpose()));
  }
  SUBCASE("two critics, one quantile") {
    Mat atoms(2, 1);
    atoms << 2, 4;
    QuantileStats st = quantile_stats(atoms);
    CHECK(st.mean[0] == doctest::Approx(3.0));
    CHECK(st.stddev[0] == doctest::Approx(1.0));
  }
}

TEST_CASE("cost_bounds worked example") {
  Mat atoms(2, 4);
  atoms << 0, 1, 2, 3, 0, 1, 2, 5;
  CostBoundResult b = cost_bounds(atoms, 1.0, 2);
  CHECK(b.lb == doctest::Approx(2.5));
  CHECK(b.ub == doctest::Approx(3.5));
  CHECK(b.mean == doctest::Approx(1.75));
  CHECK_THROWS(cost_bounds(atoms, 1.0, 0));
  CHECK_THROWS(cost_bounds(atoms, 1.0, 5));
}

TEST_CASE("cost_bounds degenerate configurations") {
  Mat single(1, 5);
  single << 5, 1, 4, 2, 3;
  SUBCASE("beta 0, single critic collapses to the head CVaR") {
    CostBoundResult b = cost_bounds(single, 0.0, 2);
    const double cvar = (single(0, 3) + single(0, 4)) / 2.0;
    CHECK(b.lb == doctest::Approx(cvar));
    CHECK(b.ub == doctest::Approx(cvar));
  }
  SUBCASE("alpha = M with beta 0 equals the mean") {
    CostBoundResult b = cost_bounds(single, 0.0, 5);
    CHECK(b.lb == doctest::Approx(b.mean));
    CHECK(b.ub == doctest::Approx(b.mean));
  }
}

TEST_CASE("bound ordering and CVaR monotonicity") {
  Rng rng(5);
  for (int k = 0; k < 200; ++k) {
    const int N = 2 + static_cast<int>(rng.index(4));
    const int M = 4 + static_cast<int>(rng.index(10));
    // order-consistent ensemble: shared ascending quantile profile plus
    // per-critic offsets, so the head really holds the largest atoms
    Vec base(M);
    base[0] = rng.normal();
    for (int m = 1; m < M; ++m) base[m] = base[m - 1] + rng.uniform(0.0, 1.0);
    Mat atoms(N, M);
    for (int i = 0; i < N; ++i) atoms.row(i) = (base.array() + 0.3 * rng.normal()).transpose();
    const double beta = rng.uniform(0.0, 3.0);

    double prev_lb = std::numeric_limits<double>::infinity();
    double prev_ub = std::numeric_limits<double>::infinity();
    for (int alpha = 1; alpha <= M; ++alpha) {
      CostBoundResult b = cost_bounds(atoms, beta, alpha);
      CHECK(b.lb <= b.ub + 1e-12);
      CHECK(b.lb <= prev_lb + 1e-9);
      CHECK(b.ub <= prev_ub + 1e-9);
      prev_lb = b.lb;
      prev_ub = b.ub;
    }
  }
}

TEST_CASE("reward_upper_bound") {
  SUBCASE("beta 0 equals the mean") {
    Mat atoms(3, 4);
    Rng rng(9);
    for (int i = 0; i < 3; ++i) atoms.row(i) = rng.normal_vec(4).transpose();
    RewardBoundResult r = reward_upper_bound(atoms, 0.0);
    CHECK(r.ub == doctest::Approx(r.mean));
  }
  SUBCASE("direct substitution") {
    Mat atoms(2, 1);
    atoms << 2, 4;
    CHECK(reward_upper_bound(atoms, 2.0).ub == doctest::Approx(5.0));
  }
}

TEST_CASE("truncate_mix drops the correct extremes") {
  Mat atoms(2, 3);
  atoms << 1, 3, 5, 2, 4, 6;
  CHECK(truncate_mix(atoms, {2, 0}, Objective::Reward) == std::vector<double>{1, 2, 3, 4});
  CHECK(truncate_mix(atoms, {0, 2}, Objective::Cost) == std::vector<double>{3, 4, 5, 6});
  CHECK(truncate_mix(atoms, {0, 0}, Objective::Reward) ==
        std::vector<double>{1, 2, 3, 4, 5, 6});
}

TEST_CASE("truncation bias directions on random pools") {
  Rng rng(21);
  for (int k = 0; k < 300; ++k) {
    const int N = 2 + static_cast<int>(rng.index(4));
    const int M = 3 + static_cast<int>(rng.index(8));
    Mat atoms(N, M);
    for (int i = 0; i < N; ++i) atoms.row(i) = (3.0 * rng.normal_vec(M)).transpose();
    const int k_r = 1 + static_cast<int>(rng.index(N * M - 1));
    const int k_c = 1 + static_cast<int>(rng.index(N * M - 1));
    auto mean_of = [](const std::vector<double>& v) {
      double s = 0;
      for (double x : v) s += x;
      return s / v.size();
    };
    const double full = atoms.mean();
    CHECK(mean_of(truncate_mix(atoms, {k_r, 0}, Objective::Reward)) <= full + 1e-12);
    CHECK(mean_of(truncate_mix(atoms, {0, k_c}, Objective::Cost)) >= full - 1e-12);

    auto sorted = truncate_mix(atoms, {0, 0}, Objective::Reward);
    CHECK(std::is_sorted(sorted.begin(), sorted.end()));
  }
}

TEST_CASE("bellman_target") {
  CHECK(bellman_target(2.0, true, 0.9, {5, 7}) == std::vector<double>{2, 2});
  CHECK(bellman_target(1.0, false, 0.5, {2, 4}) == std::vector<double>{2, 3});
  Rng rng(33);
  for (int k = 0; k < 50; ++k) {
    const double sig = rng.normal();
    std::vector<double> next{rng.normal(), rng.normal(), rng.normal()};
    auto t = bellman_target(sig, false, 0.99, next);
    for (std::size_t i = 0; i < next.size(); ++i)
      CHECK(t[i] == doctest::Approx(sig + 0.99 * next[i]));
  }
}

TEST_CASE("quantile_huber_loss values and gradient") {
  SUBCASE("exact prediction has zero loss and gradient") {
    Vec pred(1);
    pred << 2.0;
    Vec grad;
    CHECK(quantile_huber_loss(pred, {2.0}, 1.0, &grad) == doctest::Approx(0.0));
    CHECK(grad[0] == doctest::Approx(0.0));
  }
  SUBCASE("single atom at tau 0.5") {
    Vec pred(1);
    pred << 0.0;
    CHECK(quantile_huber_loss(pred, {2.0}, 1.0) == doctest::Approx(0.75));
  }
  SUBCASE("gradient matches finite differences") {
    Rng rng(41);
    for (int k = 0; k < 20; ++k) {
      const int M = 2 + static_cast<int>(rng.index(8));
      Vec pred = 2.0 * rng.normal_vec(M);
      std::vector<double> targets;
      for (int i = 0; i < 5; ++i) targets.push_back(2.0 * rng.normal());
      Vec grad;
      quantile_huber_loss(pred, targets, 1.0, &grad);
      const Vec fd = finite_difference(
          [&](const Vec& p) { return quantile_huber_loss(p, targets, 1.0); }, pred);
      CHECK((grad - fd).norm() <= 1e-4 * std::max(1.0, fd.norm()));
    }
  }
  SUBCASE("gradient sign flips at prediction = target") {
    Vec below(1), above(1);
    below << -0.5;
    above << 0.5;
    Vec gb, ga;
    quantile_huber_loss(below, {0.0}, 1.0, &gb);
    quantile_huber_loss(above, {0.0}, 1.0, &ga);
    CHECK(gb[0] < 0.0);  // prediction under target: push up
    CHECK(ga[0] > 0.0);
  }
}
