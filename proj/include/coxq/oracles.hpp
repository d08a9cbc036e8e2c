#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "coxq/sigma_geometry.hpp"

namespace coxq {

/// Brute-force cone projection in the Sigma metric by Dykstra's alternating
/// half-space projections, run in whitened coordinates. Independent of the
/// closed-form active-set solver; used as its correctness oracle.
Vec qp_projection_oracle(const Vec& g_raw, const Vec& g1, const Vec& g2,
                         const DiagCovariance& sigma, int iters = 20000);

/// Dense grid solution of the bi-level step problem: the largest eta in
/// [0, eta_max] among the minimizers of hinge(eta) = max(0, eta*s - r).
double grid_step_oracle(double s, double r, double eta_max, int grid_points = 100000);

/// Central finite-difference gradient of a scalar function.
Vec finite_difference(const std::function<double(const Vec&)>& f, const Vec& x,
                      double h = 1e-6);

struct VerifyReport {
  std::string suite;
  int cases = 0;
  int failures = 0;
  double max_deviation = 0;
  std::vector<std::string> failure_dumps;  // capped at 10 entries
  bool passed() const { return failures == 0; }
};

/// Randomized oracle-equivalence batteries. Suites: Lemma1, Lemma2, Bounds,
/// Gradients, Quantiles. Throws on an unknown suite name.
VerifyReport run_verify(const std::string& suite, int n_cases, std::uint64_t seed,
                        double tolerance);

}  // namespace coxq
