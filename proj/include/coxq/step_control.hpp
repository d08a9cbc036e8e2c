#pragma once

#include "coxq/policy.hpp"
#include "coxq/sigma_geometry.hpp"

namespace coxq {

/// Step length exhausting the KL budget: sqrt(2*delta / g' Sigma g).
/// Returns 0 for a degenerate gradient (g' Sigma g <= 1e-12).
double eta_from_delta(double delta, const Vec& g, const DiagCovariance& sigma);

/// Hinge of the predicted first-order cost overshoot: max(0, eta*s - r).
double hinge(double eta, double s, double r);

enum class StepCase { FullStep, ZeroStep, Clipped };

struct StepSolution {
  double eta_star = 0;
  double s = 0;  // <g_m, g*>_Sigma
  double r = 0;  // d - Qc_mean
  StepCase case_id = StepCase::ZeroStep;
};

/// Largest eta in [0, eta_max] among the minimizers of the hinge:
///   s < 0                -> eta_max
///   s > 0, r < 0 or s==0 -> 0
///   s > 0, r >= 0        -> min(eta_max, r/s)
StepSolution solve_step(double s, double r, double eta_max);

/// KL trust region with projected-gradient auto tuning.
struct TrustRegion {
  double delta = 1.0;
  double delta_max = 6.0;
  double lr_delta = 1e-4;
  double delta_min = 1e-4;
};

/// One projected step: delta <- clamp(delta + lr*(d - recent_mean_cost),
/// delta_min, delta_max). Grows under budget, shrinks over budget.
TrustRegion update_delta(TrustRegion tr, double recent_mean_cost, double d);

struct ExplorationDecision {
  Vec mu_E;
  double eta_star = 0;
  Vec g_star;
  bool conflicted = false;
  bool in_safe_region = false;
  bool degraded = false;  // non-finite gradients, fell back to the target mean
  int clipped_dims = 0;
};

/// Full exploration decision: pick the direction (raw combined gradient in the
/// safe region, cone projection otherwise), bound the step by the KL budget
/// and, in the unsafe branch, by the hinge solver; shift the mean and clip.
ExplorationDecision explore(const GaussianPolicyOutput& policy_out, const GradientTriple& grads,
                            double lambda, double d, double q_c_mean, const TrustRegion& tr,
                            const ActionBox& action_box);

}  // namespace coxq
