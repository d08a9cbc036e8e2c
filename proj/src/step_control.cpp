#include "coxq/step_control.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace coxq {

double eta_from_delta(double delta, const Vec& g, const DiagCovariance& sigma) {
  if (!(delta > 0.0)) throw std::invalid_argument("eta_from_delta: delta must be > 0");
  const double q = sigma_norm2(g, sigma);
  if (q <= 1e-12) return 0.0;
  return std::sqrt(2.0 * delta / q);
}

double hinge(double eta, double s, double r) {
  if (eta < 0.0) throw std::invalid_argument("hinge: eta must be >= 0");
  return std::max(0.0, eta * s - r);
}

StepSolution solve_step(double s, double r, double eta_max) {
  if (eta_max < 0.0) throw std::invalid_argument("solve_step: eta_max must be >= 0");
  StepSolution sol;
  sol.s = s;
  sol.r = r;
  if (s < 0.0) {
    sol.eta_star = eta_max;
    sol.case_id = StepCase::FullStep;
  } else if (s == 0.0 || r < 0.0) {
    sol.eta_star = 0.0;
    sol.case_id = StepCase::ZeroStep;
  } else {
    const double boundary = r / s;
    if (boundary >= eta_max) {
      sol.eta_star = eta_max;
      sol.case_id = StepCase::FullStep;
    } else {
      sol.eta_star = boundary;
      sol.case_id = StepCase::Clipped;
    }
  }
  return sol;
}

TrustRegion update_delta(TrustRegion tr, double recent_mean_cost, double d) {
  tr.delta = std::clamp(tr.delta + tr.lr_delta * (d - recent_mean_cost), tr.delta_min,
                        tr.delta_max);
  return tr;
}

ExplorationDecision explore(const GaussianPolicyOutput& policy_out, const GradientTriple& grads,
                            double lambda, double d, double q_c_mean, const TrustRegion& tr,
                            const ActionBox& action_box) {
  ExplorationDecision dec;
  dec.mu_E = policy_out.mu;
  dec.g_star = Vec::Zero(policy_out.mu.size());

  if (!grads.allFinite() || !policy_out.mu.allFinite()) {
    // Degrade gracefully to the unshifted target policy.
    dec.degraded = true;
    dec.mu_E = action_box.clip(policy_out.mu, &dec.clipped_dims);
    return dec;
  }

  const DiagCovariance sigma = policy_out.covariance();
  const Vec g_raw = grads.g_r - lambda * grads.g_c;
  dec.in_safe_region = q_c_mean <= d;
  dec.conflicted = detect_conflict(grads.g_r, grads.g_c, g_raw, sigma).conflicting;

  if (dec.in_safe_region) {
    // Constraint inactive: raw direction, full trust-region step.
    dec.g_star = g_raw;
    dec.eta_star = eta_from_delta(tr.delta, dec.g_star, sigma);
  } else {
    dec.g_star = project_mgda(grads.g_r, grads.g_c, lambda, sigma).g_star;
    const double eta_max = eta_from_delta(tr.delta, dec.g_star, sigma);
    const double s = sigma_inner(grads.g_m, dec.g_star, sigma);
    const double r = d - q_c_mean;
    dec.eta_star = solve_step(s, r, eta_max).eta_star;
  }

  const Vec shifted = policy_out.mu + dec.eta_star * sigma.diag.cwiseProduct(dec.g_star);
  dec.mu_E = action_box.clip(shifted, &dec.clipped_dims);
  return dec;
}

}  // namespace coxq
