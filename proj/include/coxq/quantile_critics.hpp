#pragma once

#include <Eigen/Dense>
#include <vector>

namespace coxq {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Quantile levels tau_m = (m - 0.5) / M, m = 1..M.
Vec tau_levels(int M);

/// N x M atom matrix of one critic ensemble (row = critic, column = quantile).
struct QuantileAtoms {
  Mat atoms;
  int critics() const { return static_cast<int>(atoms.rows()); }
  int quantiles() const { return static_cast<int>(atoms.cols()); }
};

/// Per-quantile mean and population standard deviation across the N critics.
struct QuantileStats {
  Vec mean;
  Vec stddev;
};

QuantileStats quantile_stats(const Mat& atoms);

struct CostBoundResult {
  double lb = 0;    // CVaR over the alpha head atoms of mu - beta*sigma
  double ub = 0;    // same head atoms, mu + beta*sigma
  double mean = 0;  // average over all N*M atoms
};

/// CVaR-aggregated epistemic cost bounds over the alpha largest quantile
/// indices (head atoms m = M-alpha+1 .. M), normalized by alpha so the result
/// stays on the cost scale of the threshold d.
CostBoundResult cost_bounds(const Mat& atoms, double beta_c, int alpha);

struct RewardBoundResult {
  double ub = 0;    // full-distribution optimistic bound
  double mean = 0;  // average over all atoms
};

RewardBoundResult reward_upper_bound(const Mat& atoms, double beta_r);

struct TruncationSpec {
  int k_r = 0;  // top reward atoms dropped
  int k_c = 0;  // bottom cost atoms dropped
};

enum class Objective { Reward, Cost };

/// Pools all N*M atoms, sorts ascending, drops the k_r largest (Reward) or the
/// k_c smallest (Cost); returns the surviving sorted list.
std::vector<double> truncate_mix(const Mat& next_atoms, const TruncationSpec& spec,
                                 Objective objective);

/// signal + (1 - done) * gamma * z for each surviving next atom. Targets are
/// constants; no gradient flows through them.
std::vector<double> bellman_target(double signal, bool done, double gamma,
                                   const std::vector<double>& truncated_next);

/// Asymmetric Huber quantile regression loss between one critic's M predicted
/// atoms (at levels tau_levels(M)) and a target atom list, averaged over all
/// (prediction, target) pairs. If `grad` is non-null it receives dLoss/dpred.
double quantile_huber_loss(const Vec& pred_atoms, const std::vector<double>& targets,
                           double kappa, Vec* grad = nullptr);

}  // namespace coxq
