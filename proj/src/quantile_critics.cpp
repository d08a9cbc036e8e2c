#include "coxq/quantile_critics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace coxq {

Vec tau_levels(int M) {
  Vec tau(M);
  for (int m = 0; m < M; ++m) tau[m] = (m + 0.5) / M;
  return tau;
}

QuantileStats quantile_stats(const Mat& atoms) {
  const int n = static_cast<int>(atoms.rows());
  if (n < 1) throw std::invalid_argument("quantile_stats: need at least one critic");
  QuantileStats st;
  st.mean = atoms.colwise().mean();
  Mat centered = atoms.rowwise() - st.mean.transpose();
  st.stddev = (centered.array().square().colwise().sum() / n).sqrt();
  return st;
}

CostBoundResult cost_bounds(const Mat& atoms, double beta_c, int alpha) {
  const int M = static_cast<int>(atoms.cols());
  if (alpha < 1 || alpha > M) throw std::invalid_argument("cost_bounds: alpha out of [1, M]");
  const QuantileStats st = quantile_stats(atoms);
  CostBoundResult out;
  for (int m = M - alpha; m < M; ++m) {
    out.lb += st.mean[m] - beta_c * st.stddev[m];
    out.ub += st.mean[m] + beta_c * st.stddev[m];
  }
  out.lb /= alpha;
  out.ub /= alpha;
  out.mean = atoms.mean();
  return out;
}

RewardBoundResult reward_upper_bound(const Mat& atoms, double beta_r) {
  const QuantileStats st = quantile_stats(atoms);
  RewardBoundResult out;
  out.ub = (st.mean.array() + beta_r * st.stddev.array()).mean();
  out.mean = atoms.mean();
  return out;
}

std::vector<double> truncate_mix(const Mat& next_atoms, const TruncationSpec& spec,
                                 Objective objective) {
  const int total = static_cast<int>(next_atoms.size());
  const int k = objective == Objective::Reward ? spec.k_r : spec.k_c;
  if (k < 0 || k >= total) throw std::invalid_argument("truncate_mix: invalid truncation count");
  std::vector<double> pool(next_atoms.data(), next_atoms.data() + total);
  std::sort(pool.begin(), pool.end());
  if (objective == Objective::Reward)
    pool.resize(total - k);
  else
    pool.erase(pool.begin(), pool.begin() + k);
  return pool;
}

std::vector<double> bellman_target(double signal, bool done, double gamma,
                                   const std::vector<double>& truncated_next) {
  if (!(gamma >= 0.0 && gamma < 1.0))
    throw std::invalid_argument("bellman_target: gamma in [0,1)");
  std::vector<double> out(truncated_next.size());
  const double scale = done ? 0.0 : gamma;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = signal + scale * truncated_next[i];
  return out;
}

double quantile_huber_loss(const Vec& pred_atoms, const std::vector<double>& targets,
                           double kappa, Vec* grad) {
  if (!(kappa > 0.0)) throw std::invalid_argument("quantile_huber_loss: kappa > 0");
  const int M = static_cast<int>(pred_atoms.size());
  const Vec tau = tau_levels(M);
  if (grad) *grad = Vec::Zero(M);
  double loss = 0.0;
  const double denom = static_cast<double>(M) * static_cast<double>(targets.size());
  for (int m = 0; m < M; ++m) {
    for (double t : targets) {
      const double u = t - pred_atoms[m];
      const double w = std::abs(tau[m] - (u < 0.0 ? 1.0 : 0.0));
      const double au = std::abs(u);
      const double huber = au <= kappa ? 0.5 * u * u : kappa * (au - 0.5 * kappa);
      loss += w * huber / kappa;
      if (grad) {
        const double dhuber = au <= kappa ? u : kappa * (u > 0.0 ? 1.0 : -1.0);
        (*grad)[m] += -w * dhuber / kappa;
      }
    }
  }
  loss /= denom;
  if (grad) *grad /= denom;
  return loss;
}

}  // namespace coxq
