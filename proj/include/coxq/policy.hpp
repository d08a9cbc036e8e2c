#pragma once

#include <utility>
#include <vector>

#include "coxq/net.hpp"
#include "coxq/quantile_critics.hpp"
#include "coxq/rng.hpp"
#include "coxq/sigma_geometry.hpp"

namespace coxq {

struct ActionBox {
  Vec lo, hi;
  Vec clip(const Vec& a, int* clipped_dims = nullptr) const;
};

/// Target policy N(mu_T, Sigma_T) with diagonal covariance; log_std is
/// clamped to [log_std_min, log_std_max].
struct GaussianPolicyOutput {
  Vec mu;
  Vec log_std;

  Vec stddev() const { return log_std.array().exp(); }
  DiagCovariance covariance() const { return DiagCovariance((2.0 * log_std.array()).exp()); }
};

struct PolicySample {
  Vec action;        // clipped to the action box
  Vec raw_action;    // mu + sigma * xi before clipping
  Vec noise;         // xi
  double log_prob;   // Gaussian density at the unclipped sample
};

/// Diagonal-Gaussian policy head: the network outputs [mu; log_std_raw].
class GaussianPolicy {
 public:
  GaussianPolicy() = default;
  GaussianPolicy(int state_dim, const std::vector<int>& hidden, int action_dim,
                 double log_std_min = -5.0, double log_std_max = 2.0);

  GaussianPolicyOutput forward(const Vec& state) const;

  /// Batched forward; columns are samples. `tape` enables backprop.
  void forward(const Mat& states, Mat& mu, Mat& log_std, Mat& clamp_mask,
               DenseNet::Tape* tape = nullptr) const;

  int action_dim() const { return action_dim_; }
  int state_dim() const { return net_.input_dim(); }
  DenseNet& net() { return net_; }
  const DenseNet& net() const { return net_; }
  double log_std_min() const { return log_std_min_; }
  double log_std_max() const { return log_std_max_; }

 private:
  DenseNet net_;
  int action_dim_ = 0;
  double log_std_min_ = -5.0, log_std_max_ = 2.0;
};

/// Reparameterized sample mu + sigma*xi, clipped to the box; the log-prob is
/// that of the unclipped Gaussian sample.
PolicySample sample_action(const GaussianPolicyOutput& out, Rng& rng, const ActionBox& box);

double gaussian_log_prob(const GaussianPolicyOutput& out, const Vec& raw_action);

/// N independent quantile critics for one objective; input is [state; action],
/// output is M atoms per critic.
class CriticEnsemble {
 public:
  CriticEnsemble() = default;
  CriticEnsemble(int n_critics, int state_dim, const std::vector<int>& hidden, int quantiles,
                 int action_dim);

  /// N x M atom matrix at a single (state, action).
  Mat atoms(const Vec& state, const Vec& action) const;

  /// Batched atoms: one M x B matrix per critic.
  std::vector<Mat> atoms(const Mat& states, const Mat& actions,
                         std::vector<DenseNet::Tape>* tapes = nullptr) const;

  int critics() const { return static_cast<int>(nets_.size()); }
  int quantiles() const { return M_; }
  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }
  std::vector<DenseNet>& nets() { return nets_; }
  const std::vector<DenseNet>& nets() const { return nets_; }

 private:
  std::vector<DenseNet> nets_;
  int M_ = 0;
  int state_dim_ = 0;
  int action_dim_ = 0;
};

struct BoundConfig {
  double beta_r = 4.0;
  double beta_c = 3.0;
  int alpha = 13;
};

/// Gradients of the three critic aggregates with respect to the action input.
struct GradientTriple {
  Vec g_r;  // grad of the optimistic return upper bound
  Vec g_c;  // grad of the conservative cost lower bound
  Vec g_m;  // grad of the mean cost estimate
  bool allFinite() const { return g_r.allFinite() && g_c.allFinite() && g_m.allFinite(); }
};

/// Backpropagates Qr_UB, Qc_LB and Qc_mean through the critic networks to the
/// action input only, at the given action.
GradientTriple critic_action_gradients(const CriticEnsemble& reward_critics,
                                       const CriticEnsemble& cost_critics, const Vec& state,
                                       const BoundConfig& config, const Vec& at_action);

/// Cotangent rows dAggregate/datoms for one sample's N x M atom matrix.
/// `sign` is +1 for mu + beta*sigma (upper bound) and -1 for mu - beta*sigma.
/// `head` restricts the aggregate to the alpha largest quantile indices
/// (head <= 0 means the full distribution).
Mat bound_atom_cotangent(const Mat& atoms, double beta, double sign, int head);

}  // namespace coxq
