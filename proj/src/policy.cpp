#include "coxq/policy.hpp"

#include <cmath>
#include <stdexcept>

namespace coxq {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

Vec ActionBox::clip(const Vec& a, int* clipped_dims) const {
  Vec out = a.cwiseMax(lo).cwiseMin(hi);
  if (clipped_dims) {
    *clipped_dims = 0;
    for (int i = 0; i < a.size(); ++i)
      if (out[i] != a[i]) ++*clipped_dims;
  }
  return out;
}

GaussianPolicy::GaussianPolicy(int state_dim, const std::vector<int>& hidden, int action_dim,
                               double log_std_min, double log_std_max)
    : net_(state_dim, hidden, 2 * action_dim),
      action_dim_(action_dim),
      log_std_min_(log_std_min),
      log_std_max_(log_std_max) {}

GaussianPolicyOutput GaussianPolicy::forward(const Vec& state) const {
  Vec out = net_.forward(state);
  if (!out.allFinite()) throw std::runtime_error("GaussianPolicy: non-finite network output");
  GaussianPolicyOutput o;
  o.mu = out.head(action_dim_);
  o.log_std = out.tail(action_dim_).cwiseMax(log_std_min_).cwiseMin(log_std_max_);
  return o;
}

void GaussianPolicy::forward(const Mat& states, Mat& mu, Mat& log_std, Mat& clamp_mask,
                             DenseNet::Tape* tape) const {
  Mat out = tape ? net_.forward(states, *tape) : net_.forward(states);
  mu = out.topRows(action_dim_);
  Mat raw = out.bottomRows(action_dim_);
  clamp_mask = ((raw.array() > log_std_min_) && (raw.array() < log_std_max_)).cast<double>();
  log_std = raw.cwiseMax(log_std_min_).cwiseMin(log_std_max_);
}

double gaussian_log_prob(const GaussianPolicyOutput& out, const Vec& raw_action) {
  const Vec sigma = out.stddev();
  const Vec z = (raw_action - out.mu).cwiseQuotient(sigma);
  return -0.5 * z.squaredNorm() - out.log_std.sum() -
         0.5 * kLog2Pi * static_cast<double>(out.mu.size());
}

PolicySample sample_action(const GaussianPolicyOutput& out, Rng& rng, const ActionBox& box) {
  PolicySample s;
  s.noise = rng.normal_vec(static_cast<int>(out.mu.size()));
  s.raw_action = out.mu + out.stddev().cwiseProduct(s.noise);
  s.action = box.clip(s.raw_action);
  s.log_prob = gaussian_log_prob(out, s.raw_action);
  return s;
}

CriticEnsemble::CriticEnsemble(int n_critics, int state_dim, const std::vector<int>& hidden,
                               int quantiles, int action_dim)
    : M_(quantiles), state_dim_(state_dim), action_dim_(action_dim) {
  for (int i = 0; i < n_critics; ++i)
    nets_.emplace_back(state_dim + action_dim, hidden, quantiles);
}

Mat CriticEnsemble::atoms(const Vec& state, const Vec& action) const {
  Vec input(state_dim_ + action_dim_);
  input << state, action;
  Mat out(critics(), M_);
  for (int n = 0; n < critics(); ++n) out.row(n) = nets_[n].forward(input).transpose();
  if (!out.allFinite()) throw std::runtime_error("CriticEnsemble: non-finite atoms");
  return out;
}

std::vector<Mat> CriticEnsemble::atoms(const Mat& states, const Mat& actions,
                                       std::vector<DenseNet::Tape>* tapes) const {
  Mat input(state_dim_ + action_dim_, states.cols());
  input.topRows(state_dim_) = states;
  input.bottomRows(action_dim_) = actions;
  std::vector<Mat> out;
  out.reserve(nets_.size());
  if (tapes) tapes->resize(nets_.size());
  for (std::size_t n = 0; n < nets_.size(); ++n)
    out.push_back(tapes ? nets_[n].forward(input, (*tapes)[n]) : nets_[n].forward(input));
  return out;
}

Mat bound_atom_cotangent(const Mat& atoms, double beta, double sign, int head) {
  const int N = static_cast<int>(atoms.rows());
  const int M = static_cast<int>(atoms.cols());
  const int first = head > 0 ? M - head : 0;
  const double denom = head > 0 ? static_cast<double>(head) : static_cast<double>(M);
  const QuantileStats st = quantile_stats(atoms);
  Mat cot = Mat::Zero(N, M);
  for (int m = first; m < M; ++m) {
    for (int n = 0; n < N; ++n) {
      double g = 1.0 / N;
      if (beta != 0.0 && st.stddev[m] > 0.0)
        g += sign * beta * (atoms(n, m) - st.mean[m]) / (N * st.stddev[m]);
      cot(n, m) = g / denom;
    }
  }
  return cot;
}

GradientTriple critic_action_gradients(const CriticEnsemble& reward_critics,
                                       const CriticEnsemble& cost_critics, const Vec& state,
                                       const BoundConfig& config, const Vec& at_action) {
  const int n = static_cast<int>(at_action.size());
  const Mat states = state;
  const Mat actions = at_action;

  auto gather = [&](const std::vector<Mat>& per_critic) {
    Mat atoms(per_critic.size(), per_critic.front().rows());
    for (std::size_t c = 0; c < per_critic.size(); ++c)
      atoms.row(c) = per_critic[c].col(0).transpose();
    return atoms;
  };
  auto backprop = [&](const CriticEnsemble& ens, const std::vector<DenseNet::Tape>& tapes,
                      const Mat& cot) {
    Vec g = Vec::Zero(n);
    for (int c = 0; c < ens.critics(); ++c) {
      Mat dOut = cot.row(c).transpose();  // M x 1
      Mat din = ens.nets()[c].input_gradient(tapes[c], dOut);
      g += din.col(0).tail(n);
    }
    return g;
  };

  std::vector<DenseNet::Tape> r_tapes, c_tapes;
  const Mat r_atoms = gather(reward_critics.atoms(states, actions, &r_tapes));
  const Mat c_atoms = gather(cost_critics.atoms(states, actions, &c_tapes));
  const int Mc = cost_critics.quantiles();

  GradientTriple t;
  t.g_r = backprop(reward_critics, r_tapes,
                   bound_atom_cotangent(r_atoms, config.beta_r, +1.0, 0));
  t.g_c = backprop(cost_critics, c_tapes,
                   bound_atom_cotangent(c_atoms, config.beta_c, -1.0, config.alpha));
  t.g_m = backprop(cost_critics, c_tapes,
                   Mat::Constant(cost_critics.critics(), Mc,
                                 1.0 / (cost_critics.critics() * static_cast<double>(Mc))));
  return t;
}

}  // namespace coxq
