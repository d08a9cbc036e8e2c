#include "coxq/learner.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace coxq {

double convert_limit(double d_episode, int T, double gamma) {
  if (T < 1) throw std::invalid_argument("convert_limit: T >= 1");
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("convert_limit: gamma in (0,1)");
  return d_episode * (1.0 - std::pow(gamma, T)) / (T * (1.0 - gamma));
}

LagrangianState lambda_update(LagrangianState state, double batch_mean_cost_ub) {
  state.lambda = std::max(0.0, state.lambda + state.lr_lambda * (batch_mean_cost_ub - state.d_q));
  return state;
}

double alm_penalty(double q_c_ub, const LagrangianState& lag) {
  const double gap = q_c_ub - lag.d_q;
  // The inactive branch is the constant the active branch attains at the
  // switch, which keeps the penalty continuous with matching first
  // derivatives there; a constant changes no gradient, so deep inside the
  // feasible region the actor still maximizes pure return.
  if (lag.lambda + lag.alm_c * gap < 0.0)
    return -lag.lambda * lag.lambda / (2.0 * lag.alm_c);
  return lag.lambda * gap + 0.5 * lag.alm_c * gap * gap;
}

double alm_penalty_grad(double q_c_ub, const LagrangianState& lag) {
  const double gap = q_c_ub - lag.d_q;
  const double g = lag.lambda + lag.alm_c * gap;
  return g < 0.0 ? 0.0 : g;
}

TemperatureState temperature_update(TemperatureState state, double batch_mean_log_prob) {
  if (!state.auto_tune) return state;
  // d/dlog_alpha of alpha * (-log_pi - target_entropy)
  const double grad = state.alpha() * (-batch_mean_log_prob - state.target_entropy);
  state.opt.lr_ = state.lr;
  state.opt.step(state.log_alpha, grad);
  return state;
}

void polyak_update(TargetNetworks& targets, const CriticEnsemble& live_reward,
                   const CriticEnsemble& live_cost) {
  auto track = [&](std::vector<DenseNet>& shadow, const std::vector<DenseNet>& live) {
    if (shadow.size() != live.size())
      throw std::invalid_argument("polyak_update: ensemble size mismatch");
    for (std::size_t n = 0; n < shadow.size(); ++n) {
      auto& sl = shadow[n].layers();
      const auto& ll = live[n].layers();
      if (sl.size() != ll.size()) throw std::invalid_argument("polyak_update: shape mismatch");
      for (std::size_t l = 0; l < sl.size(); ++l) {
        if (sl[l].W.rows() != ll[l].W.rows() || sl[l].W.cols() != ll[l].W.cols())
          throw std::invalid_argument("polyak_update: shape mismatch");
        sl[l].W = (1.0 - targets.tau) * sl[l].W + targets.tau * ll[l].W;
        sl[l].b = (1.0 - targets.tau) * sl[l].b + targets.tau * ll[l].b;
      }
    }
  };
  track(targets.reward, live_reward.nets());
  track(targets.cost, live_cost.nets());
}

Agent::Agent(int state_dim, int action_dim, const ActionBox& action_box,
             const std::vector<int>& policy_hidden, const std::vector<int>& critic_hidden,
             int n_critics, int quantiles, double lr, Rng& rng)
    : policy(state_dim, policy_hidden, action_dim),
      reward_critics(n_critics, state_dim, critic_hidden, quantiles, action_dim),
      cost_critics(n_critics, state_dim, critic_hidden, quantiles, action_dim),
      box(action_box) {
  policy.net().init(rng);
  for (auto& net : reward_critics.nets()) net.init(rng);
  for (auto& net : cost_critics.nets()) net.init(rng);
  targets.reward = reward_critics.nets();
  targets.cost = cost_critics.nets();
  policy_opt = Adam(policy.net(), lr);
  for (const auto& net : reward_critics.nets()) reward_opts.emplace_back(net, lr);
  for (const auto& net : cost_critics.nets()) cost_opts.emplace_back(net, lr);
  temperature.target_entropy = -static_cast<double>(action_dim);
}

namespace {

// Sampled next actions for the batch, clipped to the box, plus Gaussian
// log-probs of the unclipped samples.
void sample_batch_actions(const GaussianPolicy& policy, const Mat& states, const ActionBox& box,
                          Rng& rng, Mat& actions, Vec& log_probs) {
  Mat mu, log_std, clamp_mask;
  policy.forward(states, mu, log_std, clamp_mask);
  const int n = policy.action_dim();
  const int B = static_cast<int>(states.cols());
  Mat sigma = log_std.array().exp();
  actions.resize(n, B);
  log_probs.resize(B);
  constexpr double kLog2Pi = 1.8378770664093454835606594728112;
  for (int b = 0; b < B; ++b) {
    double lp = 0;
    for (int i = 0; i < n; ++i) {
      const double xi = rng.normal();
      const double raw = mu(i, b) + sigma(i, b) * xi;
      actions(i, b) = std::clamp(raw, box.lo[i], box.hi[i]);
      lp += -0.5 * xi * xi - log_std(i, b) - 0.5 * kLog2Pi;
    }
    log_probs[b] = lp;
  }
}

}  // namespace

CriticLosses critic_update(Agent& agent, const Batch& batch, Rng& rng, bool entropy_bonus) {
  const int B = batch.size();
  if (B == 0) throw std::invalid_argument("critic_update: empty batch");
  const int M = agent.reward_critics.quantiles();
  const int N = agent.reward_critics.critics();

  Mat next_actions;
  Vec next_log_probs;
  sample_batch_actions(agent.policy, batch.next_states, agent.box, rng, next_actions,
                       next_log_probs);

  // Target atoms from the shadow networks.
  Mat input(agent.policy.state_dim() + agent.policy.action_dim(), B);
  input.topRows(agent.policy.state_dim()) = batch.next_states;
  input.bottomRows(agent.policy.action_dim()) = next_actions;
  std::vector<Mat> next_r(N), next_c(N);
  for (int c = 0; c < N; ++c) {
    next_r[c] = agent.targets.reward[c].forward(input);  // M x B
    next_c[c] = agent.targets.cost[c].forward(input);
  }

  const double alpha_ent = entropy_bonus ? agent.temperature.alpha() : 0.0;

  // Per-sample pooled + truncated target lists.
  std::vector<std::vector<double>> r_targets(B), c_targets(B);
  Mat pool(N, M);
  for (int b = 0; b < B; ++b) {
    const bool done = batch.terminated[b] != 0;
    for (int c = 0; c < N; ++c) pool.row(c) = next_r[c].col(b).transpose();
    std::vector<double> zr = truncate_mix(pool, agent.truncation, Objective::Reward);
    // Entropy bonus enters the bootstrapped value, not the cost scale.
    for (double& z : zr) z -= alpha_ent * next_log_probs[b];
    r_targets[b] = bellman_target(batch.rewards[b], done, agent.gamma, zr);

    for (int c = 0; c < N; ++c) pool.row(c) = next_c[c].col(b).transpose();
    std::vector<double> zc = truncate_mix(pool, agent.truncation, Objective::Cost);
    c_targets[b] = bellman_target(batch.costs[b], done, agent.gamma, zc);
  }

  Mat live_input(agent.policy.state_dim() + agent.policy.action_dim(), B);
  live_input.topRows(agent.policy.state_dim()) = batch.states;
  live_input.bottomRows(agent.policy.action_dim()) = batch.actions;

  CriticLosses losses;
  auto update_ensemble = [&](CriticEnsemble& ens, std::vector<Adam>& opts,
                             const std::vector<std::vector<double>>& targets, double& loss_out) {
    for (int c = 0; c < ens.critics(); ++c) {
      DenseNet::Tape tape;
      Mat atoms = ens.nets()[c].forward(live_input, tape);  // M x B
      Mat dOut(M, B);
      double loss = 0;
      Vec grad;
      for (int b = 0; b < B; ++b) {
        loss += quantile_huber_loss(atoms.col(b), targets[b], agent.huber_kappa, &grad);
        dOut.col(b) = grad;
      }
      loss /= B;
      dOut /= static_cast<double>(B);
      DenseNet::Grads grads = ens.nets()[c].zeroGrads();
      ens.nets()[c].backward(tape, dOut, grads);
      opts[c].step(ens.nets()[c], grads);
      loss_out += loss / ens.critics();
    }
  };
  update_ensemble(agent.reward_critics, agent.reward_opts, r_targets, losses.reward_loss);
  update_ensemble(agent.cost_critics, agent.cost_opts, c_targets, losses.cost_loss);
  return losses;
}

ActorLosses actor_update(Agent& agent, const Batch& batch, Rng& rng) {
  const int B = batch.size();
  if (B == 0) throw std::invalid_argument("actor_update: empty batch");
  const int n = agent.policy.action_dim();
  const int N = agent.reward_critics.critics();
  const int M = agent.reward_critics.quantiles();

  Mat mu, log_std, clamp_mask;
  DenseNet::Tape policy_tape;
  agent.policy.forward(batch.states, mu, log_std, clamp_mask, &policy_tape);
  Mat sigma = log_std.array().exp();

  Mat xi(n, B), actions(n, B), clip_mask(n, B);
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < n; ++i) {
      xi(i, b) = rng.normal();
      const double raw = mu(i, b) + sigma(i, b) * xi(i, b);
      actions(i, b) = std::clamp(raw, agent.box.lo[i], agent.box.hi[i]);
      clip_mask(i, b) = actions(i, b) == raw ? 1.0 : 0.0;
    }

  std::vector<DenseNet::Tape> r_tapes, c_tapes;
  std::vector<Mat> r_atoms = agent.reward_critics.atoms(batch.states, actions, &r_tapes);
  std::vector<Mat> c_atoms = agent.cost_critics.atoms(batch.states, actions, &c_tapes);

  constexpr double kLog2Pi = 1.8378770664093454835606594728112;
  const double alpha_ent = agent.temperature.alpha();

  ActorLosses out;
  Mat sample(N, M);
  std::vector<Mat> c_cots(N, Mat(M, B));
  Vec penalty_grads(B);
  for (int b = 0; b < B; ++b) {
    for (int c = 0; c < N; ++c) sample.row(c) = c_atoms[c].col(b).transpose();
    const CostBoundResult cb = cost_bounds(sample, agent.bounds.beta_c, agent.bounds.alpha);
    const double pen = alm_penalty(cb.ub, agent.lagrangian);
    penalty_grads[b] = alm_penalty_grad(cb.ub, agent.lagrangian);
    Mat cot = bound_atom_cotangent(sample, agent.bounds.beta_c, +1.0, agent.bounds.alpha);
    for (int c = 0; c < N; ++c) c_cots[c].col(b) = cot.row(c).transpose();

    double q_r_mean = 0;
    for (int c = 0; c < N; ++c) q_r_mean += r_atoms[c].col(b).mean();
    q_r_mean /= N;

    double log_prob = 0;
    for (int i = 0; i < n; ++i)
      log_prob += -0.5 * xi(i, b) * xi(i, b) - log_std(i, b) - 0.5 * kLog2Pi;

    out.mean_q_c_ub += cb.ub / B;
    out.mean_penalty += pen / B;
    out.mean_log_prob += log_prob / B;
    out.actor_loss += -(q_r_mean - alpha_ent * log_prob - pen) / B;
  }

  // d(objective)/d(action), accumulated over both ensembles.
  Mat dAction = Mat::Zero(n, B);
  const Mat r_cot = Mat::Constant(M, B, 1.0 / (N * static_cast<double>(M)));
  for (int c = 0; c < N; ++c) {
    dAction += agent.reward_critics.nets()[c]
                   .input_gradient(r_tapes[c], r_cot)
                   .bottomRows(n);
    Mat cot = c_cots[c];
    for (int b = 0; b < B; ++b) cot.col(b) *= -penalty_grads[b];
    dAction += agent.cost_critics.nets()[c].input_gradient(c_tapes[c], cot).bottomRows(n);
  }
  dAction = dAction.cwiseProduct(clip_mask);

  // Keep the pre-clip mean inside the action box: clipped samples carry no
  // critic gradient, so without this pull the mean can drift arbitrarily far
  // outside and the policy degenerates to noisy bang-bang.
  Mat bound_viol(n, B);
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < n; ++i) {
      const double over = std::max(0.0, mu(i, b) - agent.box.hi[i]);
      const double under = std::max(0.0, agent.box.lo[i] - mu(i, b));
      bound_viol(i, b) = over - under;
    }
  out.actor_loss += agent.action_bound_weight * bound_viol.squaredNorm() / B;

  // Chain to the policy head; the entropy term adds alpha per log_std entry.
  Mat dMu = dAction - 2.0 * agent.action_bound_weight * bound_viol;
  Mat dLogStd = dAction.cwiseProduct(sigma.cwiseProduct(xi));
  dLogStd.array() += alpha_ent;
  dLogStd = dLogStd.cwiseProduct(clamp_mask);

  Mat dOut(2 * n, B);
  dOut.topRows(n) = -dMu / B;       // ascent on the objective
  dOut.bottomRows(n) = -dLogStd / B;
  DenseNet::Grads grads = agent.policy.net().zeroGrads();
  agent.policy.net().backward(policy_tape, dOut, grads);
  if (std::isfinite(out.actor_loss)) agent.policy_opt.step(agent.policy.net(), grads);
  return out;
}

}  // namespace coxq
