#include "coxq/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace coxq {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<int> hidden_layers(int width, int depth) {
  return std::vector<int>(static_cast<std::size_t>(depth), width);
}

// Distinct deterministic RNG streams derived from the run seed.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return seed * 0x9e3779b97f4a7c15ULL + stream;
}

std::string rng_blob(const Rng& rng) {
  std::ostringstream os;
  rng.save(os);
  return os.str();
}

void rng_from_blob(Rng& rng, const std::string& blob) {
  std::istringstream is(blob);
  rng.load(is);
}

Vec clipped_mean_action(const GaussianPolicy& policy, const ActionBox& box, const Vec& state) {
  return box.clip(policy.forward(state).mu);
}

}  // namespace

std::unique_ptr<Env> make_configured_env(const TrainConfig& cfg, std::uint64_t seed) {
  return make_env(cfg.env, seed);
}

Trainer::Trainer(TrainConfig cfg)
    : cfg_(std::move(cfg)),
      buffer_(static_cast<std::size_t>(cfg_.buffer_size)),
      action_rng_(stream_seed(cfg_.seed, 1)),
      update_rng_(stream_seed(cfg_.seed, 2)) {
  cfg_.validate();

  envs_.resize(static_cast<std::size_t>(cfg_.parallel_envs));
  for (std::size_t i = 0; i < envs_.size(); ++i) {
    envs_[i].env = make_configured_env(cfg_, stream_seed(cfg_.seed, 100 + i));
    envs_[i].env->reset();
  }
  const Env& proto = *envs_.front().env;

  Rng init_rng(stream_seed(cfg_.seed, 0));
  agent_ = Agent(proto.state_dim(), proto.action_dim(), proto.action_box(),
                 hidden_layers(cfg_.policy_hidden_width, cfg_.policy_hidden_depth),
                 hidden_layers(cfg_.critic_hidden_width, cfg_.critic_hidden_depth),
                 cfg_.n_critics, cfg_.n_quantiles, cfg_.critic_lr, init_rng);
  agent_.policy_opt.set_lr(cfg_.policy_lr);
  agent_.gamma = cfg_.gamma;
  agent_.huber_kappa = cfg_.huber_kappa;
  agent_.action_bound_weight = cfg_.action_bound_weight;
  agent_.bounds = BoundConfig{cfg_.beta_r, cfg_.beta_c, cfg_.cvar_alpha};
  agent_.truncation = TruncationSpec{cfg_.k_r, cfg_.k_c};
  agent_.targets.tau = cfg_.tau;
  agent_.lagrangian.lambda = cfg_.lambda_init;
  agent_.lagrangian.lr_lambda = cfg_.lambda_lr;
  agent_.lagrangian.alm_c = cfg_.alm_c;
  agent_.lagrangian.d_episode = cfg_.episode_cost_limit;
  agent_.lagrangian.d_q = convert_limit(cfg_.episode_cost_limit, cfg_.episode_length, cfg_.gamma);
  agent_.temperature.log_alpha = std::log(cfg_.init_temperature);
  agent_.temperature.lr = cfg_.entropy_lr;
  agent_.temperature.auto_tune = cfg_.entropy_auto_tune;
  agent_.temperature.opt = ScalarAdam(cfg_.entropy_lr);

  trust_region_ = TrustRegion{cfg_.delta_init, cfg_.delta_max, cfg_.delta_lr, cfg_.delta_min};
  metrics_ = std::make_unique<MetricsWriter>(cfg_.out_dir + "/metrics.jsonl");
}

Vec Trainer::select_action(EnvSlot& slot) {
  const ActionBox box = slot.env->action_box();
  if (global_step_ < cfg_.initial_steps) {
    Vec a(box.lo.size());
    for (int i = 0; i < a.size(); ++i) a[i] = action_rng_.uniform(box.lo[i], box.hi[i]);
    return a;
  }

  GaussianPolicyOutput out = agent_.policy.forward(slot.env->state());

  // Exploration gradients and the mean cost estimate come from the live
  // critics at the target mean (target networks never feed this path).
  GradientTriple grads = critic_action_gradients(agent_.reward_critics, agent_.cost_critics,
                                                 slot.env->state(), agent_.bounds, out.mu);
  if (!cfg_.use_cox) {
    // Ablation baseline: ORAC-style optimistic exploration. The behavior
    // mean still shifts along the reward-value gradient inside a fixed KL
    // radius, but none of the cost-constrained machinery runs: no lambda
    // weighting of the direction, no cone projection, no hinge cap on the
    // step, no adaptive radius.
    Vec mu_E = out.mu;
    if (grads.g_r.allFinite() && out.mu.allFinite()) {
      const DiagCovariance sigma = out.covariance();
      const double eta = eta_from_delta(cfg_.delta_init, grads.g_r, sigma);
      mu_E = out.mu + eta * sigma.diag.cwiseProduct(grads.g_r);
    }
    GaussianPolicyOutput shifted{box.clip(mu_E), out.log_std};
    return sample_action(shifted, action_rng_, box).action;
  }
  const double q_c_mean =
      cost_bounds(agent_.cost_critics.atoms(slot.env->state(), out.mu), agent_.bounds.beta_c,
                  agent_.bounds.alpha)
          .mean;
  ExplorationDecision dec = explore(out, grads, agent_.lagrangian.lambda, agent_.lagrangian.d_q,
                                    q_c_mean, trust_region_, box);
  if (!dec.in_safe_region && !dec.degraded) {
    unsafe_calls_ += 1;
    if (dec.conflicted) conflict_calls_ += 1;
    eta_sum_ += dec.eta_star;
    eta_count_ += 1;
  }
  GaussianPolicyOutput shifted{dec.mu_E, out.log_std};
  return sample_action(shifted, action_rng_, box).action;
}

void Trainer::update_phase() {
  if (global_step_ < cfg_.initial_steps) return;
  if (buffer_.size() < static_cast<std::size_t>(cfg_.batch_size)) return;

  for (int g = 0; g < cfg_.gradient_steps; ++g) {
    Batch batch = buffer_.sample(cfg_.batch_size, update_rng_);
    CriticLosses cl = critic_update(agent_, batch, update_rng_);
    ActorLosses al = actor_update(agent_, batch, update_rng_);
    agent_.lagrangian = lambda_update(agent_.lagrangian, al.mean_q_c_ub);
    if (agent_.temperature.auto_tune)
      agent_.temperature = temperature_update(agent_.temperature, al.mean_log_prob);
    update_count_ += 1;
    if (static_cast<std::int64_t>(update_count_) % cfg_.target_update_freq == 0)
      polyak_update(agent_.targets, agent_.reward_critics, agent_.cost_critics);
    loss_r_sum_ += cl.reward_loss;
    loss_c_sum_ += cl.cost_loss;
    actor_loss_sum_ += al.actor_loss;
  }
}

void Trainer::run_eval_probe(MetricsRecord& rec) {
  const std::uint64_t eval_seed =
      stream_seed(cfg_.seed, 1000 + static_cast<std::uint64_t>(global_step_));
  EvalSummary ev = evaluate(cfg_.eval_episodes, eval_seed);
  rec.eval_return = ev.episodes > 0 ? ev.mean_return : kNaN;
  rec.eval_cost = ev.episodes > 0 ? ev.mean_cost : kNaN;

  // Estimation-bias probe: compare the critics' mean cost estimate against
  // the Monte-Carlo ground truth on the environment's canonical evaluation
  // states, which straddle the cost-active region. A converged safe policy
  // rarely visits costly states, so probing its own trajectories yields
  // near-zero ground-truth cost and a meaningless relative bias; the fixed
  // states keep the oracle value substantial across all of training. Probe
  // times sit in the first half of the horizon: the critics bootstrap
  // through the timeout and are blind to the step index, so near the episode
  // end their stationary value and the finite remaining-horizon ground truth
  // measure different quantities.
  const int P = cfg_.bias_probe_states;
  if (P <= 0 || cfg_.bias_probe_rollouts <= 0) return;
  auto env = make_configured_env(cfg_, stream_seed(cfg_.seed, 3));
  const ActionBox box = env->action_box();
  const int T = env->horizon();
  const int probe_step = std::max(1, T / 5);
  std::vector<std::pair<Vec, int>> probes;
  for (const Vec& s : env->probe_states()) {
    if (static_cast<int>(probes.size()) >= P) break;
    probes.emplace_back(s, probe_step);
  }
  if (probes.empty()) return;

  // The critics estimate the stochastic policy's cost (TD targets sample
  // next actions), so the ground-truth rollouts must follow the stochastic
  // policy as well; a mean-action oracle would measure policy mismatch, not
  // estimation bias.
  auto probe_rng = std::make_shared<Rng>(stream_seed(cfg_.seed, 4));
  auto frozen = [this, &box, probe_rng](const Vec& state) {
    return sample_action(agent_.policy.forward(state), *probe_rng, box).action;
  };
  // Both sides of the comparison average over a few sampled policy actions;
  // a single draw makes the per-record bias hostage to how (a)typical that
  // one action was, which buries the trend under probe noise.
  const int n_actions = 4;
  const int rollouts = std::max(1, cfg_.bias_probe_rollouts / n_actions);
  double bias = 0, bias_abs = 0, oracle_sum = 0;
  for (std::size_t p = 0; p < probes.size(); ++p) {
    const Vec& ps = probes[p].first;
    double est = 0, oracle = 0;
    for (int k = 0; k < n_actions; ++k) {
      const Vec a = frozen(ps);
      est += cost_bounds(agent_.cost_critics.atoms(ps, a), agent_.bounds.beta_c,
                         agent_.bounds.alpha)
                 .mean;
      OracleEstimate oe =
          mc_oracle(*env, frozen, ps, probes[p].second, a, rollouts, cfg_.gamma,
                    env->horizon(), cfg_.n_quantiles,
                    stream_seed(cfg_.seed, 2000 + 17 * p + 5 * static_cast<std::uint64_t>(k)));
      oracle += oe.mean_cost;
    }
    est /= n_actions;
    oracle /= n_actions;
    bias += est - oracle;
    bias_abs += std::abs(est - oracle);
    oracle_sum += oracle;
  }
  const double n = static_cast<double>(probes.size());
  rec.cost_bias = bias / n;
  rec.cost_bias_abs = bias_abs / n;
  rec.oracle_cost = oracle_sum / n;
}

void Trainer::log_record() {
  MetricsRecord rec;
  rec.step = global_step_;
  rec.episode_return = interval_ep_count_ > 0 ? interval_ep_return_ / interval_ep_count_ : kNaN;
  rec.episode_cost = interval_ep_count_ > 0 ? interval_ep_cost_ / interval_ep_count_ : kNaN;
  rec.lambda = agent_.lagrangian.lambda;
  rec.delta = trust_region_.delta;
  rec.conflict_ratio = unsafe_calls_ > 0 ? conflict_calls_ / unsafe_calls_ : kNaN;
  rec.eta_star_mean = eta_count_ > 0 ? eta_sum_ / eta_count_ : kNaN;
  rec.reward_critic_loss = update_count_ > 0 ? loss_r_sum_ / update_count_ : kNaN;
  rec.cost_critic_loss = update_count_ > 0 ? loss_c_sum_ / update_count_ : kNaN;
  rec.actor_loss = update_count_ > 0 ? actor_loss_sum_ / update_count_ : kNaN;
  rec.temperature = agent_.temperature.alpha();
  if (have_pending_eval_) {
    rec.eval_return = pending_eval_.eval_return;
    rec.eval_cost = pending_eval_.eval_cost;
    rec.cost_bias = pending_eval_.cost_bias;
    rec.cost_bias_abs = pending_eval_.cost_bias_abs;
    rec.oracle_cost = pending_eval_.oracle_cost;
    have_pending_eval_ = false;
  } else {
    rec.eval_return = rec.eval_cost = kNaN;
    rec.cost_bias = rec.cost_bias_abs = rec.oracle_cost = kNaN;
  }
  metrics_->append(rec);

  interval_ep_return_ = interval_ep_cost_ = interval_ep_count_ = 0;
  unsafe_calls_ = conflict_calls_ = 0;
  eta_sum_ = eta_count_ = 0;
  loss_r_sum_ = loss_c_sum_ = actor_loss_sum_ = 0;
  update_count_ = 0;
}

void Trainer::step_n(std::int64_t n) {
  const std::int64_t stop = global_step_ + n;
  while (global_step_ < stop) {
    for (auto& slot : envs_) {
      if (global_step_ >= stop) break;
      const Vec s_before = slot.env->state();
      const int t_before = slot.env->step_index();
      Vec action = select_action(slot);
      CmdpStep st = slot.env->step(action);
      Transition tr;
      tr.state = s_before;
      tr.step_index = t_before;
      tr.action = action;
      tr.next_state = st.next_state;
      tr.reward = st.reward;
      tr.cost = st.cost;
      tr.terminated = st.terminated;
      tr.truncated = st.truncated;
      buffer_.push(std::move(tr));
      slot.ep_return += st.reward;
      slot.ep_cost += st.cost;
      ++global_step_;

      if (st.terminated || st.truncated) {
        interval_ep_return_ += slot.ep_return;
        interval_ep_cost_ += slot.ep_cost;
        interval_ep_count_ += 1;
        slot.ep_return = slot.ep_cost = 0;
        slot.env->reset();
      }

      update_phase();

      if (cfg_.use_cox && global_step_ % cfg_.delta_update_freq == 0 &&
          global_step_ >= cfg_.initial_steps) {
        const double recent =
            buffer_.recent_mean_cost(static_cast<std::size_t>(cfg_.recent_window)) *
            cfg_.episode_length;
        trust_region_ = update_delta(trust_region_, recent, cfg_.episode_cost_limit);
      }
      if (global_step_ % cfg_.eval_interval == 0) {
        pending_eval_ = MetricsRecord{};
        run_eval_probe(pending_eval_);
        have_pending_eval_ = true;
      }
      if (global_step_ % cfg_.log_interval == 0) log_record();
    }
  }
}

int Trainer::run() {
  std::filesystem::create_directories(cfg_.out_dir);
  write_config(cfg_, cfg_.out_dir + "/config_resolved.cfg");

  while (global_step_ < cfg_.total_steps) {
    const std::int64_t chunk = std::min<std::int64_t>(cfg_.log_interval,
                                                      cfg_.total_steps - global_step_);
    step_n(chunk);
    metrics_->flush();

    const bool healthy = agent_.policy.net().allFinite() &&
                         std::isfinite(agent_.lagrangian.lambda) &&
                         std::isfinite(agent_.temperature.log_alpha);
    if (!healthy) {
      make_checkpoint().save(cfg_.out_dir + "/checkpoint_diverged.bin");
      return 3;
    }
    if (global_step_ % cfg_.checkpoint_interval == 0 || global_step_ >= cfg_.total_steps)
      make_checkpoint().save(cfg_.out_dir + "/checkpoint_" + std::to_string(global_step_) +
                             ".bin");
  }

  make_checkpoint().save(cfg_.out_dir + "/checkpoint_final.bin");
  metrics_->flush();
  export_csv(metrics_->records(), cfg_.out_dir + "/metrics.csv");
  return 0;
}

EvalSummary Trainer::evaluate(int episodes, std::uint64_t seed) const {
  EvalSummary out;
  if (episodes <= 0) return out;
  auto env = make_configured_env(cfg_, seed);
  const ActionBox box = env->action_box();
  for (int ep = 0; ep < episodes; ++ep) {
    env->rng() = Rng(seed + static_cast<std::uint64_t>(ep));
    Vec s = env->reset();
    double ret = 0, cost = 0;
    for (int t = 0; t < env->horizon(); ++t) {
      CmdpStep st = env->step(clipped_mean_action(agent_.policy, box, s));
      ret += st.reward;
      cost += st.cost;
      s = st.next_state;
      if (st.terminated || st.truncated) break;
    }
    out.episode_returns.push_back(ret);
    out.episode_costs.push_back(cost);
    out.mean_return += ret;
    out.mean_cost += cost;
    if (cost > cfg_.episode_cost_limit) out.violation_rate += 1;
  }
  out.episodes = episodes;
  out.mean_return /= episodes;
  out.mean_cost /= episodes;
  out.violation_rate /= episodes;
  std::vector<double> sorted = out.episode_returns;
  std::sort(sorted.begin(), sorted.end());
  out.median_return = episodes % 2 == 1
                          ? sorted[episodes / 2]
                          : 0.5 * (sorted[episodes / 2 - 1] + sorted[episodes / 2]);
  return out;
}

Checkpoint Trainer::make_checkpoint() const {
  Checkpoint ck;
  pack_agent(ck, agent_);
  ck.put_blob("trainer.config", config_to_string(cfg_));
  ck.put_scalar("trainer.global_step", static_cast<double>(global_step_));
  ck.put_scalar("trainer.delta", trust_region_.delta);
  ck.put_blob("trainer.action_rng", rng_blob(action_rng_));
  ck.put_blob("trainer.update_rng", rng_blob(update_rng_));

  for (std::size_t i = 0; i < envs_.size(); ++i) {
    const std::string p = "env" + std::to_string(i) + ".";
    ck.put(p + "state", envs_[i].env->state());
    ck.put_scalar(p + "step_index", static_cast<double>(envs_[i].env->step_index()));
    ck.put_scalar(p + "ep_return", envs_[i].ep_return);
    ck.put_scalar(p + "ep_cost", envs_[i].ep_cost);
    ck.put_blob(p + "rng", rng_blob(envs_[i].env->rng()));
  }

  const std::size_t K = buffer_.size();
  const int sd = envs_.front().env->state_dim();
  const int ad = envs_.front().env->action_dim();
  Mat states(sd, K), actions(ad, K), next_states(sd, K);
  Mat scalars(4, std::max<std::size_t>(K, 1));
  scalars.setZero();
  for (std::size_t k = 0; k < K; ++k) {
    const Transition& t = buffer_[k];
    states.col(k) = t.state;
    actions.col(k) = t.action;
    next_states.col(k) = t.next_state;
    scalars(0, k) = t.reward;
    scalars(1, k) = t.cost;
    scalars(2, k) = (t.terminated ? 1.0 : 0.0) + (t.truncated ? 2.0 : 0.0);
    scalars(3, k) = static_cast<double>(t.step_index);
  }
  ck.put("buffer.states", states);
  ck.put("buffer.actions", actions);
  ck.put("buffer.next_states", next_states);
  ck.put("buffer.scalars", scalars);
  ck.put_scalar("buffer.count", static_cast<double>(K));
  ck.put_scalar("buffer.cursor", static_cast<double>(buffer_.cursor()));

  Vec acc(11);
  acc << interval_ep_return_, interval_ep_cost_, interval_ep_count_, unsafe_calls_,
      conflict_calls_, eta_sum_, eta_count_, loss_r_sum_, loss_c_sum_, actor_loss_sum_,
      update_count_;
  ck.put("trainer.accumulators", acc);
  Vec pe(6);
  pe << (have_pending_eval_ ? 1.0 : 0.0), pending_eval_.eval_return, pending_eval_.eval_cost,
      pending_eval_.cost_bias, pending_eval_.cost_bias_abs, pending_eval_.oracle_cost;
  ck.put("trainer.pending_eval", pe);
  return ck;
}

void Trainer::restore(const Checkpoint& ck) {
  unpack_agent(ck, agent_);
  global_step_ = static_cast<std::int64_t>(ck.get_scalar("trainer.global_step"));
  trust_region_.delta = ck.get_scalar("trainer.delta");
  rng_from_blob(action_rng_, ck.get_blob("trainer.action_rng"));
  rng_from_blob(update_rng_, ck.get_blob("trainer.update_rng"));

  for (std::size_t i = 0; i < envs_.size(); ++i) {
    const std::string p = "env" + std::to_string(i) + ".";
    envs_[i].env->set_state(ck.get_vector(p + "state"),
                            static_cast<int>(ck.get_scalar(p + "step_index")));
    envs_[i].ep_return = ck.get_scalar(p + "ep_return");
    envs_[i].ep_cost = ck.get_scalar(p + "ep_cost");
    rng_from_blob(envs_[i].env->rng(), ck.get_blob(p + "rng"));
  }

  const std::size_t K = static_cast<std::size_t>(ck.get_scalar("buffer.count"));
  Mat states = ck.get_matrix("buffer.states");
  Mat actions = ck.get_matrix("buffer.actions");
  Mat next_states = ck.get_matrix("buffer.next_states");
  Mat scalars = ck.get_matrix("buffer.scalars");
  std::vector<Transition> data(K);
  for (std::size_t k = 0; k < K; ++k) {
    data[k].state = states.col(k);
    data[k].action = actions.col(k);
    data[k].next_state = next_states.col(k);
    data[k].reward = scalars(0, k);
    data[k].cost = scalars(1, k);
    const int flags = static_cast<int>(scalars(2, k));
    data[k].terminated = (flags & 1) != 0;
    data[k].truncated = (flags & 2) != 0;
    data[k].step_index = static_cast<std::int64_t>(scalars(3, k));
  }
  buffer_.restore(std::move(data), static_cast<std::size_t>(ck.get_scalar("buffer.cursor")));

  Vec acc = ck.get_vector("trainer.accumulators");
  interval_ep_return_ = acc[0];
  interval_ep_cost_ = acc[1];
  interval_ep_count_ = acc[2];
  unsafe_calls_ = acc[3];
  conflict_calls_ = acc[4];
  eta_sum_ = acc[5];
  eta_count_ = acc[6];
  loss_r_sum_ = acc[7];
  loss_c_sum_ = acc[8];
  actor_loss_sum_ = acc[9];
  update_count_ = acc[10];
  Vec pe = ck.get_vector("trainer.pending_eval");
  have_pending_eval_ = pe[0] != 0.0;
  pending_eval_.eval_return = pe[1];
  pending_eval_.eval_cost = pe[2];
  pending_eval_.cost_bias = pe[3];
  pending_eval_.cost_bias_abs = pe[4];
  pending_eval_.oracle_cost = pe[5];
}

EvalSummary evaluate_checkpoint(const std::string& checkpoint_path, int episodes,
                                std::uint64_t seed) {
  Checkpoint ck = Checkpoint::load(checkpoint_path);
  if (!ck.has("trainer.global_step"))
    throw std::runtime_error("evaluate_checkpoint: not a trainer checkpoint: " + checkpoint_path);
  std::istringstream cfg_text(ck.get_blob("trainer.config"));
  TrainConfig cfg = parse_config(cfg_text);
  Trainer trainer(cfg);
  trainer.restore(ck);
  return trainer.evaluate(episodes, seed);
}

}  // namespace coxq
