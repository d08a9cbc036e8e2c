#include "coxq/envs.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace coxq {

Vec toy_velocity_reset(const ToyVelocitySpec& spec, Rng& rng) {
  Vec s(2);
  s[0] = rng.uniform(-spec.init_perturb, spec.init_perturb);  // x
  s[1] = rng.uniform(-spec.init_perturb, spec.init_perturb);  // v
  return s;
}

CmdpStep toy_velocity_step(const ToyVelocitySpec& spec, const Vec& state, int step_index,
                           const Vec& action, Rng& rng) {
  const double a = std::clamp(action[0], spec.accel_lo, spec.accel_hi);
  const double noise = spec.noise_std > 0.0 ? spec.noise_std * rng.normal() : 0.0;
  const double v = state[1] + a * spec.dt + noise;
  const double x = state[0] + v * spec.dt;
  CmdpStep out;
  out.next_state = Vec(2);
  out.next_state << x, v;
  out.reward = v * spec.dt - spec.ctrl_weight * a * a;
  out.cost = v > spec.v_threshold ? 1.0 : 0.0;
  out.truncated = step_index + 1 >= spec.horizon;
  return out;
}

Vec toy_sparse_goal_reset(const ToySparseGoalSpec& spec, Rng& rng) {
  Vec s(1);
  s[0] = rng.uniform(-spec.init_perturb, spec.init_perturb);
  return s;
}

CmdpStep toy_sparse_goal_step(const ToySparseGoalSpec& spec, const Vec& state, int step_index,
                              const Vec& action, Rng& rng) {
  const double a = std::clamp(action[0], spec.accel_lo, spec.accel_hi);
  const double noise = spec.noise_std > 0.0 ? spec.noise_std * rng.normal() : 0.0;
  const double x = state[0] + a * spec.dt + noise;
  CmdpStep out;
  out.next_state = Vec(1);
  out.next_state << x;
  out.cost = (x >= spec.pit_lo && x <= spec.pit_hi) ? 1.0 : 0.0;
  if (x >= spec.goal_x) {
    out.reward = spec.goal_bonus;
    out.terminated = true;
  }
  out.truncated = !out.terminated && step_index + 1 >= spec.horizon;
  return out;
}

std::vector<Vec> toy_velocity_probe_states(const ToyVelocitySpec& spec) {
  // Fractions of the threshold velocity from clearly safe to clearly over
  // the limit; position barely affects the cost-to-go.
  const double fracs[] = {0.5, 0.9, 1.0, 1.05, 1.1, 1.15, 1.2, 1.3};
  std::vector<Vec> out;
  for (double f : fracs) {
    Vec s(2);
    s << 2.0, f * spec.v_threshold;
    out.push_back(s);
  }
  return out;
}

std::vector<Vec> toy_sparse_goal_probe_states(const ToySparseGoalSpec& spec) {
  const double w = spec.pit_hi - spec.pit_lo;
  const double xs[] = {spec.pit_lo - 1.0,      spec.pit_lo - 0.3,
                       spec.pit_lo - 0.05,     spec.pit_lo + 0.25 * w,
                       spec.pit_lo + 0.5 * w,  spec.pit_hi - 0.25 * w,
                       spec.pit_hi + 0.05,     spec.pit_hi + 0.3};
  std::vector<Vec> out;
  for (double x : xs) out.push_back(Vec::Constant(1, x));
  return out;
}

namespace {

template <typename Spec>
class ToyEnv final : public Env {
 public:
  using ResetFn = Vec (*)(const Spec&, Rng&);
  using StepFn = CmdpStep (*)(const Spec&, const Vec&, int, const Vec&, Rng&);
  using ProbeFn = std::vector<Vec> (*)(const Spec&);

  ToyEnv(Spec spec, std::uint64_t seed, int state_dim, ResetFn reset_fn, StepFn step_fn,
         ProbeFn probe_fn)
      : spec_(spec),
        rng_(seed),
        sd_(state_dim),
        reset_fn_(reset_fn),
        step_fn_(step_fn),
        probe_fn_(probe_fn) {
    state_ = Vec::Zero(sd_);
  }

  int state_dim() const override { return sd_; }
  int action_dim() const override { return 1; }
  ActionBox action_box() const override {
    ActionBox b;
    b.lo = Vec::Constant(1, spec_.accel_lo);
    b.hi = Vec::Constant(1, spec_.accel_hi);
    return b;
  }
  int horizon() const override { return spec_.horizon; }

  Vec reset() override {
    state_ = reset_fn_(spec_, rng_);
    t_ = 0;
    return state_;
  }

  CmdpStep step(const Vec& action) override {
    CmdpStep out = step_fn_(spec_, state_, t_, action, rng_);
    state_ = out.next_state;
    ++t_;
    return out;
  }

  const Vec& state() const override { return state_; }
  int step_index() const override { return t_; }
  Rng& rng() override { return rng_; }

  std::unique_ptr<Env> clone() const override { return std::make_unique<ToyEnv>(*this); }

  void set_state(const Vec& s, int t) override {
    state_ = s;
    t_ = t;
  }

  std::vector<Vec> probe_states() const override { return probe_fn_(spec_); }

 private:
  Spec spec_;
  Rng rng_;
  int sd_;
  ResetFn reset_fn_;
  StepFn step_fn_;
  ProbeFn probe_fn_;
  Vec state_;
  int t_ = 0;
};

}  // namespace

std::unique_ptr<Env> make_toy_velocity(const ToyVelocitySpec& spec, std::uint64_t seed) {
  return std::make_unique<ToyEnv<ToyVelocitySpec>>(spec, seed, 2, &toy_velocity_reset,
                                                   &toy_velocity_step,
                                                   &toy_velocity_probe_states);
}

std::unique_ptr<Env> make_toy_sparse_goal(const ToySparseGoalSpec& spec, std::uint64_t seed) {
  return std::make_unique<ToyEnv<ToySparseGoalSpec>>(spec, seed, 1, &toy_sparse_goal_reset,
                                                     &toy_sparse_goal_step,
                                                     &toy_sparse_goal_probe_states);
}

std::unique_ptr<Env> make_env(const std::string& name, std::uint64_t seed) {
  if (name == "toy_velocity") return make_toy_velocity(ToyVelocitySpec{}, seed);
  if (name == "toy_sparse_goal") return make_toy_sparse_goal(ToySparseGoalSpec{}, seed);
  throw std::invalid_argument("unknown environment: " + name);
}

OracleEstimate mc_oracle(Env& env_template, const std::function<Vec(const Vec&)>& policy,
                         const Vec& state, int step_index, const Vec& action, int n_rollouts,
                         double gamma, int horizon, int M, std::uint64_t seed) {
  if (n_rollouts < 1) throw std::invalid_argument("mc_oracle: n_rollouts >= 1");
  std::vector<double> returns(n_rollouts), costs(n_rollouts);
  for (int k = 0; k < n_rollouts; ++k) {
    auto env = env_template.clone();
    env->rng() = Rng(seed + static_cast<std::uint64_t>(k));
    // Re-enter at the probed (state, action).
    env->reset();
    env->set_state(state, step_index);

    double zr = 0, zc = 0, disc = 1.0;
    Vec a = action;
    for (int t = 0; t < horizon; ++t) {
      CmdpStep s = env->step(a);
      zr += disc * s.reward;
      zc += disc * s.cost;
      disc *= gamma;
      if (s.terminated || s.truncated || disc == 0.0) break;
      a = policy(s.next_state);
    }
    returns[k] = zr;
    costs[k] = zc;
  }

  auto summarize = [&](std::vector<double> xs, double& mean, double& se, Vec& quant) {
    mean = 0;
    for (double x : xs) mean += x;
    mean /= xs.size();
    double var = 0;
    for (double x : xs) var += (x - mean) * (x - mean);
    se = xs.size() > 1 ? std::sqrt(var / (xs.size() - 1) / xs.size()) : 0.0;
    std::sort(xs.begin(), xs.end());
    quant = Vec(M);
    for (int m = 0; m < M; ++m) {
      const double level = (m + 0.5) / M;
      const int idx = std::clamp(static_cast<int>(level * xs.size()), 0,
                                 static_cast<int>(xs.size()) - 1);
      quant[m] = xs[idx];
    }
  };

  OracleEstimate est;
  est.n_rollouts = n_rollouts;
  summarize(returns, est.mean_return, est.se_return, est.return_quantiles);
  summarize(costs, est.mean_cost, est.se_cost, est.cost_quantiles);
  return est;
}

DpSolution dp_constrained_optimum(const ToyVelocitySpec& spec, int grid_resolution,
                                  double d_episode, int action_grid) {
  if (d_episode < 0.0) throw std::invalid_argument("dp_constrained_optimum: negative budget");
  if (grid_resolution < 50)
    throw std::invalid_argument("dp_constrained_optimum: grid resolution >= 50 required");

  const double v_lo = -1.0, v_hi = 3.0;
  const int R = grid_resolution;
  const double dv = (v_hi - v_lo) / (R - 1);
  const int T = spec.horizon;
  // Cost is at most 1 per step, so any budget beyond the horizon is
  // equivalent to the horizon; clamping keeps the tables small.
  const int B = static_cast<int>(std::min(std::floor(d_episode), static_cast<double>(T)));
  constexpr double kNegInf = -1e18;

  auto interp = [&](const std::vector<double>& row, double v) {
    const double pos = std::clamp((v - v_lo) / dv, 0.0, static_cast<double>(R - 1));
    const int i0 = std::min(static_cast<int>(pos), R - 2);
    const double w = pos - i0;
    const double a = row[i0], b = row[i0 + 1];
    if (a <= kNegInf || b <= kNegInf) return kNegInf;
    return (1.0 - w) * a + w * b;
  };

  // V[b][iv] for one time slice; backward induction over t.
  std::vector<std::vector<double>> V(B + 1, std::vector<double>(R, 0.0));
  DpSolution sol;
  sol.policy_table.assign(T, std::vector<std::vector<double>>(
                                 R, std::vector<double>(B + 1, 0.0)));

  for (int t = T - 1; t >= 0; --t) {
    std::vector<std::vector<double>> Vn(B + 1, std::vector<double>(R, kNegInf));
    for (int iv = 0; iv < R; ++iv) {
      const double v = v_lo + iv * dv;
      for (int b = 0; b <= B; ++b) {
        double best = kNegInf, best_a = 0.0;
        for (int ka = 0; ka < action_grid; ++ka) {
          const double a =
              spec.accel_lo + (spec.accel_hi - spec.accel_lo) * ka / (action_grid - 1);
          const double vn = v + a * spec.dt;
          const int c = vn > spec.v_threshold ? 1 : 0;
          if (c > b) continue;
          const double reward = vn * spec.dt - spec.ctrl_weight * a * a;
          const double cont = interp(V[b - c], vn);
          if (cont <= kNegInf) continue;
          const double val = reward + cont;
          if (val > best) {
            best = val;
            best_a = a;
          }
        }
        Vn[b][iv] = best;
        sol.policy_table[t][iv][b] = best_a;
      }
    }
    V.swap(Vn);
  }

  sol.best_return = interp(V[B], 0.0);
  return sol;
}

}  // namespace coxq
