#include <doctest.h>

#include <cmath>

#include "coxq/learner.hpp"
#include "coxq/oracles.hpp"
#include "coxq/rng.hpp"

using namespace coxq;

TEST_CASE("convert_limit reference values") {
  CHECK(std::abs(convert_limit(25.0, 1000, 0.99) - 2.49989) < 1e-4);
  CHECK(std::abs(convert_limit(10.0, 400, 0.975) - 0.99996) < 1e-4);

  SUBCASE("gamma to 0 recovers the single-step budget d/T") {
    CHECK(convert_limit(5.0, 200, 1e-12) == doctest::Approx(5.0 / 200.0));
  }
  SUBCASE("T = 1 gives the full budget") {
    CHECK(convert_limit(7.0, 1, 0.99) == doctest::Approx(7.0));
  }
  SUBCASE("rejects bad arguments") {
    CHECK_THROWS(convert_limit(5.0, 0, 0.99));
    CHECK_THROWS(convert_limit(5.0, 10, 1.0));
    CHECK_THROWS(convert_limit(5.0, 10, 0.0));
  }
}

TEST_CASE("lambda_update is projected dual ascent") {
  LagrangianState lag;
  lag.lambda = 1.0;
  lag.lr_lambda = 0.1;
  lag.d_q = 2.0;

  SUBCASE("over budget raises lambda") {
    CHECK(lambda_update(lag, 5.0).lambda == doctest::Approx(1.3));
  }
  SUBCASE("under budget lowers lambda") {
    CHECK(lambda_update(lag, 1.0).lambda == doctest::Approx(0.9));
  }
  SUBCASE("projection at zero") {
    lag.lambda = 0.01;
    CHECK(lambda_update(lag, -100.0).lambda == 0.0);
    // and it can leave zero again
    LagrangianState at_zero = lag;
    at_zero.lambda = 0.0;
    CHECK(lambda_update(at_zero, 3.0).lambda == doctest::Approx(0.1));
  }
  SUBCASE("fixed point at the budget") {
    CHECK(lambda_update(lag, 2.0).lambda == doctest::Approx(lag.lambda));
  }
}

TEST_CASE("ALM penalty branch structure") {
  LagrangianState lag;
  lag.lambda = 2.0;
  lag.alm_c = 10.0;
  lag.d_q = 1.0;

  SUBCASE("active region is the quadratic-plus-linear form") {
    const double q = 1.5;  // gap 0.5, switch value 2 + 5 = 7 >= 0
    CHECK(alm_penalty(q, lag) == doctest::Approx(2.0 * 0.5 + 0.5 * 10.0 * 0.25));
    CHECK(alm_penalty_grad(q, lag) == doctest::Approx(7.0));
  }
  SUBCASE("inactive region is flat at the switch constant") {
    const double q = 0.5;  // gap -0.5, switch value 2 - 5 = -3 < 0
    CHECK(alm_penalty(q, lag) == doctest::Approx(-0.2));  // -lambda^2 / (2c)
    CHECK(alm_penalty(q - 3.0, lag) == doctest::Approx(-0.2));
    CHECK(alm_penalty_grad(q, lag) == 0.0);
  }
  SUBCASE("continuous and once-differentiable at the switch") {
    // switch point: lambda + c*(q - d) = 0 -> q = d - lambda/c
    const double q_switch = lag.d_q - lag.lambda / lag.alm_c;
    const double eps = 1e-7;
    const double below = alm_penalty(q_switch - eps, lag);
    const double above = alm_penalty(q_switch + eps, lag);
    CHECK(std::abs(above - below) < 1e-10);
    CHECK(std::abs(alm_penalty_grad(q_switch + eps, lag)) < 1e-5);
    // the penalty value at the switch is the constant -lambda^2/(2c) shifted
    // to zero, so both sides approach the same number
    CHECK(alm_penalty(q_switch, lag) ==
          doctest::Approx(-lag.lambda * lag.lambda / (2.0 * lag.alm_c)));
  }
  SUBCASE("gradient matches finite differences away from the kink") {
    Rng rng(11);
    for (int k = 0; k < 100; ++k) {
      LagrangianState l;
      l.lambda = rng.uniform(0.0, 5.0);
      l.alm_c = rng.uniform(0.5, 20.0);
      l.d_q = rng.uniform(0.0, 3.0);
      const double q = rng.uniform(-4.0, 6.0);
      const double kink = l.d_q - l.lambda / l.alm_c;
      if (std::abs(q - kink) < 1e-3) continue;
      const Vec fd = finite_difference(
          [&](const Vec& x) { return alm_penalty(x[0], l); }, Vec::Constant(1, q));
      CHECK(alm_penalty_grad(q, l) == doctest::Approx(fd[0]).epsilon(1e-5));
    }
  }
}

TEST_CASE("temperature_update") {
  SUBCASE("auto_tune off freezes the temperature") {
    TemperatureState t;
    t.auto_tune = false;
    const double before = t.log_alpha;
    t = temperature_update(t, -10.0);
    CHECK(t.log_alpha == before);
  }
  SUBCASE("entropy below target pushes alpha up, above pushes down") {
    TemperatureState lo;  // -log_pi = 0.2 < target 1 -> grad negative -> Adam raises
    lo.target_entropy = 1.0;
    const double a0 = lo.log_alpha;
    lo = temperature_update(lo, -0.2);
    CHECK(lo.log_alpha > a0);

    TemperatureState hi;
    hi.target_entropy = 1.0;
    hi = temperature_update(hi, -5.0);  // entropy 5 > target
    CHECK(hi.log_alpha < a0);
  }
  SUBCASE("repeated updates drive alpha toward zero under excess entropy") {
    TemperatureState t;
    t.target_entropy = -1.0;
    t.lr = 1e-2;
    for (int i = 0; i < 5000; ++i) t = temperature_update(t, -3.0);
    CHECK(t.alpha() < 0.01);
  }
}

TEST_CASE("polyak_update") {
  Rng rng(12);
  CriticEnsemble live_r(2, 2, {4}, 3, 1), live_c(2, 2, {4}, 3, 1);
  for (auto& n : live_r.nets()) n.init(rng, 0.5);
  for (auto& n : live_c.nets()) n.init(rng, 0.5);

  TargetNetworks targets;
  targets.reward = live_r.nets();
  targets.cost = live_c.nets();
  for (auto& n : targets.reward)
    for (auto& l : n.layers()) l.W.setZero(), l.b.setZero();
  for (auto& n : targets.cost)
    for (auto& l : n.layers()) l.W.setZero(), l.b.setZero();

  SUBCASE("tau = 1 copies the live networks") {
    targets.tau = 1.0;
    polyak_update(targets, live_r, live_c);
    CHECK((targets.reward[0].layers()[0].W - live_r.nets()[0].layers()[0].W).norm() == 0.0);
    CHECK((targets.cost[1].layers()[1].b - live_c.nets()[1].layers()[1].b).norm() == 0.0);
  }
  SUBCASE("tau = 0.005 contracts geometrically toward the live weights") {
    targets.tau = 0.005;
    const Mat goal = live_r.nets()[0].layers()[0].W;
    double prev = goal.norm();
    for (int k = 0; k < 3; ++k) {
      polyak_update(targets, live_r, live_c);
      const double gap = (targets.reward[0].layers()[0].W - goal).norm();
      CHECK(gap == doctest::Approx(prev * 0.995));
      prev = gap;
    }
  }
  SUBCASE("mismatched ensembles are rejected") {
    TargetNetworks bad;
    bad.reward = {live_r.nets()[0]};
    bad.cost = live_c.nets();
    CHECK_THROWS(polyak_update(bad, live_r, live_c));
  }
}

namespace {

// One-state one-action degenerate CMDP batch: every transition loops the
// state onto itself with fixed reward and cost.
Batch loop_batch(int B, double reward, double cost, bool terminated) {
  Batch b;
  b.states = Mat::Zero(1, B);
  b.actions = Mat::Zero(1, B);
  b.next_states = Mat::Zero(1, B);
  b.rewards = Vec::Constant(B, reward);
  b.costs = Vec::Constant(B, cost);
  b.terminated.assign(B, terminated ? 1 : 0);
  return b;
}

Agent loop_agent(Rng& rng, int quantiles, double gamma, int n_critics = 2) {
  ActionBox box{Vec::Constant(1, -1.0), Vec::Constant(1, 1.0)};
  Agent agent(1, 1, box, {16}, {16}, n_critics, quantiles, 3e-3, rng);
  agent.gamma = gamma;
  agent.truncation = TruncationSpec{0, 0};
  return agent;
}

}  // namespace

TEST_CASE("critic fixed point on a constant-signal loop") {
  // gamma = 0.5, reward 1 every step, no truncation, entropy off: every
  // quantile of the discounted return is 1/(1-gamma) = 2.
  Rng rng(13);
  Agent agent = loop_agent(rng, 5, 0.5);
  agent.targets.tau = 0.05;
  Batch batch = loop_batch(32, 1.0, 1.0, false);
  for (int it = 0; it < 4000; ++it) {
    critic_update(agent, batch, rng, false);
    polyak_update(agent.targets, agent.reward_critics, agent.cost_critics);
  }
  const Vec z = Vec::Zero(1);
  const Mat atoms_r = agent.reward_critics.atoms(z, z);
  const Mat atoms_c = agent.cost_critics.atoms(z, z);
  for (int c = 0; c < atoms_r.rows(); ++c)
    for (int m = 0; m < atoms_r.cols(); ++m) {
      CHECK(atoms_r(c, m) == doctest::Approx(2.0).epsilon(0.02));
      CHECK(atoms_c(c, m) == doctest::Approx(2.0).epsilon(0.02));
    }
}

TEST_CASE("critic quantiles fit a Bernoulli target through the Huber smoothing") {
  // Terminal transitions with cost ~ Bernoulli(0.5). Both outcomes sit inside
  // the kappa = 1 quadratic zone of the asymmetric Huber loss, whose
  // minimizer there is the level tau itself rather than the hard quantile, so
  // the M = 4 atoms converge to .125 .375 .625 .875.
  Rng rng(14);
  Agent agent = loop_agent(rng, 4, 0.5, 1);
  agent.gamma = 0.5;  // irrelevant: all transitions terminal
  const int B = 64;
  for (int it = 0; it < 6000; ++it) {
    Batch batch = loop_batch(B, 0.0, 0.0, true);
    for (int b = 0; b < B; ++b) batch.costs[b] = rng.uniform() < 0.5 ? 1.0 : 0.0;
    critic_update(agent, batch, rng, false);
  }
  const Vec z = Vec::Zero(1);
  const Mat atoms = agent.cost_critics.atoms(z, z);
  CHECK(atoms(0, 0) == doctest::Approx(0.125).epsilon(0.2));
  CHECK(atoms(0, 1) == doctest::Approx(0.375).epsilon(0.1));
  CHECK(atoms(0, 2) == doctest::Approx(0.625).epsilon(0.1));
  CHECK(atoms(0, 3) == doctest::Approx(0.875).epsilon(0.1));
}

TEST_CASE("reward truncation lowers the learned values") {
  // Same noisy-reward loop trained twice from identical inits; dropping the
  // top pooled atoms must not raise the learned mean.
  auto train_mean = [](int k_r) {
    Rng rng(15);
    Agent agent = loop_agent(rng, 5, 0.5);
    agent.truncation = TruncationSpec{k_r, 0};
    Rng noise(99);
    Rng upd(100);
    for (int it = 0; it < 3000; ++it) {
      Batch batch = loop_batch(32, 0.0, 0.0, false);
      for (int b = 0; b < 32; ++b) batch.rewards[b] = noise.normal();
      critic_update(agent, batch, upd, false);
    }
    const Vec z = Vec::Zero(1);
    return agent.reward_critics.atoms(z, z).mean();
  };
  const double full = train_mean(0);
  const double truncated = train_mean(4);
  CHECK(truncated < full);
}

TEST_CASE("actor_update pushes the mean toward higher reward") {
  // Critics are frozen surrogates shaped so that reward increases in the
  // action; with no constraint pressure the policy mean must move up.
  Rng rng(16);
  ActionBox box{Vec::Constant(1, -1.0), Vec::Constant(1, 1.0)};
  Agent agent(1, 1, box, {16}, {16}, 2, 3, 3e-3, rng);
  agent.truncation = TruncationSpec{0, 0};
  agent.bounds.alpha = 3;
  agent.lagrangian.lambda = 0.0;
  agent.lagrangian.alm_c = 1e-9;
  agent.lagrangian.d_q = 1e9;  // penalty branch never activates
  agent.temperature.auto_tune = false;
  agent.temperature.log_alpha = std::log(1e-6);
  // reward critic approximates q(s, a) = a via supervised pre-training
  for (int it = 0; it < 4000; ++it) {
    Batch b;
    const int B = 16;
    b.states = Mat::Zero(1, B);
    b.actions.resize(1, B);
    b.next_states = Mat::Zero(1, B);
    b.rewards.resize(B);
    b.costs = Vec::Zero(B);
    b.terminated.assign(B, 1);
    for (int i = 0; i < B; ++i) {
      b.actions(0, i) = rng.uniform(-1.0, 1.0);
      b.rewards[i] = b.actions(0, i);
    }
    critic_update(agent, b, rng, false);
  }
  const double before = agent.policy.forward(Vec::Zero(1)).mu[0];
  Batch states_only = loop_batch(32, 0.0, 0.0, false);
  for (int it = 0; it < 400; ++it) actor_update(agent, states_only, rng);
  const double after = agent.policy.forward(Vec::Zero(1)).mu[0];
  CHECK(after > before + 0.05);
}

TEST_CASE("action bound penalty appears in the loss and caps the mean") {
  Rng rng(17);
  ActionBox box{Vec::Constant(1, -1.0), Vec::Constant(1, 1.0)};
  Agent agent(1, 1, box, {8}, {8}, 1, 2, 3e-3, rng);
  agent.truncation = TruncationSpec{0, 0};
  agent.bounds.alpha = 2;
  agent.action_bound_weight = 1.0;
  // force the mean far outside the box
  agent.policy.net().layers().back().b[0] = 5.0;
  Batch batch = loop_batch(8, 0.0, 0.0, false);
  ActorLosses with = actor_update(agent, batch, rng);
  // the out-of-box term alone contributes about weight * (mu - hi)^2 = 16
  CHECK(with.actor_loss > 10.0);
  // repeated updates pull the mean back toward the box edge
  for (int it = 0; it < 3000; ++it) actor_update(agent, batch, rng);
  CHECK(agent.policy.forward(Vec::Zero(1)).mu[0] < 2.0);
}

TEST_CASE("empty batches are rejected") {
  Rng rng(18);
  ActionBox box{Vec::Constant(1, -1.0), Vec::Constant(1, 1.0)};
  Agent agent(1, 1, box, {8}, {8}, 1, 2, 3e-4, rng);
  Batch empty;
  empty.states = Mat::Zero(1, 0);
  empty.actions = Mat::Zero(1, 0);
  empty.next_states = Mat::Zero(1, 0);
  empty.rewards = Vec::Zero(0);
  empty.costs = Vec::Zero(0);
  CHECK_THROWS(critic_update(agent, empty, rng));
  CHECK_THROWS(actor_update(agent, empty, rng));
}
