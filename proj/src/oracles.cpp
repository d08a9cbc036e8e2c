#include "coxq/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "coxq/learner.hpp"
#include "coxq/net.hpp"
#include "coxq/policy.hpp"
#include "coxq/quantile_critics.hpp"
#include "coxq/rng.hpp"
#include "coxq/step_control.hpp"

namespace coxq {

Vec qp_projection_oracle(const Vec& g_raw, const Vec& g1, const Vec& g2,
                         const DiagCovariance& sigma, int iters) {
  // Whiten: with w_i = sqrt(sigma_i), <a,b>_Sigma = (Wa).(Wb), so the problem
  // becomes a Euclidean projection onto two half-spaces with normals W*g1,
  // W*g2. Dykstra's corrections make the alternating projections converge to
  // the intersection projection, not just a feasible point.
  const Vec w = sigma.diag.array().sqrt();
  Vec x = g_raw.array() * w.array();
  const Vec n1 = g1.array() * w.array();
  const Vec n2 = g2.array() * w.array();
  const double n1n = n1.squaredNorm();
  const double n2n = n2.squaredNorm();

  Vec p = Vec::Zero(x.size()), q = Vec::Zero(x.size());
  for (int it = 0; it < iters; ++it) {
    if (n1n > 0) {
      Vec y = x + p;
      const double viol = std::min(0.0, y.dot(n1) / n1n);
      Vec xn = y - viol * n1;
      p = y - xn;
      x = xn;
    }
    if (n2n > 0) {
      Vec y = x + q;
      const double viol = std::min(0.0, y.dot(n2) / n2n);
      Vec xn = y - viol * n2;
      q = y - xn;
      x = xn;
    }
  }
  return x.array() / w.array();
}

double grid_step_oracle(double s, double r, double eta_max, int grid_points) {
  double best_eta = 0;
  double best_val = hinge(0.0, s, r);
  for (int i = 0; i <= grid_points; ++i) {
    const double eta = eta_max * i / grid_points;
    const double val = hinge(eta, s, r);
    if (val <= best_val) {  // ties resolve to the largest eta
      best_val = val;
      best_eta = eta;
    }
  }
  return best_eta;
}

Vec finite_difference(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
  Vec g(x.size());
  for (int i = 0; i < x.size(); ++i) {
    Vec xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

namespace {

void record_failure(VerifyReport& rep, double deviation, const std::string& dump) {
  rep.failures += 1;
  if (rep.failure_dumps.size() < 10) rep.failure_dumps.push_back(dump);
  rep.max_deviation = std::max(rep.max_deviation, deviation);
}

void note_deviation(VerifyReport& rep, double deviation) {
  rep.max_deviation = std::max(rep.max_deviation, deviation);
}

Vec random_direction(Rng& rng, int n) {
  const double scale = std::pow(10.0, rng.uniform(-1.0, 1.0));
  return scale * rng.normal_vec(n);
}

DiagCovariance random_sigma(Rng& rng, int n) {
  Vec d(n);
  for (int i = 0; i < n; ++i) d[i] = std::exp(rng.uniform(std::log(0.1), std::log(10.0)));
  return DiagCovariance(d);
}

VerifyReport verify_lemma1(int n_cases, std::uint64_t seed, double tol) {
  VerifyReport rep;
  rep.suite = "Lemma1";
  Rng rng(seed);
  const int dims[] = {2, 3, 5};
  for (int k = 0; k < n_cases; ++k) {
    const int n = dims[k % 3];
    const Vec g_r = random_direction(rng, n);
    const Vec g_c = random_direction(rng, n);
    const double lambda = rng.uniform(0.0, 5.0);
    const DiagCovariance sigma = random_sigma(rng, n);
    const Vec g_raw = g_r - lambda * g_c;
    const double scale = std::max(1.0, std::sqrt(sigma_norm2(g_raw, sigma)));

    ConeProjection cp = project_mgda(g_r, g_c, lambda, sigma);
    const Vec oracle = qp_projection_oracle(g_raw, g_r, -g_c, sigma);
    const double dev = std::sqrt(sigma_norm2(cp.g_star - oracle, sigma)) / scale;

    // KKT conditions of min ||u - g_raw||_Sigma^2 s.t. <g1,u>_S >= 0,
    // <g2,u>_S >= 0 with g1 = g_r, g2 = -g_c.
    const double feas1 = sigma_inner(g_r, cp.g_star, sigma);
    const double feas2 = sigma_inner(-g_c, cp.g_star, sigma);
    const Vec stat = cp.g_star - g_raw - cp.mu_r * g_r - cp.mu_c * (-g_c);
    const double stat_norm = std::sqrt(sigma_norm2(stat, sigma)) / scale;
    const double slack1 = std::abs(cp.mu_r * feas1) / (scale * scale);
    const double slack2 = std::abs(cp.mu_c * feas2) / (scale * scale);

    ++rep.cases;
    note_deviation(rep, dev);
    const bool ok = dev <= tol && feas1 >= -tol * scale && feas2 >= -tol * scale &&
                    cp.mu_r >= -tol && cp.mu_c >= -tol && stat_norm <= tol &&
                    slack1 <= tol && slack2 <= tol;
    if (!ok) {
      std::ostringstream os;
      os << "case " << k << " n=" << n << " lambda=" << lambda << " dev=" << dev
         << " feas=(" << feas1 << "," << feas2 << ") stat=" << stat_norm << " slack=("
         << slack1 << "," << slack2 << ") case_id=" << to_string(cp.case_id);
      record_failure(rep, dev, os.str());
    }
  }
  return rep;
}

VerifyReport verify_lemma2(int n_cases, std::uint64_t seed, double /*tol*/) {
  VerifyReport rep;
  rep.suite = "Lemma2";
  Rng rng(seed);
  const int G = 100000;
  for (int k = 0; k < n_cases; ++k) {
    const double s = rng.uniform(-5.0, 5.0);
    const double r = rng.uniform(-5.0, 5.0);
    const double eta_max = rng.uniform(1e-3, 3.0);
    const double closed = solve_step(s, r, eta_max).eta_star;
    const double grid = grid_step_oracle(s, r, eta_max, G);
    const double cell = eta_max / G;
    const double dev = std::abs(closed - grid);
    ++rep.cases;
    note_deviation(rep, dev);
    if (dev > cell + 1e-12) {
      std::ostringstream os;
      os << "case " << k << " s=" << s << " r=" << r << " eta_max=" << eta_max
         << " closed=" << closed << " grid=" << grid;
      record_failure(rep, dev, os.str());
    }
  }
  return rep;
}

VerifyReport verify_bounds(int n_cases, std::uint64_t seed, double tol) {
  VerifyReport rep;
  rep.suite = "Bounds";
  Rng rng(seed);
  for (int k = 0; k < n_cases; ++k) {
    const int N = 2 + static_cast<int>(rng.index(6));
    const int M = 3 + static_cast<int>(rng.index(29));
    const int alpha = 1 + static_cast<int>(rng.index(M));
    const double beta_c = rng.uniform(0.0, 5.0);
    const double beta_r = rng.uniform(0.0, 5.0);
    Mat atoms(N, M);
    for (int i = 0; i < N; ++i)
      for (int m = 0; m < M; ++m) atoms(i, m) = 3.0 * rng.normal();

    // Scalar-loop re-derivation, independent of the Eigen implementation.
    double lb = 0, ub = 0, mean_all = 0, r_ub = 0;
    for (int m = 0; m < M; ++m) {
      double mu = 0;
      for (int i = 0; i < N; ++i) mu += atoms(i, m);
      mu /= N;
      double var = 0;
      for (int i = 0; i < N; ++i) var += (atoms(i, m) - mu) * (atoms(i, m) - mu);
      const double sd = std::sqrt(var / N);
      if (m >= M - alpha) {
        lb += mu - beta_c * sd;
        ub += mu + beta_c * sd;
      }
      r_ub += mu + beta_r * sd;
      mean_all += mu;
    }
    lb /= alpha;
    ub /= alpha;
    r_ub /= M;
    mean_all /= M;

    CostBoundResult cb = cost_bounds(atoms, beta_c, alpha);
    RewardBoundResult rb = reward_upper_bound(atoms, beta_r);
    const double dev = std::max({std::abs(cb.lb - lb), std::abs(cb.ub - ub),
                                 std::abs(cb.mean - mean_all), std::abs(rb.ub - r_ub),
                                 std::abs(rb.mean - mean_all)});
    ++rep.cases;
    note_deviation(rep, dev);
    if (dev > tol) {
      std::ostringstream os;
      os << "case " << k << " N=" << N << " M=" << M << " alpha=" << alpha << " dev=" << dev;
      record_failure(rep, dev, os.str());
    }
  }
  return rep;
}

VerifyReport verify_gradients(int n_cases, std::uint64_t seed, double tol) {
  VerifyReport rep;
  rep.suite = "Gradients";
  Rng rng(seed);
  for (int k = 0; k < n_cases; ++k) {
    const int sd = 2 + static_cast<int>(rng.index(3));
    const int ad = 1 + static_cast<int>(rng.index(2));
    CriticEnsemble reward(2, sd, {8}, 5, ad);
    CriticEnsemble cost(2, sd, {8}, 5, ad);
    for (auto& net : reward.nets()) net.init(rng, 0.1);
    for (auto& net : cost.nets()) net.init(rng, 0.1);
    BoundConfig bc{rng.uniform(0.5, 4.0), rng.uniform(0.5, 4.0),
                   1 + static_cast<int>(rng.index(5))};
    const Vec state = rng.normal_vec(sd);
    const Vec action = 0.3 * rng.normal_vec(ad);

    GradientTriple g = critic_action_gradients(reward, cost, state, bc, action);
    auto f_r = [&](const Vec& a) { return reward_upper_bound(reward.atoms(state, a), bc.beta_r).ub; };
    auto f_c = [&](const Vec& a) { return cost_bounds(cost.atoms(state, a), bc.beta_c, bc.alpha).lb; };
    auto f_m = [&](const Vec& a) { return cost_bounds(cost.atoms(state, a), bc.beta_c, bc.alpha).mean; };
    const Vec fd_r = finite_difference(f_r, action);
    const Vec fd_c = finite_difference(f_c, action);
    const Vec fd_m = finite_difference(f_m, action);

    auto rel = [](const Vec& a, const Vec& b) {
      return (a - b).norm() / std::max(1.0, std::max(a.norm(), b.norm()));
    };
    double dev = std::max({rel(g.g_r, fd_r), rel(g.g_c, fd_c), rel(g.g_m, fd_m)});

    // Network parameter gradients through a squared-error head.
    DenseNet net(sd, {6}, 3);
    net.init(rng, 0.1);
    Mat X(sd, 4), T(3, 4);
    for (int c = 0; c < 4; ++c) {
      X.col(c) = rng.normal_vec(sd);
      T.col(c) = rng.normal_vec(3);
    }
    DenseNet::Tape tape;
    Mat out = net.forward(X, tape);
    auto grads = net.zeroGrads();
    net.backward(tape, out - T, grads);
    for (int probe = 0; probe < 6; ++probe) {
      const std::size_t layer = rng.index(net.layers().size());
      auto& W = net.layers()[layer].W;
      const int i = static_cast<int>(rng.index(W.rows()));
      const int j = static_cast<int>(rng.index(W.cols()));
      const double h = 1e-6;
      const double orig = W(i, j);
      W(i, j) = orig + h;
      const double up = 0.5 * (net.forward(X) - T).squaredNorm();
      W(i, j) = orig - h;
      const double dn = 0.5 * (net.forward(X) - T).squaredNorm();
      W(i, j) = orig;
      const double fd = (up - dn) / (2 * h);
      const double an = grads.dW[layer](i, j);
      dev = std::max(dev, std::abs(an - fd) / std::max(1.0, std::abs(fd)));
    }

    // ALM penalty derivative.
    LagrangianState lag;
    lag.lambda = rng.uniform(0.0, 3.0);
    lag.alm_c = rng.uniform(1.0, 20.0);
    lag.d_q = rng.uniform(0.0, 2.0);
    const double q = rng.uniform(-1.0, 3.0);
    const double switch_pt = lag.d_q - lag.lambda / lag.alm_c;
    if (std::abs(q - switch_pt) > 1e-3) {  // FD is invalid astride the kink
      const double h = 1e-6;
      const double fd = (alm_penalty(q + h, lag) - alm_penalty(q - h, lag)) / (2 * h);
      dev = std::max(dev, std::abs(alm_penalty_grad(q, lag) - fd) / std::max(1.0, std::abs(fd)));
    }

    ++rep.cases;
    note_deviation(rep, dev);
    if (dev > tol) {
      std::ostringstream os;
      os << "case " << k << " sd=" << sd << " ad=" << ad << " rel_err=" << dev;
      record_failure(rep, dev, os.str());
    }
  }
  return rep;
}

VerifyReport verify_quantiles(int n_cases, std::uint64_t seed, double tol) {
  VerifyReport rep;
  rep.suite = "Quantiles";
  Rng rng(seed);
  for (int k = 0; k < n_cases; ++k) {
    const int M = 2 + static_cast<int>(rng.index(20));
    const int K = 1 + static_cast<int>(rng.index(30));
    const double kappa = rng.uniform(0.25, 2.0);
    Vec pred = 2.0 * rng.normal_vec(M);
    std::vector<double> targets(K);
    for (double& t : targets) t = 2.0 * rng.normal();

    // Independent scalar re-derivation of the asymmetric Huber loss.
    const Vec tau = tau_levels(M);
    double ref = 0;
    for (int m = 0; m < M; ++m) {
      for (double t : targets) {
        const double u = t - pred[m];
        const double au = std::abs(u);
        const double huber = au <= kappa ? 0.5 * u * u : kappa * (au - 0.5 * kappa);
        const double w = std::abs(tau[m] - (u < 0 ? 1.0 : 0.0));
        ref += w * huber / kappa;
      }
    }
    ref /= static_cast<double>(M) * K;

    Vec grad;
    const double loss = quantile_huber_loss(pred, targets, kappa, &grad);
    double dev = std::abs(loss - ref) / std::max(1.0, std::abs(ref));

    const Vec fd = finite_difference(
        [&](const Vec& p) { return quantile_huber_loss(p, targets, kappa); }, pred);
    dev = std::max(dev, (grad - fd).norm() / std::max(1.0, fd.norm()));

    ++rep.cases;
    note_deviation(rep, dev);
    if (dev > tol) {
      std::ostringstream os;
      os << "case " << k << " M=" << M << " targets=" << K << " dev=" << dev;
      record_failure(rep, dev, os.str());
    }
  }
  return rep;
}

}  // namespace

VerifyReport run_verify(const std::string& suite, int n_cases, std::uint64_t seed,
                        double tolerance) {
  if (suite == "Lemma1") return verify_lemma1(n_cases, seed, tolerance);
  if (suite == "Lemma2") return verify_lemma2(n_cases, seed, tolerance);
  if (suite == "Bounds") return verify_bounds(n_cases, seed, tolerance);
  if (suite == "Gradients") return verify_gradients(n_cases, seed, tolerance);
  if (suite == "Quantiles") return verify_quantiles(n_cases, seed, tolerance);
  throw std::invalid_argument("run_verify: unknown suite " + suite);
}

}  // namespace coxq
