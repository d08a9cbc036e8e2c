#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "coxq/config.hpp"
#include "coxq/oracles.hpp"
#include "coxq/plot.hpp"
#include "coxq/trainer.hpp"

namespace {

int cmd_train(const std::string& config_path, bool have_seed, std::uint64_t seed,
              const std::string& out_dir, bool no_cox,
              const std::vector<std::string>& overrides) {
  coxq::TrainConfig cfg =
      config_path.empty() ? coxq::TrainConfig{} : coxq::load_config(config_path);
  for (const std::string& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value: " + kv);
    coxq::apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (have_seed) cfg.seed = seed;
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (no_cox) cfg.use_cox = false;
  cfg.validate();

  coxq::Trainer trainer(cfg);
  const int rc = trainer.run();
  if (rc == 3) {
    std::fprintf(stderr, "training diverged at step %lld; checkpoint written\n",
                 static_cast<long long>(trainer.global_step()));
    return 3;
  }
  const coxq::EvalSummary final = trainer.evaluate(cfg.eval_episodes, cfg.seed + 0xf1a1);
  std::printf("done: steps=%lld eval_return=%.4f eval_cost=%.4f violation_rate=%.3f\n",
              static_cast<long long>(trainer.global_step()), final.mean_return, final.mean_cost,
              final.violation_rate);
  return 0;
}

int cmd_eval(const std::string& checkpoint, int episodes, std::uint64_t seed) {
  coxq::EvalSummary s = coxq::evaluate_checkpoint(checkpoint, episodes, seed);
  std::printf("episodes=%d mean_return=%.6f median_return=%.6f mean_cost=%.6f "
              "violation_rate=%.4f\n",
              s.episodes, s.mean_return, s.median_return, s.mean_cost, s.violation_rate);
  for (std::size_t i = 0; i < s.episode_returns.size(); ++i)
    std::printf("episode %zu: return=%.6f cost=%.6f\n", i, s.episode_returns[i],
                s.episode_costs[i]);
  return 0;
}

int cmd_verify(const std::string& suite, int cases, std::uint64_t seed, double tol) {
  coxq::VerifyReport rep = coxq::run_verify(suite, cases, seed, tol);
  std::printf("%s: %d cases, %d failures, max deviation %.3e -> %s\n", rep.suite.c_str(),
              rep.cases, rep.failures, rep.max_deviation, rep.passed() ? "PASS" : "FAIL");
  for (const std::string& dump : rep.failure_dumps)
    std::fprintf(stderr, "  %s\n", dump.c_str());
  return rep.passed() ? 0 : 2;
}

int cmd_plot(const std::string& metrics_path, const std::string& out_dir, double cost_limit) {
  const std::vector<coxq::MetricsRecord> records = coxq::read_metrics(metrics_path);
  for (const std::string& f : coxq::emit_plots(records, out_dir, cost_limit))
    std::printf("wrote %s\n", f.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"COX-Q safe reinforcement learning on desk-scale constrained MDPs"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint, metrics_path, suite;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  int episodes = 20, cases = 200;
  double tol = 1e-6, cost_limit = 5.0;
  bool no_cox = false;

  auto* train = app.add_subcommand("train", "Run the training loop");
  train->add_option("--config", config_path, "Sectioned key=value config file");
  auto* seed_opt = train->add_option("--seed", seed, "Run seed (overrides the config)");
  train->add_option("--out", out_dir, "Output directory (overrides the config)");
  train->add_flag("--no-cox", no_cox, "Disable cost-constrained exploration (ORAC-style optimistic shift)");
  train->add_option("--set", overrides, "Extra section.key=value overrides")->take_all();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint deterministically");
  eval->add_option("--checkpoint", checkpoint, "Trainer checkpoint file")->required();
  eval->add_option("--episodes", episodes, "Number of evaluation episodes");
  eval->add_option("--seed", seed, "Evaluation seed");

  auto* verify = app.add_subcommand("verify", "Run an oracle-equivalence suite");
  verify->add_option("--suite", suite, "Lemma1|Lemma2|Bounds|Gradients|Quantiles")->required();
  verify->add_option("--cases", cases, "Number of randomized cases");
  verify->add_option("--seed", seed, "Case-generation seed");
  verify->add_option("--tol", tol, "Deviation tolerance");

  auto* plot = app.add_subcommand("plot", "Render SVG charts from a metrics stream");
  plot->add_option("--metrics", metrics_path, "metrics.jsonl file")->required();
  plot->add_option("--out", out_dir, "Chart output directory")->required();
  plot->add_option("--cost-limit", cost_limit, "Episode cost limit reference line");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand(train))
      return cmd_train(config_path, seed_opt->count() > 0, seed, out_dir, no_cox, overrides);
    if (app.got_subcommand(eval)) return cmd_eval(checkpoint, episodes, seed);
    if (app.got_subcommand(verify)) return cmd_verify(suite, cases, seed, tol);
    if (app.got_subcommand(plot)) return cmd_plot(metrics_path, out_dir, cost_limit);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
