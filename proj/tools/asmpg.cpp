#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "asmpg/config.hpp"
#include "asmpg/constants.hpp"
#include "asmpg/envs.hpp"
#include "asmpg/errors.hpp"
#include "asmpg/policy.hpp"
#include "asmpg/trainer.hpp"
#include "asmpg/verify.hpp"

#ifndef ASMPG_COMMIT
#define ASMPG_COMMIT "unknown"
#endif

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitBudget = 4;

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

nlohmann::json eval_to_json(const asmpg::EvalResult& r) {
  return {{"episodes", r.episodes},
          {"mean_return", r.mean_return},
          {"mean_reward_per_step", r.mean_reward_per_step},
          {"success_rate", r.success_rate},
          {"mean_steps", r.mean_steps},
          {"mean_steps_to_goal", number_or_null(r.mean_steps_to_goal)},
          {"env_steps", r.env_steps}};
}

struct TrainArgs {
  std::string config;
  std::string out_dir;
  std::uint64_t seed = 0;
  long total_steps = 0;
};

int cmd_train(const TrainArgs& a, int workers) {
  auto config = asmpg::load_config(a.config);
  if (a.seed != 0) config.seed = a.seed;
  if (a.total_steps > 0) config.total_env_steps = a.total_steps;
  if (workers > 0) config.workers = workers;
  config.validate();
  std::string out = a.out_dir;
  if (out.empty()) {
    const char* env_out = std::getenv("ASMPG_OUT");
    out = env_out != nullptr ? env_out : "runs";
    out += "/" + config.env + "_" + std::to_string(config.seed);
  }
  const auto result = asmpg::train(config, out, {}, ASMPG_COMMIT);
  nlohmann::json summary = {{"out_dir", out},
                            {"env_steps", result.env_steps},
                            {"iterations", result.iterations},
                            {"bound_violations", result.bound_violations},
                            {"clipped_updates", result.clipped_updates},
                            {"best_eval_score", result.best_eval_score}};
  std::cout << summary.dump(2) << "\n";
  return kExitOk;
}

struct InitArgs {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
};

int cmd_init(const InitArgs& a) {
  auto config = asmpg::load_config(a.config);
  if (a.seed != 0) config.seed = a.seed;
  const auto env = asmpg::make_env(config.env, config.seed, config.env_params);
  const auto policy = asmpg::make_policy_for_env(env->info(), config);
  asmpg::save_checkpoint(a.out, *policy);
  std::cout << policy->layout().to_json().dump(2) << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string env;
  std::string env_params = "{}";
  int episodes = 100;
  std::uint64_t seed = 0;
  std::string csv;
};

int cmd_eval(const EvalArgs& a, int workers) {
  if (a.episodes < 1) throw asmpg::ConfigError("--episodes must be >= 1");
  nlohmann::json params;
  try {
    params = nlohmann::json::parse(a.env_params);
  } catch (const nlohmann::json::exception& e) {
    throw asmpg::ConfigError(std::string("--env-params is not valid JSON: ") + e.what());
  }
  const auto policy = asmpg::load_checkpoint(a.checkpoint);
  const auto env = asmpg::make_env(a.env, a.seed, params);
  const auto& info = env->info();
  const auto& layout = policy->layout();
  const bool discrete = info.n_obs > 0;
  if (layout.alphabet.n_actions != info.n_actions ||
      (discrete && (layout.feature_dim != 0 || layout.alphabet.n_obs != info.n_obs)) ||
      (!discrete && layout.feature_dim != info.feature_dim)) {
    throw asmpg::ConfigError("checkpoint alphabet does not match env '" + a.env + "'");
  }
  const auto r = asmpg::evaluate(*policy, *env, a.episodes, a.seed, info.max_steps, workers > 0 ? workers : 1);
  std::cout << eval_to_json(r).dump(2) << "\n";
  if (!a.csv.empty()) {
    std::ofstream out(a.csv);
    if (!out) throw asmpg::ConfigError("cannot write " + a.csv);
    out << "episodes,mean_return,mean_reward_per_step,success_rate,mean_steps,mean_steps_to_goal\n";
    out.precision(17);
    out << r.episodes << ',' << r.mean_return << ',' << r.mean_reward_per_step << ',' << r.success_rate << ','
        << r.mean_steps << ',';
    if (std::isfinite(r.mean_steps_to_goal)) out << r.mean_steps_to_goal;
    out << "\n";
  }
  return kExitOk;
}

struct VerifyArgs {
  std::string suite = "all";
  double budget = 2e7;
  int probes = 20;
  std::string out;
};

int cmd_verify(const VerifyArgs& a, int workers) {
  asmpg::VerifyOptions opts;
  opts.budget = a.budget;
  opts.probes = a.probes;
  opts.workers = workers > 0 ? workers : 1;
  const auto report = asmpg::run_verify(a.suite, opts);
  const auto j = report.to_json();
  std::cout << j.dump(2) << "\n";
  if (!a.out.empty()) std::ofstream(a.out) << j.dump(2) << "\n";
  return report.pass() ? kExitOk : kExitFailed;
}

struct ConstantsArgs {
  double r_max = 1.0;
  double G = std::sqrt(2.0);
  double M = 1.0;
  int horizon = 0;
  double gamma = std::numeric_limits<double>::quiet_NaN();
  double delta1 = 0.0;
  long K = 1000;
  double delta = 0.1;
};

int cmd_constants(const ConstantsArgs& a, bool have_h, bool have_gamma) {
  if (have_h == have_gamma) throw asmpg::ConfigError("give exactly one of --H and --gamma");
  const auto c = have_h ? asmpg::episodic_constants(a.r_max, a.G, a.M, a.horizon)
                        : asmpg::discounted_constants(a.r_max, a.G, a.M, a.gamma);
  asmpg::ScheduleParams p;
  p.delta1 = a.delta1;
  p.budget_k = a.K;
  p.delta = a.delta;
  p.kind = asmpg::Schedule::kConstant;
  p.validate();
  auto j = c.to_json();
  j["delta1"] = a.delta1 > 0.0 ? a.delta1 : asmpg::default_delta1(c);
  j["K"] = a.K;
  j["delta"] = a.delta;
  j["constant_stepsize"] = asmpg::stepsize(p, 1, c);
  j["constant_rate_bound"] = asmpg::rate_bound(p, c);
  p.kind = asmpg::Schedule::kSqrtDecay;
  j["sqrt_decay_rate_bound"] = asmpg::rate_bound(p, c);
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ASM policies and policy-gradient training for non-Markovian decision processes"};
  app.require_subcommand(1);
  int workers = 0;
  app.add_option("--workers", workers, "OpenMP threads for rollouts and enumeration (0 = config/default)")
      ->check(CLI::NonNegativeNumber);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train an ASM policy from a JSON config");
  train->add_option("config", train_args.config, "Config file")->required();
  train->add_option("--seed", train_args.seed, "Override the config seed");
  train->add_option("--out-dir", train_args.out_dir, "Output directory (default $ASMPG_OUT/<env>_<seed>)");
  train->add_option("--total-steps", train_args.total_steps, "Override total_env_steps");

  InitArgs init_args;
  auto* init = app.add_subcommand("init", "Write the initial policy checkpoint for a config");
  init->add_option("config", init_args.config, "Config file")->required();
  init->add_option("--out", init_args.out, "Checkpoint path")->required();
  init->add_option("--seed", init_args.seed, "Override the config seed");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("checkpoint", eval_args.checkpoint, "Checkpoint file")->required();
  eval->add_option("env", eval_args.env, "Environment name")->required();
  eval->add_option("--env-params", eval_args.env_params, "Environment parameters as JSON");
  eval->add_option("--episodes", eval_args.episodes, "Evaluation episodes");
  eval->add_option("--seed", eval_args.seed, "Evaluation seed");
  eval->add_option("--csv", eval_args.csv, "Also write the metrics as CSV");

  VerifyArgs verify_args;
  auto* verify = app.add_subcommand("verify", "Run the exact-enumeration oracle checks");
  verify->add_option("--suite", verify_args.suite, "Suite to run")->check(CLI::IsMember(asmpg::verify_suites()));
  verify->add_option("--budget", verify_args.budget, "Node budget per enumeration");
  verify->add_option("--probes", verify_args.probes, "Random parameter probes per gradient suite");
  verify->add_option("--out", verify_args.out, "Also write the JSON report here");

  ConstantsArgs const_args;
  auto* constants = app.add_subcommand("constants", "Print smoothness constants and stepsizes");
  constants->add_option("--rmax", const_args.r_max, "Reward bound");
  constants->add_option("--G", const_args.G, "Score norm bound");
  constants->add_option("--M", const_args.M, "Hessian norm bound");
  auto* opt_h = constants->add_option("--H", const_args.horizon, "Episode horizon (episodic mode)");
  auto* opt_gamma = constants->add_option("--gamma", const_args.gamma, "Discount factor (discounted mode)");
  constants->add_option("--delta1", const_args.delta1, "Initial suboptimality estimate (default from r_max)");
  constants->add_option("--K", const_args.K, "Iteration budget");
  constants->add_option("--delta", const_args.delta, "Failure probability");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return cmd_train(train_args, workers);
    if (*init) return cmd_init(init_args);
    if (*eval) return cmd_eval(eval_args, workers);
    if (*verify) return cmd_verify(verify_args, workers);
    if (*constants) return cmd_constants(const_args, opt_h->count() > 0, opt_gamma->count() > 0);
  } catch (const asmpg::BudgetError& e) {
    std::cerr << "budget exceeded: " << e.what() << "\n";
    return kExitBudget;
  } catch (const asmpg::NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const asmpg::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailed;
  }
  return kExitFailed;
}
