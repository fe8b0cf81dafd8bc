#include "asmpg/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>

#include "asmpg/envs.hpp"
#include "asmpg/grad.hpp"
#include "asmpg/linalg.hpp"
#include "asmpg/oracle.hpp"
#include "asmpg/parallel.hpp"

namespace asmpg {

namespace {

constexpr std::uint64_t kEvalSalt = 0x65766131ULL;
constexpr std::uint64_t kInitSalt = 0x696e6974ULL;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

void adam_update(AdamState& state, std::span<double> theta, std::span<const double> grad, const AdamParams& p) {
  if (state.m.size() != theta.size() || grad.size() != theta.size()) {
    throw ShapeError("Adam state, parameters and gradient must share one dimension");
  }
  for (double g : grad) {
    if (!std::isfinite(g)) throw NumericError("non-finite gradient passed to Adam");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(p.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(p.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    state.m[i] = p.beta1 * state.m[i] + (1.0 - p.beta1) * grad[i];
    state.v[i] = p.beta2 * state.v[i] + (1.0 - p.beta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    theta[i] += p.lr * m_hat / (std::sqrt(v_hat) + p.eps);
  }
}

void TrainConfig::validate() const {
  if (env.empty()) throw ConfigError("env: name is required");
  if (n_agent_states < 1) throw ConfigError("policy.n_agent_states must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (total_env_steps < 1) throw ConfigError("total_env_steps must be >= 1");
  if (max_iterations < 0) throw ConfigError("max_iterations must be >= 0");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (eval_episodes < 1) throw ConfigError("eval_episodes must be >= 1");
  if (!(barrier >= 0.0) || !std::isfinite(barrier)) throw ConfigError("barrier must be >= 0");
  if (workers < 0) throw ConfigError("workers must be >= 0");
  if (!(clip_factor > 0.0)) throw ConfigError("clip_factor must be positive");
  if (!(init_scale >= 0.0)) throw ConfigError("policy.init_scale must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  mode.validate();
  schedule.validate();
  if (schedule.delta1 < 0.0) throw ConfigError("optimizer.delta1 must be positive (or 0 for the default)");
  if (optimizer == OptimizerKind::kAdam) {
    if (!(adam.lr > 0.0)) throw ConfigError("optimizer.lr must be positive");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw ConfigError("optimizer.beta1 must lie in [0, 1)");
    if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw ConfigError("optimizer.beta2 must lie in [0, 1)");
    if (!(adam.eps > 0.0)) throw ConfigError("optimizer.eps must be positive");
  }
  if (policy.time_blocks < 1) throw ConfigError("policy.time_blocks must be >= 1");
  if (policy.time_blocks > 1 && policy.time_blocks < mode.max_length()) {
    throw ConfigError("policy.time_blocks must be 1 or at least the episode length " +
                      std::to_string(mode.max_length()));
  }
  if (policy.kind == PolicyKind::kMlp && policy.time_blocks != 1) {
    throw ConfigError("policy.time_blocks must be 1 for network policies");
  }
  if (policy.kind == PolicyKind::kMlp && policy.hidden < 1) throw ConfigError("policy.hidden must be >= 1");
}

std::string to_string(OptimizerKind kind, Schedule schedule) {
  return kind == OptimizerKind::kAdam ? "adam" : to_string(schedule);
}

bool MetricsRow::has_eval() const { return !std::isnan(eval_mean_return); }

std::string metrics_csv_header() {
  return "env_steps,iteration,mean_return,mean_reward_per_step,grad_norm,running_avg_sq_grad_norm,stepsize,"
         "eval_mean_return,eval_reward_per_step,eval_success_rate,eval_mean_steps,eval_mean_steps_to_goal,wall_ms";
}

namespace {

std::string fmt(double x) {
  if (std::isnan(x)) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

std::string metrics_csv_line(const MetricsRow& r) {
  std::string s = std::to_string(r.env_steps) + "," + std::to_string(r.iteration);
  for (double x : {r.mean_return, r.mean_reward_per_step, r.grad_norm, r.running_avg_sq_grad_norm, r.stepsize,
                   r.eval_mean_return, r.eval_reward_per_step, r.eval_success_rate, r.eval_mean_steps,
                   r.eval_mean_steps_to_goal}) {
    s += "," + fmt(x);
  }
  s += "," + std::to_string(r.wall_ms);
  return s;
}

std::unique_ptr<ParametricAsm> make_policy_for_env(const EnvInfo& info, const TrainConfig& config) {
  PolicyOptions options = config.policy;
  options.feature_dim = 0;
  if (info.n_obs == 0) {
    if (options.kind != PolicyKind::kMlp) {
      throw ConfigError(info.name + " has only real-valued observations; use the mlp parametrization");
    }
    options.feature_dim = info.feature_dim;
  }
  const Alphabet alphabet{std::max(info.n_obs, 1), info.n_actions, config.n_agent_states};
  auto policy = make_policy(alphabet, options);
  if (auto* mlp = dynamic_cast<MlpAsm*>(policy.get())) {
    Rng rng(derive_seed(config.seed, kInitSalt));
    mlp->initialize(rng);
  } else if (config.init_scale > 0.0) {
    Rng rng(derive_seed(config.seed, kInitSalt));
    for (auto& x : policy->mutable_params()) x = rng.uniform(-config.init_scale, config.init_scale);
  }
  return policy;
}

Trajectory rollout(const AsmKernel& policy, GenerativeEnv& env, Rng& rng, int max_length) {
  if (max_length < 1) throw ConfigError("rollout length must be >= 1");
  const int fd = env.info().feature_dim;
  Trajectory traj = Trajectory::start(fd);
  int o = env.reset(rng);
  for (int t = 1;; ++t) {
    traj.obs.push_back(o);
    if (fd > 0) {
      const auto f = env.features();
      traj.obs_features.insert(traj.obs_features.end(), f.begin(), f.end());
    }
    const StepContext ctx{traj.agent_states.back(), traj.actions.back(), {o, traj.features_at(t)}, t};
    const StepSample smp = policy.sample(rng, ctx);
    traj.agent_states.push_back(smp.s);
    traj.actions.push_back(smp.a);
    const StepResult res = env.step(rng, smp.a);
    traj.rewards.push_back(res.reward);
    if (res.done() || t >= max_length) {
      traj.terminated = res.terminated;
      break;
    }
    o = res.obs;
  }
  return traj;
}

EvalResult evaluate(const AsmKernel& policy, const GenerativeEnv& env, int n_episodes, std::uint64_t seed,
                    int max_length, int workers) {
  if (n_episodes < 1) throw ConfigError("evaluation needs at least one episode");
  const auto n = static_cast<std::size_t>(n_episodes);
  std::vector<double> returns(n);
  std::vector<long> lengths(n);
  std::vector<char> success(n);
  parallel_for(n, workers, [&](std::size_t i) {
    auto local = env.clone();
    Rng rng(derive_seed(seed, i));
    const auto traj = rollout(policy, *local, rng, max_length);
    double r = 0.0;
    for (double x : traj.rewards) r += x;
    returns[i] = r;
    lengths[i] = static_cast<long>(traj.length());
    success[i] = local->goal_reached() ? 1 : 0;
  });
  EvalResult out;
  out.episodes = n_episodes;
  double total_return = 0.0;
  long goal_steps = 0;
  int successes = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total_return += returns[i];
    out.env_steps += lengths[i];
    if (success[i]) {
      ++successes;
      goal_steps += lengths[i];
    }
  }
  out.mean_return = total_return / n_episodes;
  out.mean_reward_per_step = out.env_steps > 0 ? total_return / static_cast<double>(out.env_steps) : 0.0;
  out.success_rate = static_cast<double>(successes) / n_episodes;
  out.mean_steps = static_cast<double>(out.env_steps) / n_episodes;
  out.mean_steps_to_goal = successes > 0 ? static_cast<double>(goal_steps) / successes : kNaN;
  return out;
}

namespace {

std::optional<SmoothnessConstants> constants_for(const ParametricAsm& policy, const EnvInfo& info,
                                                 const ReturnSpec& spec) {
  const auto G = policy.score_bound();
  const auto M = policy.hessian_bound();
  if (!G || !M) return std::nullopt;
  if (spec.mode == ReturnMode::kEpisodic) return episodic_constants(info.r_max, *G, *M, spec.horizon);
  return discounted_constants(info.r_max, *G, *M, spec.gamma);
}

/// C/2 for a factorized tabular policy; the reference scale for clipping network estimates.
double tabular_reference_bound(const EnvInfo& info, const ReturnSpec& spec) {
  const auto c = spec.mode == ReturnMode::kEpisodic ? episodic_constants(info.r_max, 2.0, 1.0, spec.horizon)
                                                    : discounted_constants(info.r_max, 2.0, 1.0, spec.gamma);
  return estimator_norm_bound(c);
}

void check_exact_setup(const EnumerableNmdp* nmdp, const ReturnSpec& spec) {
  if (nmdp == nullptr) throw ConfigError("exact_metrics / exact_gradient need an enumerable env (tiny:<seed> or toggle_latch)");
  if (spec.max_length() != nmdp->horizon) {
    throw ConfigError("exact modes need the return spec length to equal the env horizon " +
                      std::to_string(nmdp->horizon));
  }
}

nlohmann::json eval_json(const MetricsRow& r) {
  nlohmann::json j;
  j["env_steps"] = r.env_steps;
  j["mean_return"] = r.eval_mean_return;
  j["reward_per_step"] = r.eval_reward_per_step;
  j["success_rate"] = r.eval_success_rate;
  j["mean_steps"] = r.eval_mean_steps;
  j["mean_steps_to_goal"] = std::isnan(r.eval_mean_steps_to_goal) ? nlohmann::json(nullptr)
                                                                   : nlohmann::json(r.eval_mean_steps_to_goal);
  return j;
}

}  // namespace

TrainResult train(const TrainConfig& config, const std::string& out_dir, const TrainHooks& hooks,
                  const std::string& commit) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  auto proto = make_env(config.env, config.seed, config.env_params);
  const EnvInfo info = proto->info();
  const ReturnSpec spec = config.mode;
  const int max_len = spec.max_length();

  TrainResult result;
  result.policy = make_policy_for_env(info, config);
  ParametricAsm& policy = *result.policy;
  const bool tabular = policy.kind() != PolicyKind::kMlp;
  const EnumerableNmdp* nmdp = proto->enumerable();
  const bool exact = config.exact_metrics || config.exact_gradient;
  if (exact) {
    check_exact_setup(nmdp, spec);
    if (!tabular) throw ConfigError("exact modes need a tabular policy");
  }
  result.constants = constants_for(policy, info, spec);
  if (config.optimizer == OptimizerKind::kSgd && config.schedule.kind != Schedule::kCustom && !result.constants) {
    throw ConfigError("the " + to_string(config.schedule.kind) +
                      " schedule needs known G and M; use a tabular policy or adam / sgd_custom");
  }
  const double clip_limit = config.clip_factor * tabular_reference_bound(info, spec);

  std::ofstream csv;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    csv.open(std::filesystem::path(out_dir) / "metrics.csv", std::ios::trunc);
    if (!csv) throw ConfigError("cannot write metrics.csv in " + out_dir);
    csv << metrics_csv_header() << "\n";
  }
  auto save = [&](const std::string& name) {
    if (!out_dir.empty()) save_checkpoint((std::filesystem::path(out_dir) / name).string(), policy);
  };

  AdamState adam(policy.dim());
  std::vector<double> last_good(policy.params().begin(), policy.params().end());
  EnumerationOptions exact_opts;
  exact_opts.workers = config.workers;
  long next_eval = config.eval_every;
  long next_ckpt = config.checkpoint_every;
  double sq_sum = 0.0;
  bool warned_clip = false;
  std::optional<MetricsRow> final_eval;

  while (result.env_steps < config.total_env_steps &&
         (config.max_iterations == 0 || result.iterations < config.max_iterations)) {
    const long k = ++result.iterations;
    std::vector<Trajectory> batch(config.batch_size);
    parallel_for(batch.size(), config.workers, [&](std::size_t i) {
      auto env = proto->clone();
      Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(k), i));
      batch[i] = rollout(policy, *env, rng, max_len);
    });
    long steps = 0;
    double reward_sum = 0.0;
    for (const auto& traj : batch) {
      steps += static_cast<long>(traj.length());
      for (double r : traj.rewards) reward_sum += r;
    }

    GradEstimate est = batch_estimate_parallel(policy, batch, spec, config.workers);
    if (tabular && result.constants) {
      const double bound = estimator_norm_bound(*result.constants);
      for (double n : est.episode_norms) {
        if (n > bound * (1.0 + 1e-9)) {
          ++result.bound_violations;
          std::cerr << "warning: estimate norm " << n << " exceeds C/2 = " << bound << " at iteration " << k << "\n";
        }
      }
    }
    std::vector<double> grad = est.vector;
    if (!tabular && est.norm > clip_limit) {
      ++result.clipped_updates;
      if (!warned_clip) {
        std::cerr << "warning: clipping network gradient estimate (norm " << est.norm << " > " << clip_limit << ")\n";
        warned_clip = true;
      }
      for (auto& g : grad) g *= clip_limit / est.norm;
    }
    double grad_norm = est.norm;
    double sq = est.norm * est.norm;
    if (exact) {
      const auto exact_grad = exact_gradient(*nmdp, policy, spec, exact_opts);
      grad_norm = l2_norm(exact_grad);
      sq = grad_norm * grad_norm;
      result.exact_sq_grad_norms.push_back(sq);
      if (config.exact_gradient) grad = exact_grad;
    }
    if (config.barrier > 0.0) {
      const auto bg = log_barrier_grad(policy, batch, config.barrier);
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += bg.vector[i];
    }
    sq_sum += sq;

    double alpha = config.adam.lr;
    auto theta = policy.mutable_params();
    try {
      if (config.optimizer == OptimizerKind::kAdam) {
        adam_update(adam, theta, grad, config.adam);
      } else {
        alpha = stepsize(config.schedule, k, result.constants ? *result.constants : SmoothnessConstants{});
        for (std::size_t i = 0; i < grad.size(); ++i) {
          if (!std::isfinite(grad[i])) throw NumericError("non-finite gradient entry");
          theta[i] += alpha * grad[i];
        }
      }
      for (double x : theta) {
        if (!std::isfinite(x)) throw NumericError("non-finite parameter after update");
      }
    } catch (const NumericError&) {
      policy.set_params(last_good);
      save("ckpt_last_good.bin");
      throw;
    }
    std::copy(theta.begin(), theta.end(), last_good.begin());
    result.env_steps += steps;

    MetricsRow row;
    row.env_steps = result.env_steps;
    row.iteration = k;
    row.mean_return = reward_sum / config.batch_size;
    row.mean_reward_per_step = steps > 0 ? reward_sum / static_cast<double>(steps) : 0.0;
    row.grad_norm = grad_norm;
    row.running_avg_sq_grad_norm = sq_sum / static_cast<double>(k);
    row.stepsize = alpha;
    row.eval_mean_return = row.eval_reward_per_step = row.eval_success_rate = kNaN;
    row.eval_mean_steps = row.eval_mean_steps_to_goal = kNaN;

    const bool last = result.env_steps >= config.total_env_steps ||
                      (config.max_iterations > 0 && result.iterations >= config.max_iterations);
    if (result.env_steps >= next_eval || last) {
      const auto ev = evaluate(policy, *proto, config.eval_episodes,
                               derive_seed(config.seed ^ kEvalSalt, static_cast<std::uint64_t>(result.env_steps)),
                               max_len, config.workers);
      while (next_eval <= result.env_steps) next_eval += config.eval_every;
      row.eval_mean_return = ev.mean_return;
      row.eval_reward_per_step = ev.mean_reward_per_step;
      row.eval_success_rate = ev.success_rate;
      row.eval_mean_steps = ev.mean_steps;
      row.eval_mean_steps_to_goal = ev.mean_steps_to_goal;
      if (result.best_eval_env_steps < 0 || ev.mean_return > result.best_eval_score) {
        result.best_eval_score = ev.mean_return;
        result.best_eval_env_steps = result.env_steps;
        save("ckpt_best.bin");
      }
      final_eval = row;
    }
    if (config.checkpoint_every > 0 && result.env_steps >= next_ckpt) {
      save("ckpt_" + std::to_string(result.env_steps) + ".bin");
      while (next_ckpt <= result.env_steps) next_ckpt += config.checkpoint_every;
    }
    row.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start)
                      .count();
    if (csv.is_open()) csv << metrics_csv_line(row) << "\n";
    result.rows.push_back(row);
    if (hooks.on_iteration) hooks.on_iteration(row, policy);
  }

  save("ckpt_" + std::to_string(result.env_steps) + ".bin");
  if (!out_dir.empty()) {
    nlohmann::json m;
    m["config"] = config.to_json();
    m["seed"] = config.seed;
    m["commit"] = commit;
    m["constants"] = result.constants ? result.constants->to_json() : nlohmann::json(nullptr);
    m["policy_layout"] = policy.layout().to_json();
    m["env_steps"] = result.env_steps;
    m["iterations"] = result.iterations;
    m["bound_violations"] = result.bound_violations;
    m["clipped_updates"] = result.clipped_updates;
    m["best_eval_score"] = result.best_eval_score;
    m["best_eval_env_steps"] = result.best_eval_env_steps;
    m["final_eval"] = final_eval ? eval_json(*final_eval) : nlohmann::json(nullptr);
    m["metrics_columns"] = metrics_csv_header();
    std::ofstream(std::filesystem::path(out_dir) / "manifest.json") << m.dump(2) << "\n";
  }
  return result;
}

}  // namespace asmpg
