#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "asmpg/constants.hpp"
#include "asmpg/core.hpp"
#include "asmpg/nmdp.hpp"
#include "asmpg/policy.hpp"

namespace asmpg {

enum class OptimizerKind { kSgd, kAdam };

struct AdamParams {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;

  AdamState() = default;
  explicit AdamState(std::size_t dim) : m(dim, 0.0), v(dim, 0.0) {}
};

/// One bias-corrected Adam ascent step: theta += lr * m_hat / (sqrt(v_hat) + eps).
void adam_update(AdamState& state, std::span<double> theta, std::span<const double> grad, const AdamParams& p);

struct TrainConfig {
  std::string env = "cheese_maze";
  nlohmann::json env_params = nlohmann::json::object();
  PolicyOptions policy;
  int n_agent_states = 8;
  /// Uniform(-init_scale, init_scale) start for tabular parameters (0 = all zeros).
  double init_scale = 0.0;
  ReturnSpec mode = ReturnSpec::discounted(0.99, 200);
  OptimizerKind optimizer = OptimizerKind::kAdam;
  AdamParams adam;
  ScheduleParams schedule;
  int batch_size = 10;
  double barrier = 0.01;
  long total_env_steps = 1'000'000;
  /// Stop after this many updates as well (0 = no limit).
  long max_iterations = 0;
  long eval_every = 10'000;
  int eval_episodes = 100;
  std::uint64_t seed = 1952;
  int workers = 1;
  /// Network policies: estimates are clipped to clip_factor times the tabular bound.
  double clip_factor = 10.0;
  /// Enumerable envs only: record the exact gradient norm every iteration.
  bool exact_metrics = false;
  /// Enumerable envs only: ascend the exact gradient instead of the estimate.
  bool exact_gradient = false;
  /// Also write ckpt_{env_steps}.bin every this many env steps (0 = final only).
  long checkpoint_every = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

std::string to_string(OptimizerKind kind, Schedule schedule);

struct EvalResult {
  int episodes = 0;
  double mean_return = 0.0;
  double mean_reward_per_step = 0.0;
  double success_rate = 0.0;
  /// Mean episode length over all episodes.
  double mean_steps = 0.0;
  /// Mean episode length over successful episodes (NaN when none succeeded).
  double mean_steps_to_goal = 0.0;
  long env_steps = 0;
};

/// One training iteration; eval fields are NaN on rows without an evaluation.
struct MetricsRow {
  long env_steps = 0;
  long iteration = 0;
  double mean_return = 0.0;
  double mean_reward_per_step = 0.0;
  double grad_norm = 0.0;
  double running_avg_sq_grad_norm = 0.0;
  double stepsize = 0.0;
  double eval_mean_return = 0.0;
  double eval_reward_per_step = 0.0;
  double eval_success_rate = 0.0;
  double eval_mean_steps = 0.0;
  double eval_mean_steps_to_goal = 0.0;
  long wall_ms = 0;

  bool has_eval() const;
};

/// Fixed CSV column order; wall_ms is always last.
std::string metrics_csv_header();
std::string metrics_csv_line(const MetricsRow& row);

/// Policy with an alphabet and observation encoding that fit the env.
std::unique_ptr<ParametricAsm> make_policy_for_env(const EnvInfo& info, const TrainConfig& config);

/// Samples one episode, stopping at termination, the env cap or max_length.
Trajectory rollout(const AsmKernel& policy, GenerativeEnv& env, Rng& rng, int max_length);

/// Frozen-parameter stochastic rollouts; episode i uses derive_seed(seed, i).
EvalResult evaluate(const AsmKernel& policy, const GenerativeEnv& env, int n_episodes, std::uint64_t seed,
                    int max_length, int workers = 1);

struct TrainResult {
  std::unique_ptr<ParametricAsm> policy;
  std::vector<MetricsRow> rows;
  std::optional<SmoothnessConstants> constants;
  long env_steps = 0;
  long iterations = 0;
  /// Single-episode estimates whose norm exceeded C/2 (tabular policies).
  long bound_violations = 0;
  /// Network-policy updates whose estimate was clipped.
  long clipped_updates = 0;
  double best_eval_score = 0.0;
  long best_eval_env_steps = -1;
  /// ||grad J(theta_k)||^2 per iteration when exact_metrics is on.
  std::vector<double> exact_sq_grad_norms;
};

struct TrainHooks {
  /// Called after every update with the new parameters.
  std::function<void(const MetricsRow&, const ParametricAsm&)> on_iteration;
};

/// Runs the training loop. When out_dir is nonempty, writes metrics.csv,
/// manifest.json and checkpoints there.
TrainResult train(const TrainConfig& config, const std::string& out_dir = "", const TrainHooks& hooks = {},
                  const std::string& commit = "unknown");

}  // namespace asmpg
