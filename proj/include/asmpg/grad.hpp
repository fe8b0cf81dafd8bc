#pragma once

#include <span>
#include <vector>

#include "asmpg/core.hpp"
#include "asmpg/policy.hpp"

namespace asmpg {

struct GradEstimate {
  std::vector<double> vector;
  std::size_t n_episodes = 0;
  double mean_return = 0.0;
  /// Euclidean norm of vector.
  double norm = 0.0;
  /// Norms of the single-episode estimates behind a batch mean.
  std::vector<double> episode_norms;
};

/// Which return weights multiply the step-t score.
enum class EstimatorForm {
  /// R_{t:T} (episodic) or sum_{t' >= t} gamma^{t'-1} r_{t'} (discounted).
  kRewardToGo,
  /// The whole-episode return at every step; same expectation, higher variance.
  kFullReturn,
};

/// Per-step weights w_1..w_T of the estimator, by one backward pass.
std::vector<double> estimator_weights(const Trajectory& traj, const ReturnSpec& spec,
                                      EstimatorForm form = EstimatorForm::kRewardToGo);

/// grad += scale * sum_t w_t * score_t for one episode.
void accumulate_estimate(const ParametricAsm& policy, const Trajectory& traj, const ReturnSpec& spec, double scale,
                         std::span<double> grad, EstimatorForm form = EstimatorForm::kRewardToGo);

/// Single-episode estimate with reward-to-go weights R_{t:T}.
GradEstimate episodic_estimate(const ParametricAsm& policy, const Trajectory& traj, int horizon);

/// Single-episode estimate with weights sum_{t' >= t} gamma^{t'-1} r_{t'}.
GradEstimate discounted_estimate(const ParametricAsm& policy, const Trajectory& traj, double gamma, int t_max);

GradEstimate trajectory_estimate(const ParametricAsm& policy, const Trajectory& traj, const ReturnSpec& spec,
                                 EstimatorForm form = EstimatorForm::kRewardToGo);

/// Mean of the per-episode estimates, reduced in index order.
GradEstimate batch_estimate(const ParametricAsm& policy, std::span<const Trajectory> trajs, const ReturnSpec& spec);

/// Same result as batch_estimate, bit for bit; episodes are processed by up to
/// `workers` OpenMP threads (0 = runtime default).
GradEstimate batch_estimate_parallel(const ParametricAsm& policy, std::span<const Trajectory> trajs,
                                     const ReturnSpec& spec, int workers = 0);

/// Per-episode norms of the estimates, in index order.
std::vector<double> episode_estimate_norms(const ParametricAsm& policy, std::span<const Trajectory> trajs,
                                           const ReturnSpec& spec);

/// lambda / N * sum over visited steps of the per-context barrier value, N the
/// total number of steps.
double log_barrier_value(const ParametricAsm& policy, std::span<const Trajectory> trajs, double lambda);

/// Gradient of log_barrier_value.
GradEstimate log_barrier_grad(const ParametricAsm& policy, std::span<const Trajectory> trajs, double lambda);

}  // namespace asmpg
