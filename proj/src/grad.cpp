#include "asmpg/grad.hpp"

#include <algorithm>
#include <cmath>

#include "asmpg/linalg.hpp"
#include "asmpg/parallel.hpp"

namespace asmpg {

namespace {

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string(what) + ": non-finite gradient entry");
  }
}

void check_length(const ParametricAsm& policy, const Trajectory& traj, const ReturnSpec& spec) {
  const auto T = traj.length();
  if (T > static_cast<std::size_t>(spec.max_length())) {
    throw ShapeError("trajectory of length " + std::to_string(T) + " exceeds the return spec limit " +
                     std::to_string(spec.max_length()));
  }
  const int blocks = policy.layout().time_blocks;
  if (blocks > 1 && T > static_cast<std::size_t>(blocks)) {
    throw ShapeError("trajectory of length " + std::to_string(T) + " exceeds the policy's " +
                     std::to_string(blocks) + " time blocks");
  }
  if (traj.agent_states.size() != T + 1 || traj.actions.size() != T + 1 || traj.obs.size() != T) {
    throw ShapeError("trajectory arrays are inconsistent with its length");
  }
}

GradEstimate finish(std::vector<double> v, std::size_t n, double mean_return) {
  check_finite(v, "estimate");
  GradEstimate g;
  g.norm = l2_norm(v);
  g.vector = std::move(v);
  g.n_episodes = n;
  g.mean_return = mean_return;
  return g;
}

}  // namespace

std::vector<double> estimator_weights(const Trajectory& traj, const ReturnSpec& spec, EstimatorForm form) {
  const std::size_t T = traj.length();
  std::vector<double> w(T, 0.0);
  if (T == 0) return w;
  const bool discounted = spec.mode == ReturnMode::kDiscounted;
  if (discounted && !(spec.gamma > 0.0 && spec.gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  double suffix = 0.0;
  for (std::size_t t = T; t-- > 0;) {
    const double r = discounted ? std::pow(spec.gamma, static_cast<double>(t)) * traj.rewards[t] : traj.rewards[t];
    suffix += r;
    w[t] = suffix;
  }
  if (form == EstimatorForm::kFullReturn) std::fill(w.begin(), w.end(), w[0]);
  return w;
}

void accumulate_estimate(const ParametricAsm& policy, const Trajectory& traj, const ReturnSpec& spec, double scale,
                         std::span<double> grad, EstimatorForm form) {
  check_length(policy, traj, spec);
  if (grad.size() != policy.dim()) throw ShapeError("gradient buffer does not match the policy dimension");
  auto w = estimator_weights(traj, spec, form);
  if (scale != 1.0) {
    for (auto& x : w) x *= scale;
  }
  policy.add_episode_score(traj, w, grad);
}

GradEstimate trajectory_estimate(const ParametricAsm& policy, const Trajectory& traj, const ReturnSpec& spec,
                                 EstimatorForm form) {
  spec.validate();
  std::vector<double> v(policy.dim(), 0.0);
  accumulate_estimate(policy, traj, spec, 1.0, v, form);
  auto out = finish(std::move(v), 1, episode_return(traj, spec));
  out.episode_norms = {out.norm};
  return out;
}

GradEstimate episodic_estimate(const ParametricAsm& policy, const Trajectory& traj, int horizon) {
  return trajectory_estimate(policy, traj, ReturnSpec::episodic(horizon));
}

GradEstimate discounted_estimate(const ParametricAsm& policy, const Trajectory& traj, double gamma, int t_max) {
  return trajectory_estimate(policy, traj, ReturnSpec::discounted(gamma, t_max));
}

namespace {

GradEstimate reduce_batch(const ParametricAsm& policy, std::span<const Trajectory> trajs, const ReturnSpec& spec,
                          int workers, bool parallel) {
  if (trajs.empty()) throw ConfigError("batch_estimate needs at least one trajectory");
  spec.validate();
  const std::size_t n = trajs.size();
  const std::size_t d = policy.dim();
  std::vector<std::vector<double>> per(n);
  std::vector<double> returns(n), norms(n);
  auto one = [&](std::size_t i) {
    per[i].assign(d, 0.0);
    accumulate_estimate(policy, trajs[i], spec, 1.0, per[i]);
    returns[i] = episode_return(trajs[i], spec);
    norms[i] = l2_norm(per[i]);
  };
  parallel_for(n, parallel ? workers : 1, one);
  std::vector<double> sum(d, 0.0);
  double ret = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) sum[j] += per[i][j];
    ret += returns[i];
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (auto& x : sum) x *= inv;
  auto out = finish(std::move(sum), n, ret * inv);
  out.episode_norms = std::move(norms);
  return out;
}

}  // namespace

GradEstimate batch_estimate(const ParametricAsm& policy, std::span<const Trajectory> trajs, const ReturnSpec& spec) {
  return reduce_batch(policy, trajs, spec, 1, false);
}

GradEstimate batch_estimate_parallel(const ParametricAsm& policy, std::span<const Trajectory> trajs,
                                     const ReturnSpec& spec, int workers) {
  return reduce_batch(policy, trajs, spec, workers, true);
}

std::vector<double> episode_estimate_norms(const ParametricAsm& policy, std::span<const Trajectory> trajs,
                                           const ReturnSpec& spec) {
  std::vector<double> norms;
  norms.reserve(trajs.size());
  std::vector<double> v(policy.dim());
  for (const auto& traj : trajs) {
    std::fill(v.begin(), v.end(), 0.0);
    accumulate_estimate(policy, traj, spec, 1.0, v);
    norms.push_back(l2_norm(v));
  }
  return norms;
}

namespace {

std::size_t total_steps(std::span<const Trajectory> trajs) {
  std::size_t n = 0;
  for (const auto& t : trajs) n += t.length();
  return n;
}

void check_lambda(double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("barrier coefficient must be >= 0");
}

}  // namespace

double log_barrier_value(const ParametricAsm& policy, std::span<const Trajectory> trajs, double lambda) {
  check_lambda(lambda);
  const std::size_t n = total_steps(trajs);
  if (lambda == 0.0 || n == 0) return 0.0;
  double total = 0.0;
  for (const auto& traj : trajs) {
    for (std::size_t t = 1; t <= traj.length(); ++t) {
      const auto tr = transition_at(traj, t);
      total += policy.barrier_value(tr.context(), tr.s);
    }
  }
  return lambda * total / static_cast<double>(n);
}

GradEstimate log_barrier_grad(const ParametricAsm& policy, std::span<const Trajectory> trajs, double lambda) {
  check_lambda(lambda);
  std::vector<double> v(policy.dim(), 0.0);
  const std::size_t n = total_steps(trajs);
  if (lambda > 0.0 && n > 0) {
    const double w = lambda / static_cast<double>(n);
    for (const auto& traj : trajs) policy.add_episode_barrier(traj, w, v);
  }
  return finish(std::move(v), trajs.size(), 0.0);
}

}  // namespace asmpg
