#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "asmpg/core.hpp"
#include "asmpg/rng.hpp"

namespace asmpg {

/// History-indexed NMDP small enough to enumerate. Histories are passed as
/// o_{1:t} and a_{1:t} (no dummy action).
struct EnumerableNmdp {
  using TransitionFn =
      std::function<void(std::span<const int> obs, std::span<const int> actions, std::span<double> out)>;
  using RewardFn = std::function<double(std::span<const int> obs, std::span<const int> actions)>;

  std::string name;
  int n_obs = 1;
  int n_actions = 1;
  /// Nominal episode horizon H; kernels are defined for any t.
  int horizon = 1;
  std::vector<double> initial;
  TransitionFn transition;
  RewardFn reward;
  double r_max = 1.0;

  /// Transition row for the given history, checked against the simplex invariant.
  std::vector<double> next_obs_dist(std::span<const int> obs, std::span<const int> actions) const;
  void next_obs_dist(std::span<const int> obs, std::span<const int> actions, std::span<double> out) const;
  /// Reward for the given history, checked against r_max.
  double checked_reward(std::span<const int> obs, std::span<const int> actions) const;
  void validate_initial() const;
};

/// Witness that the process is not Markov in (O_t, A_t).
struct NonMarkovCertificate {
  bool found = false;
  double total_variation = 0.0;
  std::vector<int> obs_a, actions_a;
  std::vector<int> obs_b, actions_b;
};

/// Exhaustive scan of histories up to length H-1 for the largest total-variation
/// gap between next-observation rows that share (o_t, a_t).
NonMarkovCertificate non_markov_certificate(const EnumerableNmdp& nmdp, int horizon);

struct StepResult {
  int obs = 0;
  double reward = 0.0;
  bool terminated = false;
  bool truncated = false;
  bool done() const { return terminated || truncated; }
};

struct EnvInfo {
  std::string name;
  /// Size of the discrete observation alphabet; 0 when only real features exist.
  int n_obs = 0;
  int n_actions = 0;
  /// Dimension of the real observation vector; 0 for purely discrete envs.
  int feature_dim = 0;
  double r_max = 1.0;
  /// Step cap after which an episode is truncated.
  int max_steps = 200;
  /// Whether success (reaching a goal) is meaningful for this env.
  bool has_goal = false;
};

/// Sampling facade over an NMDP. The env never sees agent states.
class GenerativeEnv {
 public:
  virtual ~GenerativeEnv() = default;

  virtual const EnvInfo& info() const = 0;
  virtual int reset(Rng& rng) = 0;
  virtual StepResult step(Rng& rng, int action) = 0;
  /// Real-valued encoding of the current observation (empty for discrete envs).
  virtual std::span<const double> features() const { return {}; }
  virtual bool goal_reached() const { return false; }
  virtual std::unique_ptr<GenerativeEnv> clone() const = 0;
  /// Non-null when the env wraps an enumerable NMDP.
  virtual const EnumerableNmdp* enumerable() const { return nullptr; }

  // Convenience overloads that use the env's own seeded stream.
  int reset() { return reset(own_rng_); }
  StepResult step(int action) { return step(own_rng_, action); }
  void seed(std::uint64_t s) { own_rng_ = Rng(s); }

 protected:
  void begin_episode() {
    steps_ = 0;
    done_ = false;
  }
  /// Enforces the reset-before-step contract and the step cap.
  void pre_step(int action) const;
  StepResult finish_step(StepResult r);

  int steps_ = 0;
  bool done_ = true;

 private:
  Rng own_rng_{0};
};

}  // namespace asmpg
