#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "asmpg/errors.hpp"

namespace asmpg {

/// Index of the dummy (s0, a0) pair that starts the agent-state recursion.
inline constexpr int kDummyState = 0;
inline constexpr int kDummyAction = 0;

/// Finite observation, action and agent-state alphabets.
struct Alphabet {
  int n_obs = 1;
  int n_actions = 1;
  int n_agent_states = 1;

  void validate() const;
  bool operator==(const Alphabet&) const = default;
};

/// One episode. Index 0 of agent_states/actions holds the dummy pair; obs[t-1]
/// and rewards[t-1] hold O_t and r_t for t = 1..T.
struct Trajectory {
  std::vector<int> obs;
  std::vector<int> agent_states;
  std::vector<int> actions;
  std::vector<double> rewards;
  /// Row-major T x feature_dim real observations; empty for discrete envs.
  std::vector<double> obs_features;
  int feature_dim = 0;
  /// False when the episode was cut by truncation rather than ending.
  bool terminated = false;

  std::size_t length() const { return rewards.size(); }

  std::span<const double> features_at(std::size_t t) const {
    if (feature_dim == 0) return {};
    return std::span<const double>(obs_features).subspan((t - 1) * feature_dim, feature_dim);
  }

  /// Starts an empty trajectory holding only the dummy pair.
  static Trajectory start(int feature_dim = 0);
};

enum class ReturnMode { kEpisodic, kDiscounted };

struct ReturnSpec {
  ReturnMode mode = ReturnMode::kEpisodic;
  int horizon = 1;
  double gamma = 0.99;
  int truncation = 200;

  static ReturnSpec episodic(int horizon);
  static ReturnSpec discounted(double gamma, int truncation);

  void validate() const;
  /// H in episodic mode, T_max in discounted mode.
  int max_length() const { return mode == ReturnMode::kEpisodic ? horizon : truncation; }
};

/// R_{t1:t2}: sum of r_t for t1 <= t <= t2 (1-based); zero when t1 > t2.
double partial_return(const Trajectory& traj, std::size_t t1, std::size_t t2);

/// R^gamma_{t1:T} over the recorded trajectory; t1 = T+1 gives the empty sum.
double discounted_return(const Trajectory& traj, std::size_t t1, double gamma);

/// Full return of the episode under the given spec (sum, or gamma^{t-1}-weighted sum).
double episode_return(const Trajectory& traj, const ReturnSpec& spec);

struct TrajectoryCheck {
  bool ok = true;
  std::string violation;
};

/// Checks the length and alphabet invariants; reports the first violation.
TrajectoryCheck validate_trajectory(const Trajectory& traj, const Alphabet& alphabet);

// Newline-delimited JSON, one trajectory per line.
std::string trajectory_to_json_line(const Trajectory& traj);
Trajectory trajectory_from_json_line(const std::string& line);
void write_ndjson(std::ostream& out, std::span<const Trajectory> trajs);
std::vector<Trajectory> read_ndjson(std::istream& in);

}  // namespace asmpg
