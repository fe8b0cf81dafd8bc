#include "asmpg/core.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include <json.hpp>

namespace asmpg {

using nlohmann::json;

void Alphabet::validate() const {
  if (n_obs < 1 || n_actions < 1 || n_agent_states < 1) {
    throw ConfigError("alphabet sizes must be >= 1 (obs=" + std::to_string(n_obs) +
                      ", actions=" + std::to_string(n_actions) +
                      ", agent_states=" + std::to_string(n_agent_states) + ")");
  }
}

Trajectory Trajectory::start(int feature_dim) {
  Trajectory traj;
  traj.agent_states.push_back(kDummyState);
  traj.actions.push_back(kDummyAction);
  traj.feature_dim = feature_dim;
  return traj;
}

ReturnSpec ReturnSpec::episodic(int horizon) {
  ReturnSpec spec;
  spec.mode = ReturnMode::kEpisodic;
  spec.horizon = horizon;
  spec.validate();
  return spec;
}

ReturnSpec ReturnSpec::discounted(double gamma, int truncation) {
  ReturnSpec spec;
  spec.mode = ReturnMode::kDiscounted;
  spec.gamma = gamma;
  spec.truncation = truncation;
  spec.validate();
  return spec;
}

void ReturnSpec::validate() const {
  if (mode == ReturnMode::kEpisodic) {
    if (horizon < 1) throw ConfigError("episodic horizon must be >= 1");
  } else {
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
    if (truncation < 1) throw ConfigError("truncation must be >= 1");
  }
}

double partial_return(const Trajectory& traj, std::size_t t1, std::size_t t2) {
  if (t1 < 1 || t2 > traj.length()) {
    throw BoundsError("partial_return: indices [" + std::to_string(t1) + ", " +
                      std::to_string(t2) + "] outside 1.." + std::to_string(traj.length()));
  }
  double sum = 0.0;
  for (std::size_t t = t1; t <= t2; ++t) sum += traj.rewards[t - 1];
  return sum;
}

double discounted_return(const Trajectory& traj, std::size_t t1, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  if (t1 < 1 || t1 > traj.length() + 1) {
    throw BoundsError("discounted_return: t1=" + std::to_string(t1) + " outside 1.." +
                      std::to_string(traj.length()));
  }
  // Horner from the back keeps the recursion R_t = r_t + gamma R_{t+1} exact.
  double acc = 0.0;
  for (std::size_t t = traj.length(); t >= t1; --t) acc = traj.rewards[t - 1] + gamma * acc;
  return acc;
}

double episode_return(const Trajectory& traj, const ReturnSpec& spec) {
  if (traj.length() == 0) return 0.0;
  if (spec.mode == ReturnMode::kEpisodic) return partial_return(traj, 1, traj.length());
  return discounted_return(traj, 1, spec.gamma);
}

TrajectoryCheck validate_trajectory(const Trajectory& traj, const Alphabet& alphabet) {
  const std::size_t T = traj.rewards.size();
  if (traj.obs.size() != T || traj.agent_states.size() != T + 1 || traj.actions.size() != T + 1) {
    return {false, "length mismatch: obs=" + std::to_string(traj.obs.size()) +
                       " agent_states=" + std::to_string(traj.agent_states.size()) +
                       " actions=" + std::to_string(traj.actions.size()) +
                       " rewards=" + std::to_string(T)};
  }
  if (traj.feature_dim < 0 ||
      traj.obs_features.size() != static_cast<std::size_t>(traj.feature_dim) * T) {
    return {false, "length mismatch: obs_features"};
  }
  for (std::size_t i = 0; i < T; ++i) {
    if (traj.obs[i] < 0 || traj.obs[i] >= alphabet.n_obs) {
      return {false, "alphabet bound: obs[" + std::to_string(i) + "]=" + std::to_string(traj.obs[i])};
    }
  }
  for (std::size_t i = 0; i <= T; ++i) {
    if (traj.agent_states[i] < 0 || traj.agent_states[i] >= alphabet.n_agent_states) {
      return {false, "alphabet bound: agent_states[" + std::to_string(i) +
                         "]=" + std::to_string(traj.agent_states[i])};
    }
    if (traj.actions[i] < 0 || traj.actions[i] >= alphabet.n_actions) {
      return {false, "alphabet bound: actions[" + std::to_string(i) +
                         "]=" + std::to_string(traj.actions[i])};
    }
  }
  for (std::size_t i = 0; i < T; ++i) {
    if (!std::isfinite(traj.rewards[i])) {
      return {false, "non-finite reward at t=" + std::to_string(i + 1)};
    }
  }
  return {};
}

std::string trajectory_to_json_line(const Trajectory& traj) {
  json j;
  j["obs"] = traj.obs;
  j["agent_states"] = traj.agent_states;
  j["actions"] = traj.actions;
  j["rewards"] = traj.rewards;
  j["terminated"] = traj.terminated;
  if (traj.feature_dim > 0) {
    j["feature_dim"] = traj.feature_dim;
    j["obs_features"] = traj.obs_features;
  }
  return j.dump();
}

Trajectory trajectory_from_json_line(const std::string& line) {
  Trajectory traj;
  try {
    const json j = json::parse(line);
    j.at("obs").get_to(traj.obs);
    j.at("agent_states").get_to(traj.agent_states);
    j.at("actions").get_to(traj.actions);
    j.at("rewards").get_to(traj.rewards);
    j.at("terminated").get_to(traj.terminated);
    if (j.contains("feature_dim")) {
      j.at("feature_dim").get_to(traj.feature_dim);
      j.at("obs_features").get_to(traj.obs_features);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed trajectory record: ") + e.what());
  }
  return traj;
}

void write_ndjson(std::ostream& out, std::span<const Trajectory> trajs) {
  for (const auto& traj : trajs) out << trajectory_to_json_line(traj) << '\n';
}

std::vector<Trajectory> read_ndjson(std::istream& in) {
  std::vector<Trajectory> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(trajectory_from_json_line(line));
  }
  return out;
}

}  // namespace asmpg
