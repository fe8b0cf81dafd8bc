#include "asmpg/envs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <set>

namespace asmpg {

namespace {

void expect_keys(const nlohmann::json& params, const std::set<std::string>& allowed, const std::string& env) {
  if (!params.is_object()) throw ConfigError(env + ": env params must be an object");
  for (const auto& [key, _] : params.items()) {
    if (!allowed.count(key)) throw ConfigError(env + ": unknown env param '" + key + "'");
  }
}

template <typename T>
T param_or(const nlohmann::json& params, const char* key, T fallback) {
  if (!params.contains(key)) return fallback;
  try {
    return params.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("env param '") + key + "' has the wrong type");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// CheeseMaze

CheeseMazeEnv::CheeseMazeEnv(int max_steps) {
  info_ = {"cheese_maze", 7, 4, 0, 1.0, max_steps, true};
}

int CheeseMazeEnv::move(int cell, int action) {
  // Rows: top corridor 0..4, middle 5 6 7, bottom 8 10 9.
  static constexpr int kMoves[kNumCells][4] = {
      // N   S   E   W
      {0, 5, 1, 0},    // 0
      {1, 1, 2, 0},    // 1
      {2, 6, 3, 1},    // 2
      {3, 3, 4, 2},    // 3
      {4, 7, 4, 3},    // 4
      {0, 8, 5, 5},    // 5
      {2, 10, 6, 6},   // 6
      {4, 9, 7, 7},    // 7
      {5, 8, 8, 8},    // 8
      {7, 9, 9, 9},    // 9
      {6, 10, 10, 10}  // 10
  };
  return kMoves[cell][action];
}

int CheeseMazeEnv::reset(Rng& rng) {
  begin_episode();
  position_ = rng.uniform_int(kGoal);
  return kObservation[position_];
}

StepResult CheeseMazeEnv::step(Rng&, int action) {
  pre_step(action);
  position_ = move(position_, action);
  StepResult r;
  r.obs = kObservation[position_];
  if (position_ == kGoal) {
    r.reward = 1.0;
    r.terminated = true;
  }
  return finish_step(r);
}

// ---------------------------------------------------------------------------
// Hallway

HallwayEnv::HallwayEnv(int max_steps) {
  info_ = {"hallway", 16, 4, 0, 5.0, max_steps, true};
}

bool HallwayEnv::free_cell(int x, int y) {
  if (x < 0 || x >= kWidth || y < 0 || y >= kHeight) return false;
  const bool middle_rows = (y == 1 || y == 2);
  const bool left_block = (x == 1 || x == 2);
  const bool right_block = (x == 4 || x == 5);
  return !(middle_rows && (left_block || right_block));
}

int HallwayEnv::observe(int x, int y) {
  int bits = 0;
  if (!free_cell(x, y + 1)) bits |= 8;
  if (!free_cell(x + 1, y)) bits |= 4;
  if (!free_cell(x, y - 1)) bits |= 2;
  if (!free_cell(x - 1, y)) bits |= 1;
  return bits;
}

std::array<std::pair<int, int>, 4> HallwayEnv::corners() {
  return {{{0, kHeight - 1}, {kWidth - 1, kHeight - 1}, {0, 0}, {kWidth - 1, 0}}};
}

int HallwayEnv::reset(Rng& rng) {
  begin_episode();
  const auto start = corners()[rng.uniform_int(4)];
  x_ = start.first;
  y_ = start.second;
  return observe(x_, y_);
}

StepResult HallwayEnv::step(Rng&, int action) {
  pre_step(action);
  static constexpr int kDx[4] = {0, 1, 0, -1};
  static constexpr int kDy[4] = {1, 0, -1, 0};
  const int nx = x_ + kDx[action];
  const int ny = y_ + kDy[action];
  StepResult r;
  if (!free_cell(nx, ny)) {
    r.reward = kWallReward;
  } else {
    x_ = nx;
    y_ = ny;
    if (goal_reached()) {
      r.reward = kGoalReward;
      r.terminated = true;
    } else {
      r.reward = kStepReward;
    }
  }
  r.obs = observe(x_, y_);
  return finish_step(r);
}

// ---------------------------------------------------------------------------
// Healthcare

HealthcareEnv::HealthcareEnv(int max_steps, double noise_sd) : noise_sd_(noise_sd) {
  info_ = {"healthcare", kHealthBins, 3, 1, kTerminalReward, max_steps, true};
}

int HealthcareEnv::health_bin(double h) {
  const double u = (h - kFail) / (kRecover - kFail);
  const int bin = static_cast<int>(std::floor(u * kHealthBins));
  return std::clamp(bin, 0, kHealthBins - 1);
}

int HealthcareEnv::reset(Rng&) {
  begin_episode();
  health_ = 0.5;
  toxicity_ = 0.0;
  resistance_ = 0.0;
  recovered_ = false;
  return health_bin(health_);
}

StepResult HealthcareEnv::step(Rng& rng, int action) {
  pre_step(action);
  static constexpr double kEffect[3] = {0.0, 0.25, 0.6};
  static constexpr double kCost[3] = {0.0, 0.05, 0.2};
  static constexpr double kToxicityDose[3] = {0.0, 0.05, 0.25};
  static constexpr double kResistanceDose[3] = {0.0, 0.0, 0.1};

  const double noise = noise_sd_ > 0.0 ? rng.normal(0.0, noise_sd_) : 0.0;
  const double next_health =
      health_ + kEffect[action] * (1.0 - std::min(resistance_, 0.9)) - 0.3 * toxicity_ + noise;
  toxicity_ = 0.9 * toxicity_ + kToxicityDose[action];
  resistance_ = 0.95 * resistance_ + kResistanceDose[action];
  health_ = next_health;

  StepResult r;
  r.obs = health_bin(health_);
  if (health_ >= kRecover) {
    r.reward = kTerminalReward;
    r.terminated = true;
    recovered_ = true;
  } else if (health_ <= kFail) {
    r.reward = -kTerminalReward;
    r.terminated = true;
  } else {
    r.reward = health_ - kCost[action];
  }
  return finish_step(r);
}

// ---------------------------------------------------------------------------
// MachineRepair

MachineRepairEnv::MachineRepairEnv(int max_steps) {
  info_ = {"machine_repair", 2, 2, 0, 1.0, max_steps, false};
}

int MachineRepairEnv::reset(Rng&) {
  begin_episode();
  wear_ = 0.0;
  condition_ = kHealthy;
  return condition_;
}

StepResult MachineRepairEnv::step(Rng& rng, int action) {
  pre_step(action);
  StepResult r;
  if (action == kOperate) {
    r.reward = condition_ == kHealthy ? 1.0 : -1.0;
    wear_ += 0.1;
    if (condition_ == kHealthy) {
      const double p_degrade = std::min(0.05 + 0.15 * wear_, 0.9);
      if (rng.uniform() < p_degrade) condition_ = kDegraded;
    } else {
      const double p_stay = std::min(0.3 + 0.2 * wear_, 0.95);
      if (rng.uniform() >= p_stay) condition_ = kHealthy;
    }
  } else {
    r.reward = -1.0;
    const double p_fix = std::max(0.9 - 0.1 * wear_, 0.5);
    wear_ *= 0.5;
    if (rng.uniform() < p_fix) condition_ = kHealthy;
  }
  r.obs = condition_;
  return finish_step(r);
}

// ---------------------------------------------------------------------------
// VelocityOnlyCartPole

VelocityCartPoleEnv::VelocityCartPoleEnv(int max_steps) {
  info_ = {"velocity_cartpole", 0, 2, 2, 1.0, max_steps, false};
}

void VelocityCartPoleEnv::refresh_observation() { observed_ = {state_[1], state_[3]}; }

bool VelocityCartPoleEnv::out_of_bounds() const {
  return std::abs(state_[0]) > kPositionLimit || std::abs(state_[2]) > kAngleLimit;
}

int VelocityCartPoleEnv::reset(Rng& rng) {
  begin_episode();
  for (auto& v : state_) v = rng.uniform(-0.05, 0.05);
  refresh_observation();
  return 0;
}

StepResult VelocityCartPoleEnv::step(Rng&, int action) {
  pre_step(action);
  constexpr double total_mass = kCartMass + kPoleMass;
  constexpr double pole_mass_length = kPoleMass * kHalfLength;
  auto& [x, x_dot, theta, theta_dot] = state_;
  const double force = action == kRight ? kForce : -kForce;
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const double temp = (force + pole_mass_length * theta_dot * theta_dot * sin_t) / total_mass;
  const double theta_acc = (kGravity * sin_t - cos_t * temp) /
                           (kHalfLength * (4.0 / 3.0 - kPoleMass * cos_t * cos_t / total_mass));
  const double x_acc = temp - pole_mass_length * theta_acc * cos_t / total_mass;
  x += kTau * x_dot;
  x_dot += kTau * x_acc;
  theta += kTau * theta_dot;
  theta_dot += kTau * theta_acc;
  refresh_observation();

  StepResult r;
  r.reward = 1.0;
  r.terminated = out_of_bounds();
  return finish_step(r);
}

// ---------------------------------------------------------------------------
// Enumerable wrapper

EnumerableEnv::EnumerableEnv(std::shared_ptr<const EnumerableNmdp> nmdp) : nmdp_(std::move(nmdp)) {
  nmdp_->validate_initial();
  info_ = {nmdp_->name, nmdp_->n_obs, nmdp_->n_actions, 0, nmdp_->r_max, nmdp_->horizon, false};
}

int EnumerableEnv::reset(Rng& rng) {
  begin_episode();
  obs_.assign(1, rng.categorical(nmdp_->initial));
  actions_.clear();
  return obs_.back();
}

StepResult EnumerableEnv::step(Rng& rng, int action) {
  pre_step(action);
  actions_.push_back(action);
  StepResult r;
  r.reward = nmdp_->checked_reward(obs_, actions_);
  if (static_cast<int>(actions_.size()) >= nmdp_->horizon) {
    r.terminated = true;
    r.obs = obs_.back();
  } else {
    const auto row = nmdp_->next_obs_dist(obs_, actions_);
    obs_.push_back(rng.categorical(row));
    r.obs = obs_.back();
  }
  return finish_step(r);
}

// ---------------------------------------------------------------------------
// Fixtures

EnumerableNmdp tiny_nmdp(const TinyNmdpSpec& spec) {
  if (spec.n_obs < 1 || spec.n_obs > 4 || spec.n_actions < 1 || spec.n_actions > 4) {
    throw ConfigError("tiny_nmdp: n_obs and n_actions must lie in 1..4");
  }
  if (spec.horizon < 1 || spec.horizon > 5) throw ConfigError("tiny_nmdp: horizon must lie in 1..5");
  const double leaves = std::pow(static_cast<double>(spec.n_obs * spec.n_actions), spec.horizon);
  if (leaves > static_cast<double>(1 << 20)) {
    throw ConfigError("tiny_nmdp: (n_obs * n_actions)^H = " + std::to_string(leaves) +
                      " exceeds the enumeration budget");
  }

  const int O = spec.n_obs;
  const int A = spec.n_actions;
  std::uint64_t state = spec.seed ^ 0x7a1e5eedULL;
  auto uniform = [&state] { return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53; };

  auto initial = std::make_shared<std::vector<double>>(O);
  double total = 0.0;
  for (auto& v : *initial) total += (v = 0.5 + uniform());
  for (auto& v : *initial) v /= total;

  auto base = std::make_shared<std::vector<double>>(O * A * O);
  for (int o = 0; o < O; ++o) {
    for (int a = 0; a < A; ++a) {
      double row_total = 0.0;
      for (int n = 0; n < O; ++n) row_total += ((*base)[(o * A + a) * O + n] = 0.2 + uniform());
      for (int n = 0; n < O; ++n) (*base)[(o * A + a) * O + n] /= row_total;
    }
  }

  auto rewards = std::make_shared<std::vector<double>>(2 * O * A);
  for (auto& v : *rewards) v = 2.0 * uniform() - 1.0;

  EnumerableNmdp nmdp;
  nmdp.name = "tiny:" + std::to_string(spec.seed);
  nmdp.n_obs = O;
  nmdp.n_actions = A;
  nmdp.horizon = spec.horizon;
  nmdp.initial = *initial;
  nmdp.r_max = 1.0;
  nmdp.transition = [O, A, base](std::span<const int> obs, std::span<const int> actions, std::span<double> out) {
    const int memory = (obs.front() + actions.front()) % 2;
    const int o = obs.back();
    const int a = actions.back();
    const int target = (o + memory) % O;
    for (int n = 0; n < O; ++n) out[n] = 0.5 * (*base)[(o * A + a) * O + n] + (n == target ? 0.5 : 0.0);
  };
  nmdp.reward = [O, A, rewards](std::span<const int> obs, std::span<const int> actions) {
    const std::size_t t = actions.size();
    const int previous = t >= 2 ? actions[t - 2] : kDummyAction;
    const int parity = (actions.front() + previous) % 2;
    return (*rewards)[(parity * O + obs.back()) * A + actions.back()];
  };
  return nmdp;
}

EnumerableNmdp toggle_latch_pomdp(int horizon) {
  if (horizon < 1) throw ConfigError("toggle_latch_pomdp: horizon must be >= 1");
  EnumerableNmdp nmdp;
  nmdp.name = "toggle_latch";
  nmdp.n_obs = 2;
  nmdp.n_actions = 2;
  nmdp.horizon = horizon;
  nmdp.initial = {0.5, 0.5};
  nmdp.r_max = 1.0;
  nmdp.transition = [](std::span<const int>, std::span<const int>, std::span<double> out) {
    out[0] = 0.5;
    out[1] = 0.5;
  };
  nmdp.reward = [](std::span<const int> obs, std::span<const int> actions) {
    int latent = obs.front();
    for (std::size_t i = 0; i + 1 < actions.size(); ++i) latent ^= actions[i];
    return static_cast<double>(latent);
  };
  return nmdp;
}

// ---------------------------------------------------------------------------
// Factory and BFS oracle

std::unique_ptr<GenerativeEnv> make_env(const std::string& name, std::uint64_t seed, const nlohmann::json& params) {
  std::unique_ptr<GenerativeEnv> env;
  if (name == "cheese_maze") {
    expect_keys(params, {"max_steps"}, name);
    env = std::make_unique<CheeseMazeEnv>(param_or(params, "max_steps", 200));
  } else if (name == "hallway") {
    expect_keys(params, {"max_steps"}, name);
    env = std::make_unique<HallwayEnv>(param_or(params, "max_steps", 200));
  } else if (name == "healthcare") {
    expect_keys(params, {"max_steps", "noise_sd"}, name);
    env = std::make_unique<HealthcareEnv>(param_or(params, "max_steps", 200), param_or(params, "noise_sd", 0.05));
  } else if (name == "machine_repair") {
    expect_keys(params, {"max_steps"}, name);
    env = std::make_unique<MachineRepairEnv>(param_or(params, "max_steps", 200));
  } else if (name == "velocity_cartpole") {
    expect_keys(params, {"max_steps"}, name);
    env = std::make_unique<VelocityCartPoleEnv>(param_or(params, "max_steps", 200));
  } else if (name == "toggle_latch") {
    expect_keys(params, {"horizon"}, name);
    env = std::make_unique<EnumerableEnv>(
        std::make_shared<const EnumerableNmdp>(toggle_latch_pomdp(param_or(params, "horizon", 3))));
  } else if (name.rfind("tiny:", 0) == 0) {
    expect_keys(params, {"n_obs", "n_actions", "horizon"}, name);
    TinyNmdpSpec spec;
    try {
      spec.seed = std::stoull(name.substr(5));
    } catch (const std::exception&) {
      throw ConfigError("tiny env id must be an unsigned integer: '" + name + "'");
    }
    spec.n_obs = param_or(params, "n_obs", 2);
    spec.n_actions = param_or(params, "n_actions", 2);
    spec.horizon = param_or(params, "horizon", 3);
    env = std::make_unique<EnumerableEnv>(std::make_shared<const EnumerableNmdp>(tiny_nmdp(spec)));
  } else {
    throw ConfigError("unknown environment '" + name + "'");
  }
  if (env->info().max_steps < 1) throw ConfigError(name + ": max_steps must be >= 1");
  env->seed(seed);
  return env;
}

std::map<int, std::optional<int>> latent_optimal_steps(const std::string& name) {
  std::vector<int> cells;
  int goal = 0;
  std::function<int(int, int)> move;
  int n_actions = 4;
  if (name == "cheese_maze") {
    for (int c = 0; c < CheeseMazeEnv::kNumCells; ++c) cells.push_back(c);
    goal = CheeseMazeEnv::kGoal;
    move = [](int c, int a) { return CheeseMazeEnv::move(c, a); };
  } else if (name == "hallway") {
    for (int y = 0; y < HallwayEnv::kHeight; ++y) {
      for (int x = 0; x < HallwayEnv::kWidth; ++x) {
        if (HallwayEnv::free_cell(x, y)) cells.push_back(HallwayEnv::cell_id(x, y));
      }
    }
    goal = HallwayEnv::cell_id(HallwayEnv::kGoalX, HallwayEnv::kGoalY);
    move = [](int c, int a) {
      static constexpr int kDx[4] = {0, 1, 0, -1};
      static constexpr int kDy[4] = {1, 0, -1, 0};
      const int x = c % HallwayEnv::kWidth;
      const int y = c / HallwayEnv::kWidth;
      const int nx = x + kDx[a];
      const int ny = y + kDy[a];
      return HallwayEnv::free_cell(nx, ny) ? HallwayEnv::cell_id(nx, ny) : c;
    };
  } else {
    throw ConfigError("latent_optimal_steps: '" + name + "' has no deterministic latent graph");
  }

  // Reverse BFS from the goal over predecessor edges.
  std::map<int, std::vector<int>> predecessors;
  for (int c : cells) {
    for (int a = 0; a < n_actions; ++a) predecessors[move(c, a)].push_back(c);
  }
  std::map<int, std::optional<int>> dist;
  for (int c : cells) dist[c] = std::nullopt;
  dist[goal] = 0;
  std::deque<int> queue{goal};
  while (!queue.empty()) {
    const int c = queue.front();
    queue.pop_front();
    for (int p : predecessors[c]) {
      if (!dist[p]) {
        dist[p] = *dist[c] + 1;
        queue.push_back(p);
      }
    }
  }
  return dist;
}

double latent_optimal_average(const std::string& name) {
  const auto dist = latent_optimal_steps(name);
  std::vector<int> starts;
  if (name == "cheese_maze") {
    for (int c = 0; c < CheeseMazeEnv::kGoal; ++c) starts.push_back(c);
  } else {
    for (const auto& [x, y] : HallwayEnv::corners()) starts.push_back(HallwayEnv::cell_id(x, y));
  }
  double total = 0.0;
  for (int s : starts) {
    const auto& d = dist.at(s);
    if (!d) throw ConfigError(name + ": start cell " + std::to_string(s) + " cannot reach the goal");
    total += *d;
  }
  return total / static_cast<double>(starts.size());
}

}  // namespace asmpg
