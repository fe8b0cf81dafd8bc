#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "asmpg/nmdp.hpp"

namespace asmpg {

namespace testing {
struct EnvAccess;  // test-only latent state hooks, defined in tests/
}

/// 11-cell maze with 7 aliased observation symbols; goal cell 10.
class CheeseMazeEnv final : public GenerativeEnv {
 public:
  enum Action { kNorth = 0, kSouth = 1, kEast = 2, kWest = 3 };
  static constexpr int kGoal = 10;
  static constexpr int kNumCells = 11;
  static constexpr std::array<int, kNumCells> kObservation = {0, 1, 2, 1, 3, 4, 4, 4, 5, 5, 6};

  explicit CheeseMazeEnv(int max_steps = 200);

  const EnvInfo& info() const override { return info_; }
  int reset(Rng& rng) override;
  StepResult step(Rng& rng, int action) override;
  bool goal_reached() const override { return position_ == kGoal; }
  std::unique_ptr<GenerativeEnv> clone() const override { return std::make_unique<CheeseMazeEnv>(*this); }

  int position() const { return position_; }
  /// Deterministic latent move; stays put when no corridor leads that way.
  static int move(int cell, int action);

 private:
  friend struct testing::EnvAccess;
  EnvInfo info_;
  int position_ = 0;
};

/// 7x4 grid with two 2x2 blocked regions; observation is the N/E/S/W wall pattern.
class HallwayEnv final : public GenerativeEnv {
 public:
  enum Action { kNorth = 0, kEast = 1, kSouth = 2, kWest = 3 };
  static constexpr int kWidth = 7;
  static constexpr int kHeight = 4;
  static constexpr int kGoalX = 3;
  static constexpr int kGoalY = 2;
  static constexpr double kGoalReward = 5.0;
  static constexpr double kWallReward = -1.0;
  static constexpr double kStepReward = -0.1;

  explicit HallwayEnv(int max_steps = 200);

  const EnvInfo& info() const override { return info_; }
  int reset(Rng& rng) override;
  StepResult step(Rng& rng, int action) override;
  bool goal_reached() const override { return x_ == kGoalX && y_ == kGoalY; }
  std::unique_ptr<GenerativeEnv> clone() const override { return std::make_unique<HallwayEnv>(*this); }

  static bool free_cell(int x, int y);
  /// Wall bits b3..b0 = blocked to the N, E, S, W.
  static int observe(int x, int y);
  static int cell_id(int x, int y) { return y * kWidth + x; }
  static std::array<std::pair<int, int>, 4> corners();
  int x() const { return x_; }
  int y() const { return y_; }

 private:
  friend struct testing::EnvAccess;
  EnvInfo info_;
  int x_ = 0;
  int y_ = 0;
};

/// Treatment planning with hidden toxicity and resistance.
class HealthcareEnv final : public GenerativeEnv {
 public:
  enum Action { kNone = 0, kMild = 1, kAggressive = 2 };
  static constexpr int kHealthBins = 8;
  static constexpr double kRecover = 2.0;
  static constexpr double kFail = -1.0;
  static constexpr double kTerminalReward = 50.0;

  explicit HealthcareEnv(int max_steps = 200, double noise_sd = 0.05);

  const EnvInfo& info() const override { return info_; }
  int reset(Rng& rng) override;
  StepResult step(Rng& rng, int action) override;
  std::span<const double> features() const override { return {&health_, 1}; }
  bool goal_reached() const override { return recovered_; }
  std::unique_ptr<GenerativeEnv> clone() const override { return std::make_unique<HealthcareEnv>(*this); }

  /// Discretizes health into kHealthBins equal bins on [kFail, kRecover].
  static int health_bin(double h);
  double health() const { return health_; }
  double toxicity() const { return toxicity_; }
  double resistance() const { return resistance_; }

 private:
  friend struct testing::EnvAccess;
  EnvInfo info_;
  double noise_sd_;
  double health_ = 0.5;
  double toxicity_ = 0.0;
  double resistance_ = 0.0;
  bool recovered_ = false;
};

/// Machine maintenance with hidden wear and imperfect repair.
class MachineRepairEnv final : public GenerativeEnv {
 public:
  enum Action { kOperate = 0, kRepair = 1 };
  enum Condition { kHealthy = 0, kDegraded = 1 };

  explicit MachineRepairEnv(int max_steps = 200);

  const EnvInfo& info() const override { return info_; }
  int reset(Rng& rng) override;
  StepResult step(Rng& rng, int action) override;
  std::unique_ptr<GenerativeEnv> clone() const override { return std::make_unique<MachineRepairEnv>(*this); }

  double wear() const { return wear_; }
  int condition() const { return condition_; }

 private:
  friend struct testing::EnvAccess;
  EnvInfo info_;
  double wear_ = 0.0;
  int condition_ = kHealthy;
};

/// Classic cart-pole where only the two velocities are observed.
class VelocityCartPoleEnv final : public GenerativeEnv {
 public:
  enum Action { kLeft = 0, kRight = 1 };
  static constexpr double kGravity = 9.8;
  static constexpr double kCartMass = 1.0;
  static constexpr double kPoleMass = 0.1;
  static constexpr double kHalfLength = 0.5;
  static constexpr double kForce = 10.0;
  static constexpr double kTau = 0.02;
  static constexpr double kAngleLimit = 12.0 * 2.0 * 3.14159265358979323846 / 360.0;
  static constexpr double kPositionLimit = 2.4;

  explicit VelocityCartPoleEnv(int max_steps = 200);

  const EnvInfo& info() const override { return info_; }
  int reset(Rng& rng) override;
  StepResult step(Rng& rng, int action) override;
  std::span<const double> features() const override { return observed_; }
  std::unique_ptr<GenerativeEnv> clone() const override {
    return std::make_unique<VelocityCartPoleEnv>(*this);
  }

  /// (x, x_dot, theta, theta_dot).
  const std::array<double, 4>& latent() const { return state_; }
  bool out_of_bounds() const;

 private:
  friend struct testing::EnvAccess;
  void refresh_observation();
  EnvInfo info_;
  std::array<double, 4> state_{};
  std::array<double, 2> observed_{};
};

/// Generative wrapper around an enumerable NMDP; episodes last exactly H steps.
class EnumerableEnv final : public GenerativeEnv {
 public:
  explicit EnumerableEnv(std::shared_ptr<const EnumerableNmdp> nmdp);

  const EnvInfo& info() const override { return info_; }
  int reset(Rng& rng) override;
  StepResult step(Rng& rng, int action) override;
  std::unique_ptr<GenerativeEnv> clone() const override { return std::make_unique<EnumerableEnv>(*this); }
  const EnumerableNmdp* enumerable() const override { return nmdp_.get(); }

 private:
  std::shared_ptr<const EnumerableNmdp> nmdp_;
  EnvInfo info_;
  std::vector<int> obs_;
  std::vector<int> actions_;
};

struct TinyNmdpSpec {
  int n_obs = 2;
  int n_actions = 2;
  int horizon = 3;
  std::uint64_t seed = 0;
};

/// Seeded history-dependent NMDP. The next observation mixes a random (o_t, a_t)
/// row with a point mass shifted by the parity of o_1 + a_1; the reward table is
/// selected by the parity of a_1 + a_{t-1}.
EnumerableNmdp tiny_nmdp(const TinyNmdpSpec& spec);

/// Two-state latent toggled by each action; the latent is revealed only by O_1
/// and later observations are fair coin flips. Reward r_t is the current latent.
EnumerableNmdp toggle_latch_pomdp(int horizon);

/// Environment names: cheese_maze, hallway, healthcare, machine_repair,
/// velocity_cartpole, toggle_latch, tiny:<seed>. params may set max_steps; tiny
/// takes n_obs / n_actions / horizon and toggle_latch takes horizon.
std::unique_ptr<GenerativeEnv> make_env(const std::string& name, std::uint64_t seed,
                                        const nlohmann::json& params = nlohmann::json::object());

/// BFS distance to the goal on the fully observed latent graph, keyed by start
/// cell (cheese_maze: cell index; hallway: y * 7 + x). Unreachable cells map to nullopt.
std::map<int, std::optional<int>> latent_optimal_steps(const std::string& name);

/// Mean BFS distance over the env's start distribution.
double latent_optimal_average(const std::string& name);

}  // namespace asmpg
