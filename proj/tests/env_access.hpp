#pragma once

#include "asmpg/envs.hpp"

namespace asmpg::testing {

/// Sets latent state that the public interface hides.
struct EnvAccess {
  static void set_position(CheeseMazeEnv& env, int cell) { env.position_ = cell; }
  static void set_cell(HallwayEnv& env, int x, int y) {
    env.x_ = x;
    env.y_ = y;
  }
  static void set_health(HealthcareEnv& env, double h) { env.health_ = h; }
  static void set_wear(MachineRepairEnv& env, double w) { env.wear_ = w; }
  static void set_condition(MachineRepairEnv& env, int c) { env.condition_ = c; }
  static void set_latent(VelocityCartPoleEnv& env, const std::array<double, 4>& s) {
    env.state_ = s;
    env.refresh_observation();
  }
};

}  // namespace asmpg::testing
