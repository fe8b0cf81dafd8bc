#pragma once

#include <string>

#include <json.hpp>

#include "asmpg/core.hpp"

namespace asmpg {

/// Smoothness and estimator-norm constants for one return mode.
struct SmoothnessConstants {
  ReturnMode mode = ReturnMode::kEpisodic;
  double r_max = 1.0;
  double G = 0.0;
  double M = 0.0;
  int horizon = 1;
  double gamma = 0.0;
  /// beta (episodic) or beta_gamma (discounted).
  double beta = 0.0;
  /// C_H (episodic) or C_gamma (discounted).
  double C = 0.0;

  nlohmann::json to_json() const;
};

SmoothnessConstants episodic_constants(double r_max, double G, double M, int horizon);
SmoothnessConstants discounted_constants(double r_max, double G, double M, double gamma);

/// C_H / 2 or C_gamma / 2: uniform bound on the norm of a single-episode estimate.
double estimator_norm_bound(const SmoothnessConstants& c);

enum class Schedule { kConstant, kSqrtDecay, kCustom };

std::string to_string(Schedule s);

struct ScheduleParams {
  Schedule kind = Schedule::kSqrtDecay;
  /// Estimate of sup J - J(theta_1); <= 0 selects r_max * H or r_max / (1 - gamma).
  double delta1 = 0.0;
  long budget_k = 1000;
  double delta = 0.1;
  /// alpha_k = custom_c / k^custom_p for the custom family.
  double custom_c = 0.1;
  double custom_p = 1.0;

  void validate() const;
};

/// Default Delta_1: the largest possible return spread for the mode.
double default_delta1(const SmoothnessConstants& c);

/// alpha_k for k >= 1.
double stepsize(const ScheduleParams& p, long k, const SmoothnessConstants& c);

/// High-probability bound on (1/K) sum ||grad J(theta_k)||^2 for the constant and
/// sqrt-decay schedules; NaN for the custom family.
double rate_bound(const ScheduleParams& p, const SmoothnessConstants& c);

}  // namespace asmpg
