#include "asmpg/constants.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "asmpg/errors.hpp"

namespace asmpg {

namespace {

void check_common(double r_max, double G, double M) {
  if (!(r_max > 0.0) || !std::isfinite(r_max)) throw ConfigError("r_max must be positive");
  if (!(G > 0.0) || !std::isfinite(G)) throw ConfigError("G must be positive");
  if (!(M >= 0.0) || !std::isfinite(M)) throw ConfigError("M must be nonnegative");
}

}  // namespace

nlohmann::json SmoothnessConstants::to_json() const {
  nlohmann::json j;
  j["mode"] = mode == ReturnMode::kEpisodic ? "episodic" : "discounted";
  j["r_max"] = r_max;
  j["G"] = G;
  j["M"] = M;
  if (mode == ReturnMode::kEpisodic) {
    j["H"] = horizon;
    j["beta"] = beta;
    j["C_H"] = C;
  } else {
    j["gamma"] = gamma;
    j["beta_gamma"] = beta;
    j["C_gamma"] = C;
  }
  return j;
}

SmoothnessConstants episodic_constants(double r_max, double G, double M, int horizon) {
  check_common(r_max, G, M);
  if (horizon < 1) throw ConfigError("horizon H must be >= 1");
  SmoothnessConstants c;
  c.mode = ReturnMode::kEpisodic;
  c.r_max = r_max;
  c.G = G;
  c.M = M;
  c.horizon = horizon;
  const double H = horizon;
  c.beta = r_max * H * (H + 1.0) / 6.0 * (3.0 * M + G * G * (2.0 * H + 1.0));
  c.C = r_max * G * H * (H + 1.0);
  return c;
}

SmoothnessConstants discounted_constants(double r_max, double G, double M, double gamma) {
  check_common(r_max, G, M);
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  SmoothnessConstants c;
  c.mode = ReturnMode::kDiscounted;
  c.r_max = r_max;
  c.G = G;
  c.M = M;
  c.gamma = gamma;
  const double q = 1.0 - gamma;
  c.beta = r_max / (q * q) * (M + G * G * (1.0 + gamma) / q);
  c.C = 2.0 * r_max * G / (q * q);
  return c;
}

double estimator_norm_bound(const SmoothnessConstants& c) { return c.C / 2.0; }

std::string to_string(Schedule s) {
  switch (s) {
    case Schedule::kConstant:
      return "sgd_constant";
    case Schedule::kSqrtDecay:
      return "sgd_sqrt_decay";
    case Schedule::kCustom:
      return "sgd_custom";
  }
  return "unknown";
}

void ScheduleParams::validate() const {
  if (budget_k < 1) throw ConfigError("K budget must be >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
  if (kind == Schedule::kCustom) {
    if (!(custom_c > 0.0)) throw ConfigError("custom stepsize scale c must be positive");
    if (!(custom_p > 0.5 && custom_p <= 1.0)) {
      throw ConfigError("custom stepsize c/k^p needs 1/2 < p <= 1 so that sum alpha_k diverges and sum alpha_k^2 converges");
    }
  }
}

double default_delta1(const SmoothnessConstants& c) {
  return c.mode == ReturnMode::kEpisodic ? c.r_max * c.horizon : c.r_max / (1.0 - c.gamma);
}

double stepsize(const ScheduleParams& p, long k, const SmoothnessConstants& c) {
  if (k < 1) throw ConfigError("iteration index k must be >= 1");
  switch (p.kind) {
    case Schedule::kConstant: {
      const double d1 = p.delta1 > 0.0 ? p.delta1 : default_delta1(c);
      return std::min(1.0 / c.beta, std::sqrt(d1 / (c.beta * static_cast<double>(p.budget_k))) / c.C);
    }
    case Schedule::kSqrtDecay:
      return 1.0 / (c.beta * std::sqrt(static_cast<double>(k)));
    case Schedule::kCustom:
      return p.custom_c / std::pow(static_cast<double>(k), p.custom_p);
  }
  throw ConfigError("unknown schedule");
}

double rate_bound(const ScheduleParams& p, const SmoothnessConstants& c) {
  const double d1 = p.delta1 > 0.0 ? p.delta1 : default_delta1(c);
  const double K = static_cast<double>(p.budget_k);
  const double log_term = 12.0 * c.C * c.C * std::log(1.0 / p.delta);
  switch (p.kind) {
    case Schedule::kConstant:
      return 2.0 * c.beta * d1 / K + 5.0 * c.C * std::sqrt(c.beta * d1 / K) + log_term / K;
    case Schedule::kSqrtDecay:
      return (2.0 * c.beta * d1 + 3.0 * c.C * c.C * (1.0 + std::log(K)) + log_term) / std::sqrt(K);
    case Schedule::kCustom:
      break;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace asmpg
