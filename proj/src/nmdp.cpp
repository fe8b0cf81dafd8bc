#include "asmpg/nmdp.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <utility>

namespace asmpg {

namespace {

void check_simplex(std::span<const double> p, const char* what) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw NumericError(std::string(what) + ": negative or NaN probability");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw NumericError(std::string(what) + ": row sums to " + std::to_string(sum));
  }
}

}  // namespace

std::vector<double> EnumerableNmdp::next_obs_dist(std::span<const int> obs,
                                                  std::span<const int> actions) const {
  std::vector<double> out(n_obs, 0.0);
  next_obs_dist(obs, actions, out);
  return out;
}

void EnumerableNmdp::next_obs_dist(std::span<const int> obs, std::span<const int> actions,
                                   std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  transition(obs, actions, out);
  check_simplex(out, "transition");
}

double EnumerableNmdp::checked_reward(std::span<const int> obs, std::span<const int> actions) const {
  const double r = reward(obs, actions);
  if (!std::isfinite(r) || std::abs(r) > r_max * (1.0 + 1e-12)) {
    throw NumericError(name + ": reward " + std::to_string(r) + " exceeds r_max " + std::to_string(r_max));
  }
  return r;
}

void EnumerableNmdp::validate_initial() const {
  if (static_cast<int>(initial.size()) != n_obs) throw ShapeError(name + ": initial distribution size");
  check_simplex(initial, "initial distribution");
}

NonMarkovCertificate non_markov_certificate(const EnumerableNmdp& nmdp, int horizon) {
  // (o_t, a_t) -> first history seen with that key and its next-observation row.
  struct Seen {
    std::vector<int> obs, actions;
    std::vector<double> row;
  };
  std::map<std::pair<int, int>, std::vector<Seen>> groups;
  std::vector<int> obs, actions;

  std::function<void(int)> walk = [&](int t) {
    // obs/actions hold o_{1:t}, a_{1:t-1}.
    for (int a = 0; a < nmdp.n_actions; ++a) {
      actions.push_back(a);
      if (t < horizon) {
        auto row = nmdp.next_obs_dist(obs, actions);
        groups[{obs.back(), a}].push_back({obs, actions, row});
        for (int o = 0; o < nmdp.n_obs; ++o) {
          if (row[o] <= 0.0) continue;
          obs.push_back(o);
          walk(t + 1);
          obs.pop_back();
        }
      }
      actions.pop_back();
    }
  };
  for (int o = 0; o < nmdp.n_obs; ++o) {
    if (nmdp.initial[o] <= 0.0) continue;
    obs.assign(1, o);
    walk(1);
  }

  NonMarkovCertificate best;
  for (const auto& [key, members] : groups) {
    for (std::size_t i = 0; i < members.size(); ++i) {
      for (std::size_t j = i + 1; j < members.size(); ++j) {
        double tv = 0.0;
        for (int o = 0; o < nmdp.n_obs; ++o) tv += std::abs(members[i].row[o] - members[j].row[o]);
        tv *= 0.5;
        if (tv > best.total_variation) {
          best.found = true;
          best.total_variation = tv;
          best.obs_a = members[i].obs;
          best.actions_a = members[i].actions;
          best.obs_b = members[j].obs;
          best.actions_b = members[j].actions;
        }
      }
    }
  }
  return best;
}

void GenerativeEnv::pre_step(int action) const {
  if (done_) throw std::logic_error(info().name + ": step() called before reset()");
  if (action < 0 || action >= info().n_actions) {
    throw BoundsError(info().name + ": action " + std::to_string(action) + " out of range");
  }
}

StepResult GenerativeEnv::finish_step(StepResult r) {
  ++steps_;
  if (!r.terminated && steps_ >= info().max_steps) r.truncated = true;
  done_ = r.done();
  return r;
}

}  // namespace asmpg
