#include "asmpg/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "asmpg/constants.hpp"
#include "asmpg/envs.hpp"
#include "asmpg/errors.hpp"
#include "asmpg/linalg.hpp"
#include "asmpg/oracle.hpp"
#include "asmpg/rng.hpp"

namespace asmpg {

namespace {

void randomize(ParametricAsm& policy, Rng& rng, double scale) {
  for (auto& v : policy.mutable_params()) v = rng.uniform(-scale, scale);
}

double diff_norm(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

VerifyCheck upper(std::string name, double computed, double bound) {
  return {std::move(name), computed, bound, computed <= bound};
}

// Runs fn, prefixing any budget failure with the check name.
template <typename F>
auto guarded(const std::string& check, F&& fn) {
  try {
    return fn();
  } catch (const BudgetError& e) {
    throw BudgetError(check + ": " + e.what());
  }
}

void suite_theorem1(const VerifyOptions& opts, std::vector<VerifyCheck>& out) {
  const auto nmdp = tiny_nmdp({2, 2, 3, 0});
  const auto spec = ReturnSpec::episodic(3);
  TabularSoftmaxAsm policy({2, 2, 2}, 3);
  EnumerationOptions eo;
  eo.budget = opts.budget;
  eo.workers = opts.workers;
  Rng rng(derive_seed(0x7431, 1));
  double worst_fd = 0.0, worst_fd_bound = 0.0, worst_ratio = -1.0;
  double worst_q = 0.0, worst_full = 0.0;
  for (int i = 0; i < opts.probes; ++i) {
    randomize(policy, rng, 2.0);
    const auto g = guarded("theorem1.exact_gradient", [&] { return exact_gradient(nmdp, policy, spec, eo); });
    const auto fd = guarded("theorem1.fd_gradient", [&] { return fd_gradient(nmdp, policy, spec, 1e-5, eo); });
    const auto q = guarded("theorem1.q_form", [&] { return q_form_gradient(nmdp, policy, spec, eo); });
    const auto full = guarded("theorem1.full_return",
                              [&] { return exact_gradient(nmdp, policy, spec, eo, EstimatorForm::kFullReturn); });
    const double d = diff_norm(g, fd);
    const double tol = std::max(1e-6 * l2_norm(fd), 1e-8);
    if (d / tol > worst_ratio) {
      worst_ratio = d / tol;
      worst_fd = d;
      worst_fd_bound = tol;
    }
    worst_q = std::max(worst_q, diff_norm(g, q));
    worst_full = std::max(worst_full, diff_norm(g, full));
  }
  out.push_back(upper("theorem1.exact_vs_fd_worst_probe", worst_fd, worst_fd_bound));
  out.push_back(upper("theorem1.return_vs_q_form", worst_q, 1e-9));
  out.push_back(upper("theorem1.reward_to_go_vs_full_return", worst_full, 1e-9));
}

void suite_theorem2(const VerifyOptions& opts, std::vector<VerifyCheck>& out) {
  const double gamma = 0.5;
  const auto nmdp = tiny_nmdp({2, 2, 3, 0});
  const auto spec6 = ReturnSpec::discounted(gamma, 6);
  const auto spec12 = ReturnSpec::discounted(gamma, 12);
  TabularSoftmaxAsm policy({2, 2, 2}, 1);
  EnumerationOptions eo;
  eo.budget = opts.budget;
  eo.workers = opts.workers;
  Rng rng(derive_seed(0x7432, 1));
  const int probes = std::max(1, std::min(opts.probes, 3));
  double worst_rel = 0.0, worst_q = 0.0, worst_gap_ratio = 0.0, worst_gap = 0.0;
  for (int i = 0; i < probes; ++i) {
    randomize(policy, rng, 2.0);
    const auto g = guarded("theorem2.exact_gradient", [&] { return exact_gradient(nmdp, policy, spec6, eo); });
    const auto fd = guarded("theorem2.fd_gradient", [&] { return fd_gradient(nmdp, policy, spec6, 1e-5, eo); });
    const auto q = guarded("theorem2.q_form", [&] { return q_form_gradient(nmdp, policy, spec6, eo); });
    worst_rel = std::max(worst_rel, diff_norm(g, fd) / std::max(l2_norm(fd), 1e-12));
    worst_q = std::max(worst_q, diff_norm(g, q));
    const double j6 = guarded("theorem2.objective_T6", [&] { return exact_objective(nmdp, policy, spec6, eo); }).value;
    const double j12 =
        guarded("theorem2.objective_T12", [&] { return exact_objective(nmdp, policy, spec12, eo); }).value;
    const double gap = std::abs(j12 - j6);
    worst_gap = std::max(worst_gap, gap);
    worst_gap_ratio = std::max(worst_gap_ratio, gap / discounted_tail_bound(nmdp.r_max, gamma, 6));
  }
  out.push_back(upper("theorem2.exact_vs_fd_relative", worst_rel, 1e-6));
  out.push_back(upper("theorem2.return_vs_q_form", worst_q, 1e-9));
  out.push_back(upper("theorem2.truncation_gap_T6_T12", worst_gap, discounted_tail_bound(nmdp.r_max, gamma, 6)));
  const double shrink = discounted_tail_bound(nmdp.r_max, gamma, 12) / discounted_tail_bound(nmdp.r_max, gamma, 6);
  out.push_back(upper("theorem2.tail_bound_shrink_on_doubling", shrink, std::pow(gamma, 6) + 1e-15));
  // Any further doubling adds at most tail(12) = gamma^6 * tail(6).
  out.push_back(upper("theorem2.gap_fraction_of_tail_bound", worst_gap_ratio, 1.0));
}

void suite_smoothness(const VerifyOptions& opts, std::vector<VerifyCheck>& out) {
  double worst_ratio = 0.0, worst_norm = 0.0, worst_beta = 0.0;
  int violations = 0;
  EnumerationOptions eo;
  eo.budget = opts.budget;
  eo.workers = opts.workers;
  for (int i = 0; i < 10; ++i) {
    const int horizon = 2 + i % 2;
    const auto nmdp = tiny_nmdp({2, 2, horizon, static_cast<std::uint64_t>(100 + i)});
    JointSoftmaxAsm policy({2, 2, 2}, horizon);
    Rng rng(derive_seed(0x7433, i));
    randomize(policy, rng, 1.0);
    const auto c = episodic_constants(nmdp.r_max, std::sqrt(2.0), 1.0, horizon);
    const double norm = guarded("smoothness.fd_hessian",
                                [&] { return fd_hessian_norm(nmdp, policy, ReturnSpec::episodic(horizon), 1e-4, eo); });
    if (norm > c.beta) ++violations;
    if (norm / c.beta > worst_ratio) {
      worst_ratio = norm / c.beta;
      worst_norm = norm;
      worst_beta = c.beta;
    }
  }
  out.push_back(upper("smoothness.hessian_norm_worst_instance", worst_norm, worst_beta));
  out.push_back(upper("smoothness.violations", violations, 0.0));
}

void suite_softmax_bounds(const VerifyOptions&, std::vector<VerifyCheck>& out) {
  Rng rng(derive_seed(0x7434, 1));
  double max_score = 0.0, max_hess = 0.0, max_fact_score = 0.0;
  int violations = 0;
  for (int i = 0; i < 1000; ++i) {
    const Alphabet ab{1 + rng.uniform_int(3), 1 + rng.uniform_int(4), 1 + rng.uniform_int(4)};
    const double scale = rng.uniform(0.0, 20.0);
    JointSoftmaxAsm joint(ab, 1);
    TabularSoftmaxAsm fact(ab, 1);
    randomize(joint, rng, scale);
    randomize(fact, rng, scale);
    StepTransition tr;
    tr.s_prev = rng.uniform_int(ab.n_agent_states);
    tr.a_prev = rng.uniform_int(ab.n_actions);
    tr.obs.index = rng.uniform_int(ab.n_obs);
    tr.s = rng.uniform_int(ab.n_agent_states);
    tr.a = rng.uniform_int(ab.n_actions);
    const double sn = l2_norm(joint.score(tr));
    const double hn = spectral_norm_symmetric(joint.hessian_log_prob(tr));
    if (sn > std::sqrt(2.0) + 1e-9 || hn > 1.0 + 1e-9) ++violations;
    max_score = std::max(max_score, sn);
    max_hess = std::max(max_hess, hn);
    max_fact_score = std::max(max_fact_score, l2_norm(fact.score(tr)));
  }
  out.push_back(upper("softmax_bounds.max_score_norm", max_score, std::sqrt(2.0) + 1e-9));
  out.push_back(upper("softmax_bounds.max_hessian_norm", max_hess, 1.0 + 1e-9));
  out.push_back(upper("softmax_bounds.violations", violations, 0.0));
  out.push_back(upper("softmax_bounds.factorized_max_score_norm", max_fact_score, 2.0 + 1e-9));
}

void suite_ideal_asd(const VerifyOptions& opts, std::vector<VerifyCheck>& out) {
  const int horizon = 3;
  const auto nmdp = toggle_latch_pomdp(horizon);
  EnumerationOptions eo;
  eo.budget = opts.budget;
  eo.workers = opts.workers;
  const auto ideal =
      guarded("ideal_asd.tracker", [&] { return ideal_asd_optimality_check(nmdp, toggle_latch_tracker(), horizon, eo); });
  const auto forgetful = guarded(
      "ideal_asd.forgetful", [&] { return ideal_asd_optimality_check(nmdp, forgetful_dynamics(2), horizon, eo); });
  out.push_back({"ideal_asd.tracker_is_ideal", ideal.ideal ? 1.0 : 0.0, 1.0, ideal.ideal});
  out.push_back(upper("ideal_asd.tracker_gap", ideal.gap, 1e-12));
  out.push_back({"ideal_asd.forgetful_not_ideal", forgetful.ideal ? 1.0 : 0.0, 0.0, !forgetful.ideal});
  out.push_back({"ideal_asd.forgetful_gap", forgetful.gap, 0.01, forgetful.gap >= 0.01});
}

using SuiteFn = std::function<void(const VerifyOptions&, std::vector<VerifyCheck>&)>;

const std::vector<std::pair<std::string, SuiteFn>>& suite_table() {
  static const std::vector<std::pair<std::string, SuiteFn>> table = {
      {"theorem1", suite_theorem1},   {"theorem2", suite_theorem2},   {"smoothness", suite_smoothness},
      {"softmax_bounds", suite_softmax_bounds}, {"ideal_asd", suite_ideal_asd},
  };
  return table;
}

}  // namespace

bool VerifyReport::pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const VerifyCheck& c) { return c.pass; });
}

nlohmann::json VerifyReport::to_json() const {
  nlohmann::json j;
  j["schema_version"] = kVerifySchemaVersion;
  j["suite"] = suite;
  j["checks"] = nlohmann::json::array();
  for (const auto& c : checks) {
    j["checks"].push_back(
        {{"name", c.name}, {"computed", c.computed}, {"bound_or_reference", c.bound_or_reference}, {"pass", c.pass}});
  }
  j["pass"] = pass();
  return j;
}

const std::vector<std::string>& verify_suites() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [name, fn] : suite_table()) n.push_back(name);
    n.push_back("all");
    return n;
  }();
  return names;
}

VerifyReport run_verify(const std::string& suite, const VerifyOptions& opts) {
  if (opts.budget <= 0.0) throw ConfigError("budget must be positive");
  if (opts.probes < 1) throw ConfigError("probes must be >= 1");
  VerifyReport report;
  report.suite = suite;
  bool found = false;
  for (const auto& [name, fn] : suite_table()) {
    if (suite == "all" || suite == name) {
      fn(opts, report.checks);
      found = true;
    }
  }
  if (!found) throw ConfigError("unknown suite '" + suite + "'");
  return report;
}

}  // namespace asmpg
