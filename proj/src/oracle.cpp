#include "asmpg/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "asmpg/parallel.hpp"

namespace asmpg {

namespace {

void check_policy_actions(const EnumerableNmdp& nmdp, const AsmKernel& policy) {
  if (policy.n_actions() != nmdp.n_actions) {
    throw ShapeError("policy has " + std::to_string(policy.n_actions()) + " actions, NMDP has " +
                     std::to_string(nmdp.n_actions));
  }
}

void check_tabular(const ParametricAsm& policy, const char* what) {
  if (policy.kind() == PolicyKind::kMlp) {
    throw UnsupportedError(std::string(what) + " needs a tabular policy; use fd_gradient for network policies");
  }
}

std::string shape(const EnumerableNmdp& nmdp, int n_states, int length) {
  std::ostringstream os;
  os << "(|O|=" << nmdp.n_obs << ", |S|=" << n_states << ", |A|=" << nmdp.n_actions << ", T=" << length << ")";
  return os.str();
}

double discount_step(const ReturnSpec& spec) { return spec.mode == ReturnMode::kDiscounted ? spec.gamma : 1.0; }

/// First step of a trajectory: (o_1, a_1, s_1) with its probability.
struct Branch {
  int o = 0;
  int a = 0;
  int s = 0;
  double probability = 0.0;
};

std::vector<Branch> top_branches(const EnumerableNmdp& nmdp, const AsmKernel& policy, const EnumerationOptions& opts) {
  const int S = policy.n_agent_states();
  const int A = policy.n_actions();
  std::vector<Branch> out;
  std::vector<double> pi(static_cast<std::size_t>(S) * A);
  for (int o = 0; o < nmdp.n_obs; ++o) {
    const double mu = nmdp.initial[o];
    if (mu <= 0.0) continue;
    policy.joint_probs({kDummyState, kDummyAction, {o, {}}, 1}, pi);
    for (int a = 0; a < A; ++a) {
      for (int s = 0; s < S; ++s) {
        const double p = mu * pi[static_cast<std::size_t>(s) * A + a];
        if (p <= 0.0 || (opts.prune && p < opts.prune_below)) continue;
        out.push_back({o, a, s, p});
      }
    }
  }
  return out;
}

/// Depth-first trajectory walker. The trajectory holds o_1..o_t and the
/// (s, a) pairs chosen so far.
class Walker {
 public:
  Walker(const EnumerableNmdp& nmdp, const AsmKernel& policy, int length, const EnumerationOptions& opts)
      : nmdp_(nmdp), policy_(policy), length_(length), opts_(opts), traj_(Trajectory::start()) {}

  void run_branch(const Branch& b, const TrajectoryVisitor& visit) {
    traj_.obs.push_back(b.o);
    choose(1, b.s, b.a, b.probability, visit);
    traj_.obs.pop_back();
  }

 private:
  bool skip(double p) const { return p <= 0.0 || (opts_.prune && p < opts_.prune_below); }

  void descend(int t, double prob, const TrajectoryVisitor& visit) {
    const int S = policy_.n_agent_states();
    const int A = policy_.n_actions();
    std::vector<double> pi(static_cast<std::size_t>(S) * A);
    policy_.joint_probs({traj_.agent_states[t - 1], traj_.actions[t - 1], {traj_.obs[t - 1], {}}, t}, pi);
    for (int a = 0; a < A; ++a) {
      for (int s = 0; s < S; ++s) {
        const double p = prob * pi[static_cast<std::size_t>(s) * A + a];
        if (skip(p)) continue;
        choose(t, s, a, p, visit);
      }
    }
  }

  void choose(int t, int s, int a, double p, const TrajectoryVisitor& visit) {
    traj_.agent_states.push_back(s);
    traj_.actions.push_back(a);
    const auto obs = std::span<const int>(traj_.obs).first(t);
    const auto acts = std::span<const int>(traj_.actions).subspan(1, t);
    traj_.rewards.push_back(nmdp_.checked_reward(obs, acts));
    if (t == length_) {
      traj_.terminated = true;
      visit(traj_, p);
    } else {
      const auto dist = nmdp_.next_obs_dist(obs, acts);
      for (int o = 0; o < nmdp_.n_obs; ++o) {
        const double q = p * dist[o];
        if (skip(q)) continue;
        traj_.obs.push_back(o);
        descend(t + 1, q, visit);
        traj_.obs.pop_back();
      }
    }
    traj_.rewards.pop_back();
    traj_.actions.pop_back();
    traj_.agent_states.pop_back();
  }

  const EnumerableNmdp& nmdp_;
  const AsmKernel& policy_;
  int length_;
  const EnumerationOptions& opts_;
  Trajectory traj_;
};

void check_length_arg(int length) {
  if (length < 1) throw ConfigError("trajectory length must be >= 1");
}

}  // namespace

double enumeration_leaves(const EnumerableNmdp& nmdp, int n_agent_states, int length) {
  return std::pow(static_cast<double>(nmdp.n_obs) * n_agent_states * nmdp.n_actions, length);
}

void check_budget(double required, double budget, const std::string& what) {
  if (required > budget) {
    std::ostringstream os;
    os << what << " needs " << required << " nodes, above the enumeration budget of " << budget;
    throw BudgetError(os.str(), required, budget);
  }
}

void for_each_trajectory(const EnumerableNmdp& nmdp, const AsmKernel& policy, int length,
                         const TrajectoryVisitor& visit, const EnumerationOptions& opts) {
  check_length_arg(length);
  check_policy_actions(nmdp, policy);
  nmdp.validate_initial();
  check_budget(enumeration_leaves(nmdp, policy.n_agent_states(), length), opts.budget,
               "enumeration " + shape(nmdp, policy.n_agent_states(), length));
  Walker walker(nmdp, policy, length, opts);
  for (const auto& b : top_branches(nmdp, policy, opts)) walker.run_branch(b, visit);
}

std::vector<WeightedTrajectory> enumerate(const EnumerableNmdp& nmdp, const AsmKernel& policy, int length,
                                          const EnumerationOptions& opts) {
  std::vector<WeightedTrajectory> out;
  for_each_trajectory(
      nmdp, policy, length, [&](const Trajectory& traj, double p) { out.push_back({traj, p}); }, opts);
  return out;
}

// ---------------------------------------------------------------------------
// Objective by marginal recursion

namespace {

class MarginalRecursion {
 public:
  MarginalRecursion(const EnumerableNmdp& nmdp, const AsmKernel& policy, int length, double g)
      : nmdp_(nmdp), policy_(policy), length_(length), g_(g), S_(policy.n_agent_states()), A_(policy.n_actions()) {
    const std::size_t SA = static_cast<std::size_t>(S_) * A_;
    // pi_t(. | s~, a~, o) for every context, filled once.
    kernel_.assign(static_cast<std::size_t>(length) * S_ * A_ * nmdp.n_obs * SA, 0.0);
    for (int t = 1; t <= length; ++t) {
      for (int sp = 0; sp < S_; ++sp) {
        for (int ap = 0; ap < A_; ++ap) {
          if (t == 1 && (sp != kDummyState || ap != kDummyAction)) continue;
          for (int o = 0; o < nmdp.n_obs; ++o) {
            policy.joint_probs({sp, ap, {o, {}}, t}, std::span<double>(kernel_).subspan(context(t, sp, ap, o), SA));
          }
        }
      }
    }
    alpha_.assign(length + 1, std::vector<double>(S_));
    beta_.assign(length + 1, std::vector<double>(S_));
    dist_.assign(length + 1, std::vector<double>(nmdp.n_obs));
  }

  double run() {
    for (int o = 0; o < nmdp_.n_obs; ++o) {
      const double mu = nmdp_.initial[o];
      if (mu <= 0.0) continue;
      auto& alpha = alpha_[1];
      std::fill(alpha.begin(), alpha.end(), 0.0);
      alpha[kDummyState] = mu;
      obs_.push_back(o);
      visit(1, 1.0);
      obs_.pop_back();
    }
    return value_.value();
  }

 private:
  std::size_t context(int t, int sp, int ap, int o) const {
    return ((((static_cast<std::size_t>(t) - 1) * S_ + sp) * A_ + ap) * nmdp_.n_obs + o) * S_ * A_;
  }

  /// alpha_[t] holds P(history up to o_t, S_{t-1} = s).
  void visit(int t, double weight) {
    const auto& alpha_prev = alpha_[t];
    auto& beta = beta_[t];
    auto& dist = dist_[t];
    const int a_prev = t == 1 ? kDummyAction : acts_.back();
    const int o_t = obs_.back();
    for (int a = 0; a < A_; ++a) {
      double mass = 0.0;
      for (int s = 0; s < S_; ++s) beta[s] = 0.0;
      for (int sp = 0; sp < S_; ++sp) {
        const double w = alpha_prev[sp];
        if (w <= 0.0) continue;
        const double* pi = kernel_.data() + context(t, sp, a_prev, o_t);
        for (int s = 0; s < S_; ++s) beta[s] += w * pi[static_cast<std::size_t>(s) * A_ + a];
      }
      for (int s = 0; s < S_; ++s) mass += beta[s];
      if (mass <= 0.0) continue;
      acts_.push_back(a);
      value_.add(weight * nmdp_.checked_reward(obs_, acts_) * mass);
      if (t < length_) {
        nmdp_.next_obs_dist(obs_, acts_, dist);
        auto& next = alpha_[t + 1];
        for (int o = 0; o < nmdp_.n_obs; ++o) {
          if (dist[o] <= 0.0) continue;
          for (int s = 0; s < S_; ++s) next[s] = beta[s] * dist[o];
          obs_.push_back(o);
          visit(t + 1, weight * g_);
          obs_.pop_back();
        }
      }
      acts_.pop_back();
    }
  }

  const EnumerableNmdp& nmdp_;
  const AsmKernel& policy_;
  int length_;
  double g_;
  int S_;
  int A_;
  std::vector<double> kernel_;
  std::vector<std::vector<double>> alpha_, beta_, dist_;
  std::vector<int> obs_;
  std::vector<int> acts_;
  CompensatedSum value_;
};

}  // namespace

ObjectiveValue exact_objective(const EnumerableNmdp& nmdp, const AsmKernel& policy, const ReturnSpec& spec,
                               const EnumerationOptions& opts) {
  spec.validate();
  check_policy_actions(nmdp, policy);
  nmdp.validate_initial();
  const int T = spec.max_length();
  check_budget(std::pow(static_cast<double>(nmdp.n_obs) * nmdp.n_actions, T), opts.budget,
               "exact objective " + shape(nmdp, policy.n_agent_states(), T));
  ObjectiveValue out;
  out.value = MarginalRecursion(nmdp, policy, T, discount_step(spec)).run();
  if (spec.mode == ReturnMode::kDiscounted) out.tail_bound = discounted_tail_bound(nmdp.r_max, spec.gamma, T);
  return out;
}

// ---------------------------------------------------------------------------
// Gradients

std::vector<double> exact_gradient(const EnumerableNmdp& nmdp, const ParametricAsm& policy, const ReturnSpec& spec,
                                   const EnumerationOptions& opts, EstimatorForm form) {
  check_tabular(policy, "exact_gradient");
  spec.validate();
  check_policy_actions(nmdp, policy);
  nmdp.validate_initial();
  const int T = spec.max_length();
  check_budget(enumeration_leaves(nmdp, policy.n_agent_states(), T), opts.budget,
               "exact gradient " + shape(nmdp, policy.n_agent_states(), T));
  const auto branches = top_branches(nmdp, policy, opts);
  const std::size_t d = policy.dim();
  std::vector<std::vector<CompensatedSum>> partial(branches.size());
  parallel_for(branches.size(), opts.workers, [&](std::size_t i) {
    auto& acc = partial[i];
    acc.assign(d, CompensatedSum{});
    std::vector<double> leaf(d);
    Walker walker(nmdp, policy, T, opts);
    walker.run_branch(branches[i], [&](const Trajectory& traj, double p) {
      std::fill(leaf.begin(), leaf.end(), 0.0);
      accumulate_estimate(policy, traj, spec, p, leaf, form);
      for (std::size_t j = 0; j < d; ++j) {
        if (leaf[j] != 0.0) acc[j].add(leaf[j]);
      }
    });
  });
  std::vector<double> grad(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    CompensatedSum total;
    for (const auto& acc : partial) total.add(acc[j].value());
    grad[j] = total.value();
  }
  return grad;
}

namespace {

/// Bottom-up Q/V evaluation over the trajectory tree, optionally accumulating
/// P(node) gamma^{t - t0} Q_t score_t into a gradient buffer.
class QWalker {
 public:
  QWalker(const EnumerableNmdp& nmdp, const AsmKernel& policy, int length, double g)
      : nmdp_(nmdp), policy_(policy), length_(length), g_(g), traj_(Trajectory::start()) {}

  void track_gradient(const ParametricAsm* param, std::vector<double>* grad, int t0) {
    param_ = param;
    grad_ = grad;
    t0_ = t0;
  }

  Trajectory& traj() { return traj_; }

  /// traj holds o_t but not (s_t, a_t).
  double v_node(int t, double prob) {
    const int S = policy_.n_agent_states();
    const int A = policy_.n_actions();
    std::vector<double> pi(static_cast<std::size_t>(S) * A);
    policy_.joint_probs({traj_.agent_states[t - 1], traj_.actions[t - 1], {traj_.obs[t - 1], {}}, t}, pi);
    double v = 0.0;
    for (int a = 0; a < A; ++a) {
      for (int s = 0; s < S; ++s) {
        const double p = pi[static_cast<std::size_t>(s) * A + a];
        if (p <= 0.0) continue;
        traj_.agent_states.push_back(s);
        traj_.actions.push_back(a);
        v += p * q_node(t, prob * p);
        traj_.actions.pop_back();
        traj_.agent_states.pop_back();
      }
    }
    return v;
  }

  /// traj holds o_t, s_t and a_t but not r_t.
  double q_node(int t, double prob) {
    const auto obs = std::span<const int>(traj_.obs).first(t);
    const auto acts = std::span<const int>(traj_.actions).subspan(1, t);
    const double r = nmdp_.checked_reward(obs, acts);
    traj_.rewards.push_back(r);
    double q = r;
    if (t < length_) {
      const auto dist = nmdp_.next_obs_dist(obs, acts);
      for (int o = 0; o < nmdp_.n_obs; ++o) {
        if (dist[o] <= 0.0) continue;
        traj_.obs.push_back(o);
        q += g_ * dist[o] * v_node(t + 1, prob * dist[o]);
        traj_.obs.pop_back();
      }
    }
    if (grad_ != nullptr && prob > 0.0) {
      const double w = prob * std::pow(g_, t - t0_) * q;
      if (w != 0.0) param_->add_score(transition_at(traj_, t), w, *grad_);
    }
    traj_.rewards.pop_back();
    return q;
  }

 private:
  const EnumerableNmdp& nmdp_;
  const AsmKernel& policy_;
  int length_;
  double g_;
  Trajectory traj_;
  const ParametricAsm* param_ = nullptr;
  std::vector<double>* grad_ = nullptr;
  int t0_ = 1;
};

}  // namespace

std::vector<double> q_form_gradient(const EnumerableNmdp& nmdp, const ParametricAsm& policy, const ReturnSpec& spec,
                                    const EnumerationOptions& opts) {
  check_tabular(policy, "q_form_gradient");
  spec.validate();
  check_policy_actions(nmdp, policy);
  nmdp.validate_initial();
  const int T = spec.max_length();
  check_budget(enumeration_leaves(nmdp, policy.n_agent_states(), T), opts.budget,
               "Q-form gradient " + shape(nmdp, policy.n_agent_states(), T));
  const auto branches = top_branches(nmdp, policy, opts);
  const std::size_t d = policy.dim();
  std::vector<std::vector<double>> partial(branches.size());
  parallel_for(branches.size(), opts.workers, [&](std::size_t i) {
    partial[i].assign(d, 0.0);
    const auto& b = branches[i];
    QWalker walker(nmdp, policy, T, discount_step(spec));
    walker.track_gradient(&policy, &partial[i], 1);
    auto& traj = walker.traj();
    traj.obs.push_back(b.o);
    traj.agent_states.push_back(b.s);
    traj.actions.push_back(b.a);
    walker.q_node(1, b.probability);
  });
  std::vector<double> grad(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    CompensatedSum total;
    for (const auto& p : partial) total.add(p[j]);
    grad[j] = total.value();
  }
  return grad;
}

std::vector<double> fd_gradient(const EnumerableNmdp& nmdp, const ParametricAsm& policy, const ReturnSpec& spec,
                                double h, const EnumerationOptions& opts) {
  if (!(h > 0.0)) throw ConfigError("finite-difference step h must be positive");
  spec.validate();
  const int T = spec.max_length();
  check_budget(std::pow(static_cast<double>(nmdp.n_obs) * nmdp.n_actions, T), opts.budget,
               "finite-difference gradient " + shape(nmdp, policy.n_agent_states(), T));
  const std::size_t d = policy.dim();
  std::vector<double> grad(d, 0.0);
  parallel_for(d, opts.workers, [&](std::size_t i) {
    auto probe = policy.clone();
    auto theta = probe->mutable_params();
    const double base = theta[i];
    theta[i] = base + h;
    const double up = exact_objective(nmdp, *probe, spec, opts).value;
    theta[i] = base - h;
    const double down = exact_objective(nmdp, *probe, spec, opts).value;
    grad[i] = (up - down) / (2.0 * h);
  });
  return grad;
}

SquareMatrix fd_hessian(const EnumerableNmdp& nmdp, const ParametricAsm& policy, const ReturnSpec& spec, double h,
                        const EnumerationOptions& opts) {
  if (!(h > 0.0)) throw ConfigError("finite-difference step h must be positive");
  const std::size_t d = policy.dim();
  if (d > 200) throw ConfigError("fd_hessian is limited to dim(theta) <= 200, got " + std::to_string(d));
  spec.validate();
  const int T = spec.max_length();
  check_budget(std::pow(static_cast<double>(nmdp.n_obs) * nmdp.n_actions, T), opts.budget,
               "finite-difference Hessian " + shape(nmdp, policy.n_agent_states(), T));
  const double j0 = exact_objective(nmdp, policy, spec, opts).value;
  SquareMatrix hess(d);
  parallel_for(d, opts.workers, [&](std::size_t i) {
    auto probe = policy.clone();
    auto theta = probe->mutable_params();
    auto J = [&]() { return exact_objective(nmdp, *probe, spec, opts).value; };
    const double ti = theta[i];
    theta[i] = ti + h;
    const double jp = J();
    theta[i] = ti - h;
    const double jm = J();
    theta[i] = ti;
    hess(i, i) = (jp - 2.0 * j0 + jm) / (h * h);
    for (std::size_t j = i + 1; j < d; ++j) {
      const double tj = theta[j];
      theta[i] = ti + h;
      theta[j] = tj + h;
      const double jpp = J();
      theta[j] = tj - h;
      const double jpm = J();
      theta[i] = ti - h;
      const double jmm = J();
      theta[j] = tj + h;
      const double jmp = J();
      theta[i] = ti;
      theta[j] = tj;
      hess(i, j) = (jpp - jpm - jmp + jmm) / (4.0 * h * h);
    }
  });
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < i; ++j) hess(i, j) = hess(j, i);
  }
  return hess;
}

double fd_hessian_norm(const EnumerableNmdp& nmdp, const ParametricAsm& policy, const ReturnSpec& spec, double h,
                       const EnumerationOptions& opts) {
  return spectral_norm_symmetric(fd_hessian(nmdp, policy, spec, h, opts));
}

// ---------------------------------------------------------------------------
// Q and V at a prefix

namespace {

enum class PrefixKind { kQ, kV };

/// Validates the prefix and returns its probability under the env and policy.
double prefix_probability(const EnumerableNmdp& nmdp, const AsmKernel& policy, const HistoryPrefix& prefix,
                          PrefixKind kind, int length) {
  const int t = prefix.t();
  if (t < 1 || t > length) throw BoundsError("prefix length must lie in 1.." + std::to_string(length));
  const std::size_t pairs = kind == PrefixKind::kQ ? t + 1 : t;
  if (prefix.agent_states.size() != pairs || prefix.actions.size() != pairs) {
    throw ShapeError("prefix needs " + std::to_string(pairs) + " agent states and actions (dummy included)");
  }
  if (prefix.agent_states[0] != kDummyState || prefix.actions[0] != kDummyAction) {
    throw BoundsError("prefix must start with the dummy pair");
  }
  const int S = policy.n_agent_states();
  const int A = policy.n_actions();
  for (int o : prefix.obs) {
    if (o < 0 || o >= nmdp.n_obs) throw BoundsError("prefix observation out of range");
  }
  for (std::size_t k = 1; k < pairs; ++k) {
    if (prefix.agent_states[k] < 0 || prefix.agent_states[k] >= S) throw BoundsError("prefix agent state out of range");
    if (prefix.actions[k] < 0 || prefix.actions[k] >= A) throw BoundsError("prefix action out of range");
  }
  double p = nmdp.initial[prefix.obs[0]];
  std::vector<double> pi(static_cast<std::size_t>(S) * A);
  for (std::size_t k = 1; k < pairs; ++k) {
    const int tk = static_cast<int>(k);
    policy.joint_probs({prefix.agent_states[k - 1], prefix.actions[k - 1], {prefix.obs[k - 1], {}}, tk}, pi);
    p *= pi[static_cast<std::size_t>(prefix.agent_states[k]) * A + prefix.actions[k]];
    if (tk < t) {
      const auto dist = nmdp.next_obs_dist(std::span<const int>(prefix.obs).first(k),
                                           std::span<const int>(prefix.actions).subspan(1, k));
      p *= dist[prefix.obs[k]];
    }
  }
  if (!(p > 0.0)) throw UndefinedConditionalError("prefix has zero probability under the environment and policy");
  return p;
}

void load_prefix(QWalker& walker, const EnumerableNmdp& nmdp, const HistoryPrefix& prefix) {
  auto& traj = walker.traj();
  traj.obs = prefix.obs;
  traj.agent_states = prefix.agent_states;
  traj.actions = prefix.actions;
  traj.rewards.clear();
  const std::size_t rewarded = prefix.obs.size() - 1;
  for (std::size_t k = 1; k <= rewarded; ++k) {
    traj.rewards.push_back(nmdp.checked_reward(std::span<const int>(prefix.obs).first(k),
                                               std::span<const int>(prefix.actions).subspan(1, k)));
  }
}

void check_suffix_budget(const EnumerableNmdp& nmdp, const AsmKernel& policy, int length, int t,
                         const EnumerationOptions& opts) {
  check_budget(enumeration_leaves(nmdp, policy.n_agent_states(), length - t + 1), opts.budget,
               "suffix enumeration " + shape(nmdp, policy.n_agent_states(), length - t + 1));
}

}  // namespace

double exact_q(const EnumerableNmdp& nmdp, const AsmKernel& policy, const HistoryPrefix& prefix,
               const ReturnSpec& spec, const EnumerationOptions& opts) {
  spec.validate();
  check_policy_actions(nmdp, policy);
  const int T = spec.max_length();
  const double p = prefix_probability(nmdp, policy, prefix, PrefixKind::kQ, T);
  check_suffix_budget(nmdp, policy, T, prefix.t(), opts);
  QWalker walker(nmdp, policy, T, discount_step(spec));
  load_prefix(walker, nmdp, prefix);
  return walker.q_node(prefix.t(), p);
}

double exact_v(const EnumerableNmdp& nmdp, const AsmKernel& policy, const HistoryPrefix& prefix,
               const ReturnSpec& spec, const EnumerationOptions& opts) {
  spec.validate();
  check_policy_actions(nmdp, policy);
  const int T = spec.max_length();
  const double p = prefix_probability(nmdp, policy, prefix, PrefixKind::kV, T);
  check_suffix_budget(nmdp, policy, T, prefix.t(), opts);
  QWalker walker(nmdp, policy, T, discount_step(spec));
  load_prefix(walker, nmdp, prefix);
  return walker.v_node(prefix.t(), p);
}

std::vector<double> exact_v_gradient(const EnumerableNmdp& nmdp, const ParametricAsm& policy,
                                     const HistoryPrefix& prefix, const ReturnSpec& spec,
                                     const EnumerationOptions& opts) {
  check_tabular(policy, "exact_v_gradient");
  spec.validate();
  check_policy_actions(nmdp, policy);
  const int T = spec.max_length();
  prefix_probability(nmdp, policy, prefix, PrefixKind::kV, T);
  check_suffix_budget(nmdp, policy, T, prefix.t(), opts);
  std::vector<double> grad(policy.dim(), 0.0);
  QWalker walker(nmdp, policy, T, discount_step(spec));
  walker.track_gradient(&policy, &grad, prefix.t());
  load_prefix(walker, nmdp, prefix);
  walker.v_node(prefix.t(), 1.0);
  return grad;
}

double discounted_tail_bound(double r_max, double gamma, int truncation) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  return r_max * std::pow(gamma, truncation) / (1.0 - gamma);
}

double discounted_gradient_tail_bound(double r_max, double G, double gamma, int t1, int t2) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  if (t1 < 0 || t2 < t1) throw ConfigError("need 0 <= t1 <= t2");
  double total = 0.0;
  for (int t = t1 + 1; t <= t2; ++t) total += t * std::pow(gamma, t - 1);
  return r_max * G * total;
}

// ---------------------------------------------------------------------------
// Ideal agent-state dynamics

FixedAsm::FixedAsm(AgentStateDynamics dynamics, int n_actions, std::vector<int> phi, int horizon)
    : dynamics_(std::move(dynamics)), n_actions_(n_actions), phi_(std::move(phi)), horizon_(horizon) {
  if (phi_.size() != static_cast<std::size_t>(dynamics_.n_states) * horizon_) {
    throw ShapeError("phi table must have |S| * H entries");
  }
  for (int a : phi_) {
    if (a < 0 || a >= n_actions_) throw BoundsError("phi action out of range");
  }
}

void FixedAsm::joint_probs(const StepContext& ctx, std::span<double> out) const {
  if (ctx.t < 1 || ctx.t > horizon_) throw BoundsError("time index outside the phi table");
  const int S = dynamics_.n_states;
  std::vector<double> nu(S);
  dynamics_.nu(ctx, nu);
  std::fill(out.begin(), out.end(), 0.0);
  for (int s = 0; s < S; ++s) {
    out[static_cast<std::size_t>(s) * n_actions_ + phi_[static_cast<std::size_t>(ctx.t - 1) * S + s]] = nu[s];
  }
}

nlohmann::json IdealAsdReport::to_json() const {
  nlohmann::json j;
  j["ideal"] = ideal;
  j["asm_value"] = asm_value;
  j["hr_value"] = hr_value;
  j["gap"] = gap;
  j["best_phi"] = best_phi;
  if (witness) {
    const auto& w = *witness;
    j["witness"] = {{"t", w.t},           {"s", w.s},
                    {"a", w.a},           {"kind", w.kind},
                    {"discrepancy", w.discrepancy},
                    {"obs_a", w.obs_a},   {"actions_a", w.actions_a},
                    {"obs_b", w.obs_b},   {"actions_b", w.actions_b}};
  } else {
    j["witness"] = nullptr;
  }
  return j;
}

namespace {

class IdealityScan {
 public:
  IdealityScan(const EnumerableNmdp& nmdp, const AgentStateDynamics& nu, int horizon, double tol)
      : nmdp_(nmdp), nu_(nu), horizon_(horizon), tol_(tol) {
    entries_.resize(static_cast<std::size_t>(horizon) * nu.n_states * nmdp.n_actions);
  }

  std::optional<IdealityWitness> run() {
    for (int o = 0; o < nmdp_.n_obs; ++o) {
      if (nmdp_.initial[o] <= 0.0) continue;
      std::vector<double> alpha(nu_.n_states, 0.0);
      alpha[kDummyState] = 1.0;
      obs_.push_back(o);
      visit(1, alpha);
      obs_.pop_back();
      if (witness_) break;
    }
    return witness_;
  }

 private:
  struct Entry {
    bool set = false;
    double reward = 0.0;
    std::vector<double> dist;
    std::vector<int> obs, actions;
  };

  void visit(int t, const std::vector<double>& alpha_prev) {
    const int S = nu_.n_states;
    const int a_prev = t == 1 ? kDummyAction : acts_.back();
    std::vector<double> alpha(S, 0.0), row(S);
    for (int sp = 0; sp < S; ++sp) {
      if (alpha_prev[sp] <= 0.0) continue;
      nu_.nu({sp, a_prev, {obs_.back(), {}}, t}, row);
      for (int s = 0; s < S; ++s) alpha[s] += alpha_prev[sp] * row[s];
    }
    double total = 0.0;
    for (double x : alpha) total += x;
    for (auto& x : alpha) x /= total;
    for (int a = 0; a < nmdp_.n_actions && !witness_; ++a) {
      acts_.push_back(a);
      const double r = nmdp_.checked_reward(obs_, acts_);
      std::vector<double> dist;
      if (t < horizon_) dist = nmdp_.next_obs_dist(obs_, acts_);
      for (int s = 0; s < S && !witness_; ++s) {
        if (alpha[s] <= 0.0) continue;
        compare(t, s, a, r, dist);
      }
      if (t < horizon_) {
        for (int o = 0; o < nmdp_.n_obs && !witness_; ++o) {
          if (dist[o] <= 0.0) continue;
          obs_.push_back(o);
          visit(t + 1, alpha);
          obs_.pop_back();
        }
      }
      acts_.pop_back();
    }
  }

  void compare(int t, int s, int a, double r, const std::vector<double>& dist) {
    auto& e = entries_[(static_cast<std::size_t>(t - 1) * nu_.n_states + s) * nmdp_.n_actions + a];
    if (!e.set) {
      e = {true, r, dist, obs_, acts_};
      return;
    }
    double gap = std::abs(e.reward - r);
    std::string kind = "reward";
    if (gap <= tol_) {
      gap = 0.0;
      for (std::size_t o = 0; o < dist.size(); ++o) gap += 0.5 * std::abs(e.dist[o] - dist[o]);
      kind = "transition";
    }
    if (gap > tol_) witness_ = IdealityWitness{t, s, a, kind, gap, e.obs, e.actions, obs_, acts_};
  }

  const EnumerableNmdp& nmdp_;
  const AgentStateDynamics& nu_;
  int horizon_;
  double tol_;
  std::vector<Entry> entries_;
  std::vector<int> obs_, acts_;
  std::optional<IdealityWitness> witness_;
};

double expectimax(const EnumerableNmdp& nmdp, int t, int horizon, std::vector<int>& obs, std::vector<int>& acts) {
  double best = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < nmdp.n_actions; ++a) {
    acts.push_back(a);
    double value = nmdp.checked_reward(obs, acts);
    if (t < horizon) {
      const auto dist = nmdp.next_obs_dist(obs, acts);
      for (int o = 0; o < nmdp.n_obs; ++o) {
        if (dist[o] <= 0.0) continue;
        obs.push_back(o);
        value += dist[o] * expectimax(nmdp, t + 1, horizon, obs, acts);
        obs.pop_back();
      }
    }
    acts.pop_back();
    best = std::max(best, value);
  }
  return best;
}

}  // namespace

std::optional<IdealityWitness> find_ideality_violation(const EnumerableNmdp& nmdp, const AgentStateDynamics& nu,
                                                       int horizon, double tol) {
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  nmdp.validate_initial();
  return IdealityScan(nmdp, nu, horizon, tol).run();
}

double history_optimal_value(const EnumerableNmdp& nmdp, int horizon, const EnumerationOptions& opts) {
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  nmdp.validate_initial();
  check_budget(std::pow(static_cast<double>(nmdp.n_obs) * nmdp.n_actions, horizon), opts.budget,
               "history-policy expectimax");
  std::vector<int> obs, acts;
  CompensatedSum total;
  for (int o = 0; o < nmdp.n_obs; ++o) {
    if (nmdp.initial[o] <= 0.0) continue;
    obs.push_back(o);
    total.add(nmdp.initial[o] * expectimax(nmdp, 1, horizon, obs, acts));
    obs.pop_back();
  }
  return total.value();
}

double asm_optimal_value(const EnumerableNmdp& nmdp, const AgentStateDynamics& nu, int horizon,
                         std::vector<int>* best_phi, const EnumerationOptions& opts) {
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  const std::size_t cells = static_cast<std::size_t>(nu.n_states) * horizon;
  const double maps = std::pow(static_cast<double>(nmdp.n_actions), static_cast<double>(cells));
  check_budget(maps * std::pow(static_cast<double>(nmdp.n_obs) * nmdp.n_actions, horizon), opts.budget,
               "agent-state policy brute force");
  const auto spec = ReturnSpec::episodic(horizon);
  std::vector<int> phi(cells, 0);
  double best = -std::numeric_limits<double>::infinity();
  while (true) {
    const double v = exact_objective(nmdp, FixedAsm(nu, nmdp.n_actions, phi, horizon), spec, opts).value;
    if (v > best) {
      best = v;
      if (best_phi != nullptr) *best_phi = phi;
    }
    std::size_t k = 0;
    while (k < cells && ++phi[k] == nmdp.n_actions) phi[k++] = 0;
    if (k == cells) break;
  }
  return best;
}

IdealAsdReport ideal_asd_optimality_check(const EnumerableNmdp& nmdp, const AgentStateDynamics& nu, int horizon,
                                          const EnumerationOptions& opts) {
  IdealAsdReport report;
  report.witness = find_ideality_violation(nmdp, nu, horizon);
  report.ideal = !report.witness.has_value();
  report.hr_value = history_optimal_value(nmdp, horizon, opts);
  report.asm_value = asm_optimal_value(nmdp, nu, horizon, &report.best_phi, opts);
  report.gap = report.hr_value - report.asm_value;
  return report;
}

AgentStateDynamics toggle_latch_tracker() {
  AgentStateDynamics d;
  d.n_states = 2;
  d.nu = [](const StepContext& ctx, std::span<double> out) {
    const int s = ctx.t == 1 ? ctx.obs.index : (ctx.s_prev ^ ctx.a_prev);
    out[0] = s == 0 ? 1.0 : 0.0;
    out[1] = s == 1 ? 1.0 : 0.0;
  };
  return d;
}

AgentStateDynamics forgetful_dynamics(int n_states) {
  if (n_states < 1) throw ConfigError("need at least one agent state");
  AgentStateDynamics d;
  d.n_states = n_states;
  d.nu = [](const StepContext&, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    out[0] = 1.0;
  };
  return d;
}

}  // namespace asmpg
