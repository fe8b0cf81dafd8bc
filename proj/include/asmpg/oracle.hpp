#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "asmpg/constants.hpp"
#include "asmpg/core.hpp"
#include "asmpg/grad.hpp"
#include "asmpg/linalg.hpp"
#include "asmpg/nmdp.hpp"
#include "asmpg/policy.hpp"

namespace asmpg {

struct EnumerationOptions {
  /// Largest number of leaves (or history nodes) a single traversal may visit.
  double budget = 1e7;
  /// OpenMP threads for branch-parallel traversals; 0 = runtime default.
  int workers = 0;
  /// Skip branches whose probability falls below prune_below (off in exact mode).
  bool prune = false;
  double prune_below = 1e-15;
};

struct WeightedTrajectory {
  Trajectory trajectory;
  double probability = 0.0;
};

/// (|O| |S| |A|)^length, the leaf count of a full trajectory enumeration.
double enumeration_leaves(const EnumerableNmdp& nmdp, int n_agent_states, int length);

/// Throws BudgetError when required > budget.
void check_budget(double required, double budget, const std::string& what);

using TrajectoryVisitor = std::function<void(const Trajectory& traj, double probability)>;

/// Depth-first visit of every trajectory of the given length with positive probability.
void for_each_trajectory(const EnumerableNmdp& nmdp, const AsmKernel& policy, int length,
                         const TrajectoryVisitor& visit, const EnumerationOptions& opts = {});

std::vector<WeightedTrajectory> enumerate(const EnumerableNmdp& nmdp, const AsmKernel& policy, int length,
                                          const EnumerationOptions& opts = {});

struct ObjectiveValue {
  double value = 0.0;
  /// r_max gamma^T / (1 - gamma) in discounted mode, 0 otherwise.
  double tail_bound = 0.0;
};

/// Expected (discounted, truncated) return, by a forward recursion over
/// observation-action histories that marginalizes the agent state.
ObjectiveValue exact_objective(const EnumerableNmdp& nmdp, const AsmKernel& policy, const ReturnSpec& spec,
                               const EnumerationOptions& opts = {});

/// Exact expectation of the estimator over all trajectories (tabular policies).
std::vector<double> exact_gradient(const EnumerableNmdp& nmdp, const ParametricAsm& policy, const ReturnSpec& spec,
                                   const EnumerationOptions& opts = {},
                                   EstimatorForm form = EstimatorForm::kRewardToGo);

/// sum over nodes of P(node) gamma^{t-1} Q_t score_t, with Q computed bottom-up.
std::vector<double> q_form_gradient(const EnumerableNmdp& nmdp, const ParametricAsm& policy, const ReturnSpec& spec,
                                    const EnumerationOptions& opts = {});

/// Central differences of exact_objective, one coordinate per task.
std::vector<double> fd_gradient(const EnumerableNmdp& nmdp, const ParametricAsm& policy, const ReturnSpec& spec,
                                double h = 1e-5, const EnumerationOptions& opts = {});

/// Full central-difference Hessian of exact_objective (dim <= 200).
SquareMatrix fd_hessian(const EnumerableNmdp& nmdp, const ParametricAsm& policy, const ReturnSpec& spec,
                        double h = 1e-4, const EnumerationOptions& opts = {});

double fd_hessian_norm(const EnumerableNmdp& nmdp, const ParametricAsm& policy, const ReturnSpec& spec,
                       double h = 1e-4, const EnumerationOptions& opts = {});

/// History prefix with the dummy pair at index 0 of agent_states and actions.
/// For Q_t: t observations, t+1 agent states and t+1 actions.
/// For V_t: t observations, t agent states and t actions.
struct HistoryPrefix {
  std::vector<int> obs;
  std::vector<int> agent_states{kDummyState};
  std::vector<int> actions{kDummyAction};

  int t() const { return static_cast<int>(obs.size()); }
};

/// E[sum_{t' >= t} gamma^{t'-t} r_{t'} | prefix] (gamma = 1 in episodic mode).
double exact_q(const EnumerableNmdp& nmdp, const AsmKernel& policy, const HistoryPrefix& prefix,
               const ReturnSpec& spec, const EnumerationOptions& opts = {});

double exact_v(const EnumerableNmdp& nmdp, const AsmKernel& policy, const HistoryPrefix& prefix,
               const ReturnSpec& spec, const EnumerationOptions& opts = {});

/// Gradient of exact_v at a fixed prefix, as the conditional score-weighted expectation.
std::vector<double> exact_v_gradient(const EnumerableNmdp& nmdp, const ParametricAsm& policy,
                                     const HistoryPrefix& prefix, const ReturnSpec& spec,
                                     const EnumerationOptions& opts = {});

/// r_max gamma^T / (1 - gamma): what the rewards after step T can add.
double discounted_tail_bound(double r_max, double gamma, int truncation);

/// Bound on || grad J_{T2} - grad J_{T1} || for T1 < T2: r_max G sum_{t=T1+1}^{T2} t gamma^{t-1}.
double discounted_gradient_tail_bound(double r_max, double G, double gamma, int t1, int t2);

/// Agent-state dynamics nu used on its own (without a control policy).
struct AgentStateDynamics {
  int n_states = 1;
  std::function<void(const StepContext& ctx, std::span<double> out)> nu;
};

/// nu followed by a deterministic control map phi(s, t).
class FixedAsm final : public AsmKernel {
 public:
  /// phi[(t - 1) * |S| + s] is the action at agent state s and time t.
  FixedAsm(AgentStateDynamics dynamics, int n_actions, std::vector<int> phi, int horizon);

  int n_agent_states() const override { return dynamics_.n_states; }
  int n_actions() const override { return n_actions_; }
  void joint_probs(const StepContext& ctx, std::span<double> out) const override;

 private:
  AgentStateDynamics dynamics_;
  int n_actions_;
  std::vector<int> phi_;
  int horizon_;
};

/// Pair of histories that share (S_t, A_t) but disagree on reward or next-observation law.
struct IdealityWitness {
  int t = 0;
  int s = 0;
  int a = 0;
  /// "reward" or "transition".
  std::string kind;
  double discrepancy = 0.0;
  std::vector<int> obs_a, actions_a;
  std::vector<int> obs_b, actions_b;
};

struct IdealAsdReport {
  /// Whether nu satisfies the ideality precondition on all reachable histories.
  bool ideal = false;
  std::optional<IdealityWitness> witness;
  double asm_value = 0.0;
  double hr_value = 0.0;
  double gap = 0.0;
  std::vector<int> best_phi;

  nlohmann::json to_json() const;
};

/// Exhaustive ideality scan; returns the first violation found, if any.
std::optional<IdealityWitness> find_ideality_violation(const EnumerableNmdp& nmdp, const AgentStateDynamics& nu,
                                                       int horizon, double tol = 1e-12);

/// Best history-dependent value by expectimax over the history tree.
double history_optimal_value(const EnumerableNmdp& nmdp, int horizon, const EnumerationOptions& opts = {});

/// Best value over deterministic phi: S x [H] -> A on top of nu.
double asm_optimal_value(const EnumerableNmdp& nmdp, const AgentStateDynamics& nu, int horizon,
                         std::vector<int>* best_phi = nullptr, const EnumerationOptions& opts = {});

/// Runs the precondition scan and both brute-force maximizations.
IdealAsdReport ideal_asd_optimality_check(const EnumerableNmdp& nmdp, const AgentStateDynamics& nu, int horizon,
                                          const EnumerationOptions& opts = {});

/// Tracker for toggle_latch_pomdp: s_1 = o_1, then s_t = s_{t-1} xor a_{t-1}.
AgentStateDynamics toggle_latch_tracker();

/// Keeps the agent state at 0 whatever happens.
AgentStateDynamics forgetful_dynamics(int n_states);

}  // namespace asmpg
