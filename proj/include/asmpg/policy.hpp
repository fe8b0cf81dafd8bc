#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "asmpg/core.hpp"
#include "asmpg/linalg.hpp"
#include "asmpg/mlp.hpp"
#include "asmpg/rng.hpp"

namespace asmpg {

/// Observation as seen by a policy: a discrete index, plus real features on the
/// network path for continuous environments.
struct ObsView {
  int index = 0;
  std::span<const double> features{};
};

/// Conditioning (S_{t-1}, A_{t-1}, O_t) of the step-t kernel.
struct StepContext {
  int s_prev = kDummyState;
  int a_prev = kDummyAction;
  ObsView obs{};
  int t = 1;
};

/// (s_{t-1}, a_{t-1}, o_t) -> (s_t, a_t) at time t.
struct StepTransition {
  int s_prev = kDummyState;
  int a_prev = kDummyAction;
  ObsView obs{};
  int s = 0;
  int a = 0;
  int t = 1;

  StepContext context() const { return {s_prev, a_prev, obs, t}; }
};

/// Step t (1-based) of a recorded trajectory.
StepTransition transition_at(const Trajectory& traj, std::size_t t);

struct StepSample {
  int s = 0;
  int a = 0;
  double log_prob = 0.0;
};

/// Numerically stable log-softmax; the log-sum-exp uses log1p around the max term.
void log_softmax(std::span<const double> logits, std::span<double> out);
void softmax(std::span<const double> logits, std::span<double> out);

/// Any ASM policy viewed as the combined kernel pi_t(s, a | s~, a~, o).
class AsmKernel {
 public:
  virtual ~AsmKernel() = default;
  virtual int n_agent_states() const = 0;
  virtual int n_actions() const = 0;
  /// Row-major |S| x |A| probabilities of (S_t, A_t).
  virtual void joint_probs(const StepContext& ctx, std::span<double> out) const = 0;
  virtual StepSample sample(Rng& rng, const StepContext& ctx) const;
};

enum class PolicyKind { kTabular, kJointTabular, kMlp };

std::string to_string(PolicyKind kind);
PolicyKind policy_kind_from_string(const std::string& name);

struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Structure metadata that maps the flat parameter vector onto its blocks.
struct PolicyLayout {
  PolicyKind kind = PolicyKind::kTabular;
  Alphabet alphabet;
  /// 1 for stationary/shared parameters, H for per-timestep blocks.
  int time_blocks = 1;
  /// Network path: real observation dimension (0 means one-hot over n_obs).
  int feature_dim = 0;
  int hidden = 0;
  double obs_scale = 1.0;
  std::vector<ParamBlock> blocks;

  std::size_t dim() const;
  nlohmann::json to_json() const;
  static PolicyLayout from_json(const nlohmann::json& j);
};

/// ASM policy with a differentiable parameter vector theta.
class ParametricAsm : public AsmKernel {
 public:
  const PolicyLayout& layout() const { return layout_; }
  const Alphabet& alphabet() const { return layout_.alphabet; }
  PolicyKind kind() const { return layout_.kind; }
  int n_agent_states() const override { return layout_.alphabet.n_agent_states; }
  int n_actions() const override { return layout_.alphabet.n_actions; }

  std::size_t dim() const { return params_.size(); }
  std::span<const double> params() const { return params_; }
  std::span<double> mutable_params() { return params_; }
  void set_params(std::span<const double> values);

  /// log pi_t(s, a | s~, a~, o).
  virtual double log_prob(const StepTransition& tr) const = 0;
  /// grad += weight * grad_theta log pi_t(s, a | s~, a~, o).
  virtual void add_score(const StepTransition& tr, double weight, std::span<double> grad) const = 0;
  std::vector<double> score(const StepTransition& tr) const;

  /// grad += sum_t weights[t-1] * score_t over a whole episode. Same result as
  /// per-step add_score calls; network policies batch the steps.
  virtual void add_episode_score(const Trajectory& traj, std::span<const double> weights,
                                 std::span<double> grad) const;
  /// grad += weight * sum_t barrier gradient at step t of the episode.
  virtual void add_episode_barrier(const Trajectory& traj, double weight, std::span<double> grad) const;

  /// Sum over outcomes of log-probabilities at one visited context, summed over the
  /// kernel's heads (nu at the context and phi at state s for factorized policies).
  virtual double barrier_value(const StepContext& ctx, int s) const = 0;
  virtual void add_barrier_grad(const StepContext& ctx, int s, double weight, std::span<double> grad) const = 0;

  /// Uniform bound G on the score norm, when one is known for the parametrization.
  virtual std::optional<double> score_bound() const { return std::nullopt; }
  /// Uniform bound M on the Hessian spectral norm of log pi.
  virtual std::optional<double> hessian_bound() const { return std::nullopt; }
  /// Hessian of log pi restricted to the active parameter slice (tabular only).
  virtual SquareMatrix hessian_log_prob(const StepTransition& tr) const;

  virtual std::unique_ptr<ParametricAsm> clone() const = 0;

  /// Throws BoundsError unless the context indices fit the alphabet and time blocks.
  void check_context(const StepContext& ctx) const;
  void check_transition(const StepTransition& tr) const;

 protected:
  int time_block(int t) const;

  PolicyLayout layout_;
  std::vector<double> params_;
};

/// nu_t(s | s~, a~, o) * phi_t(a | s) with separately parametrized heads.
class FactorizedAsm : public ParametricAsm {
 public:
  virtual void nu_dist(const StepContext& ctx, std::span<double> out) const = 0;
  virtual void phi_dist(int s, int t, std::span<double> out) const = 0;

  void joint_probs(const StepContext& ctx, std::span<double> out) const override;
  StepSample sample(Rng& rng, const StepContext& ctx) const override;
};

/// Separate softmax tables for nu (logits per (s~, a~, o) -> S) and phi (per s -> A).
class TabularSoftmaxAsm final : public FactorizedAsm {
 public:
  TabularSoftmaxAsm(const Alphabet& alphabet, int time_blocks = 1);

  void nu_dist(const StepContext& ctx, std::span<double> out) const override;
  void phi_dist(int s, int t, std::span<double> out) const override;
  double log_prob(const StepTransition& tr) const override;
  void add_score(const StepTransition& tr, double weight, std::span<double> grad) const override;
  double barrier_value(const StepContext& ctx, int s) const override;
  void add_barrier_grad(const StepContext& ctx, int s, double weight, std::span<double> grad) const override;
  /// Each head contributes at most sqrt(2), so the factorized score is bounded by 2.
  std::optional<double> score_bound() const override { return 2.0; }
  std::optional<double> hessian_bound() const override { return 1.0; }
  SquareMatrix hessian_log_prob(const StepTransition& tr) const override;
  std::unique_ptr<ParametricAsm> clone() const override { return std::make_unique<TabularSoftmaxAsm>(*this); }

  std::size_t nu_offset(int s_prev, int a_prev, int o, int t) const;
  std::size_t phi_offset(int s, int t) const;

 private:
  std::size_t phi_base_ = 0;
};

/// One softmax over (s, a) per (s~, a~, o, t): the combined-kernel parametrization
/// for which the score norm is at most sqrt(2) and the Hessian norm at most 1.
class JointSoftmaxAsm final : public ParametricAsm {
 public:
  JointSoftmaxAsm(const Alphabet& alphabet, int time_blocks = 1);

  void joint_probs(const StepContext& ctx, std::span<double> out) const override;
  double log_prob(const StepTransition& tr) const override;
  void add_score(const StepTransition& tr, double weight, std::span<double> grad) const override;
  double barrier_value(const StepContext& ctx, int s) const override;
  void add_barrier_grad(const StepContext& ctx, int s, double weight, std::span<double> grad) const override;
  std::optional<double> score_bound() const override;
  std::optional<double> hessian_bound() const override { return 1.0; }
  SquareMatrix hessian_log_prob(const StepTransition& tr) const override;
  std::unique_ptr<ParametricAsm> clone() const override { return std::make_unique<JointSoftmaxAsm>(*this); }

  std::size_t offset(int s_prev, int a_prev, int o, int t) const;
};

/// Two tanh MLPs: state update (one-hot s~ + one-hot a~ + encoded o -> |S| logits,
/// hidden 2h, 2h, h) and control (one-hot s -> |A| logits, hidden h, h).
class MlpAsm final : public FactorizedAsm {
 public:
  /// feature_dim > 0 selects real observation features scaled by obs_scale.
  MlpAsm(const Alphabet& alphabet, int hidden, int feature_dim = 0, double obs_scale = 1.0);

  void nu_dist(const StepContext& ctx, std::span<double> out) const override;
  void phi_dist(int s, int t, std::span<double> out) const override;
  double log_prob(const StepTransition& tr) const override;
  void add_score(const StepTransition& tr, double weight, std::span<double> grad) const override;
  double barrier_value(const StepContext& ctx, int s) const override;
  void add_barrier_grad(const StepContext& ctx, int s, double weight, std::span<double> grad) const override;
  void add_episode_score(const Trajectory& traj, std::span<const double> weights,
                         std::span<double> grad) const override;
  void add_episode_barrier(const Trajectory& traj, double weight, std::span<double> grad) const override;
  std::unique_ptr<ParametricAsm> clone() const override { return std::make_unique<MlpAsm>(*this); }

  /// Glorot-uniform weights and zero biases for both networks.
  void initialize(Rng& rng);

  const Mlp& state_net() const { return state_net_; }
  const Mlp& policy_net() const { return policy_net_; }

 private:
  std::vector<double> encode_state_input(const StepContext& ctx) const;
  std::vector<double> encode_policy_input(int s) const;
  /// Batched forward passes over every step of an episode.
  void episode_forward(const Trajectory& traj, Mlp::BatchTape& state_tape, Mlp::BatchTape& policy_tape) const;
  std::span<const double> state_params() const;
  std::span<const double> policy_params() const;

  Mlp state_net_;
  Mlp policy_net_;
};

struct PolicyOptions {
  PolicyKind kind = PolicyKind::kTabular;
  int time_blocks = 1;
  int hidden = 64;
  int feature_dim = 0;
  double obs_scale = 1.0;
};

std::unique_ptr<ParametricAsm> make_policy(const Alphabet& alphabet, const PolicyOptions& options);
std::unique_ptr<ParametricAsm> make_policy(const PolicyLayout& layout);

/// Binary checkpoint: magic, JSON layout descriptor, then the raw theta values.
void save_checkpoint(const std::string& path, const ParametricAsm& policy);
std::unique_ptr<ParametricAsm> load_checkpoint(const std::string& path);

}  // namespace asmpg
