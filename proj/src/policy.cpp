#include "asmpg/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

namespace asmpg {

StepTransition transition_at(const Trajectory& traj, std::size_t t) {
  if (t < 1 || t > traj.length()) {
    throw BoundsError("transition_at: t=" + std::to_string(t) + " outside 1.." + std::to_string(traj.length()));
  }
  StepTransition tr;
  tr.s_prev = traj.agent_states[t - 1];
  tr.a_prev = traj.actions[t - 1];
  tr.obs = {traj.obs[t - 1], traj.features_at(t)};
  tr.s = traj.agent_states[t];
  tr.a = traj.actions[t];
  tr.t = static_cast<int>(t);
  return tr;
}

void log_softmax(std::span<const double> logits, std::span<double> out) {
  const auto max_it = std::max_element(logits.begin(), logits.end());
  const double m = *max_it;
  const auto arg = static_cast<std::size_t>(max_it - logits.begin());
  double rest = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (j != arg) rest += std::exp(logits[j] - m);
  }
  const double lse = m + std::log1p(rest);
  for (std::size_t j = 0; j < logits.size(); ++j) out[j] = logits[j] - lse;
}

void softmax(std::span<const double> logits, std::span<double> out) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) total += (out[j] = std::exp(logits[j] - m));
  for (std::size_t j = 0; j < logits.size(); ++j) out[j] /= total;
}

namespace {

// d/dz sum_j log softmax(z)_j = 1 - n p.
void add_barrier_logit_grad(std::span<const double> probs, double weight, double* grad) {
  const double n = static_cast<double>(probs.size());
  for (std::size_t j = 0; j < probs.size(); ++j) grad[j] += weight * (1.0 - n * probs[j]);
}

double sum_log_softmax(std::span<const double> logits) {
  std::vector<double> lp(logits.size());
  log_softmax(logits, lp);
  double total = 0.0;
  for (double v : lp) total += v;
  return total;
}

// -(diag(p) - p p^T) written into the [at, at + n) diagonal block.
void write_softmax_hessian(std::span<const double> p, std::size_t at, SquareMatrix& h) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < p.size(); ++j) {
      h(at + i, at + j) = -((i == j ? p[i] : 0.0) - p[i] * p[j]);
    }
  }
}

}  // namespace

StepSample AsmKernel::sample(Rng& rng, const StepContext& ctx) const {
  const int A = n_actions();
  std::vector<double> probs(static_cast<std::size_t>(n_agent_states()) * A);
  joint_probs(ctx, probs);
  const int idx = rng.categorical(probs);
  return {idx / A, idx % A, std::log(probs[idx])};
}

std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kTabular:
      return "tabular";
    case PolicyKind::kJointTabular:
      return "joint_tabular";
    case PolicyKind::kMlp:
      return "mlp";
  }
  return "unknown";
}

PolicyKind policy_kind_from_string(const std::string& name) {
  if (name == "tabular") return PolicyKind::kTabular;
  if (name == "joint_tabular") return PolicyKind::kJointTabular;
  if (name == "mlp") return PolicyKind::kMlp;
  throw ConfigError("unknown parametrization '" + name + "' (expected tabular, joint_tabular or mlp)");
}

// ---------------------------------------------------------------------------
// Layout

std::size_t PolicyLayout::dim() const {
  std::size_t d = 0;
  for (const auto& b : blocks) d += b.size;
  return d;
}

nlohmann::json PolicyLayout::to_json() const {
  nlohmann::json j;
  j["parametrization"] = to_string(kind);
  j["n_obs"] = alphabet.n_obs;
  j["n_actions"] = alphabet.n_actions;
  j["n_agent_states"] = alphabet.n_agent_states;
  j["time_blocks"] = time_blocks;
  j["feature_dim"] = feature_dim;
  j["hidden"] = hidden;
  j["obs_scale"] = obs_scale;
  j["dim"] = dim();
  return j;
}

PolicyLayout PolicyLayout::from_json(const nlohmann::json& j) {
  PolicyLayout layout;
  try {
    layout.kind = policy_kind_from_string(j.at("parametrization").get<std::string>());
    layout.alphabet.n_obs = j.at("n_obs").get<int>();
    layout.alphabet.n_actions = j.at("n_actions").get<int>();
    layout.alphabet.n_agent_states = j.at("n_agent_states").get<int>();
    layout.time_blocks = j.at("time_blocks").get<int>();
    layout.feature_dim = j.at("feature_dim").get<int>();
    layout.hidden = j.at("hidden").get<int>();
    layout.obs_scale = j.at("obs_scale").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed policy layout: ") + e.what());
  }
  return layout;
}

// ---------------------------------------------------------------------------
// ParametricAsm

void ParametricAsm::set_params(std::span<const double> values) {
  if (values.size() != params_.size()) {
    throw ShapeError("set_params: expected " + std::to_string(params_.size()) + " values, got " +
                     std::to_string(values.size()));
  }
  std::copy(values.begin(), values.end(), params_.begin());
}

std::vector<double> ParametricAsm::score(const StepTransition& tr) const {
  std::vector<double> g(dim(), 0.0);
  add_score(tr, 1.0, g);
  return g;
}

void ParametricAsm::add_episode_score(const Trajectory& traj, std::span<const double> weights,
                                      std::span<double> grad) const {
  if (weights.size() != traj.length()) throw ShapeError("one weight per step is required");
  for (std::size_t t = 1; t <= traj.length(); ++t) {
    if (weights[t - 1] != 0.0) add_score(transition_at(traj, t), weights[t - 1], grad);
  }
}

void ParametricAsm::add_episode_barrier(const Trajectory& traj, double weight, std::span<double> grad) const {
  for (std::size_t t = 1; t <= traj.length(); ++t) {
    const auto tr = transition_at(traj, t);
    add_barrier_grad(tr.context(), tr.s, weight, grad);
  }
}

SquareMatrix ParametricAsm::hessian_log_prob(const StepTransition&) const {
  throw UnsupportedError("hessian_log_prob is only available for tabular parametrizations");
}

int ParametricAsm::time_block(int t) const {
  if (t < 1) throw BoundsError("time index must be >= 1");
  if (layout_.time_blocks == 1) return 0;
  if (t > layout_.time_blocks) {
    throw BoundsError("time index " + std::to_string(t) + " exceeds the policy's " +
                      std::to_string(layout_.time_blocks) + " time blocks");
  }
  return t - 1;
}

void ParametricAsm::check_context(const StepContext& ctx) const {
  const auto& ab = layout_.alphabet;
  if (ctx.s_prev < 0 || ctx.s_prev >= ab.n_agent_states) {
    throw BoundsError("agent state " + std::to_string(ctx.s_prev) + " out of range");
  }
  if (ctx.a_prev < 0 || ctx.a_prev >= ab.n_actions) {
    throw BoundsError("action " + std::to_string(ctx.a_prev) + " out of range");
  }
  if (layout_.feature_dim > 0) {
    if (static_cast<int>(ctx.obs.features.size()) != layout_.feature_dim) {
      throw BoundsError("observation feature vector has the wrong dimension");
    }
  } else if (ctx.obs.index < 0 || ctx.obs.index >= ab.n_obs) {
    throw BoundsError("observation " + std::to_string(ctx.obs.index) + " out of range");
  }
  time_block(ctx.t);
}

void ParametricAsm::check_transition(const StepTransition& tr) const {
  check_context(tr.context());
  if (tr.s < 0 || tr.s >= layout_.alphabet.n_agent_states) {
    throw BoundsError("agent state " + std::to_string(tr.s) + " out of range");
  }
  if (tr.a < 0 || tr.a >= layout_.alphabet.n_actions) {
    throw BoundsError("action " + std::to_string(tr.a) + " out of range");
  }
}

// ---------------------------------------------------------------------------
// FactorizedAsm

void FactorizedAsm::joint_probs(const StepContext& ctx, std::span<double> out) const {
  const int S = n_agent_states();
  const int A = n_actions();
  std::vector<double> nu(S), phi(A);
  nu_dist(ctx, nu);
  for (int s = 0; s < S; ++s) {
    phi_dist(s, ctx.t, phi);
    for (int a = 0; a < A; ++a) out[static_cast<std::size_t>(s) * A + a] = nu[s] * phi[a];
  }
}

StepSample FactorizedAsm::sample(Rng& rng, const StepContext& ctx) const {
  std::vector<double> nu(n_agent_states()), phi(n_actions());
  nu_dist(ctx, nu);
  const int s = rng.categorical(nu);
  phi_dist(s, ctx.t, phi);
  const int a = rng.categorical(phi);
  return {s, a, std::log(nu[s]) + std::log(phi[a])};
}

// ---------------------------------------------------------------------------
// TabularSoftmaxAsm

TabularSoftmaxAsm::TabularSoftmaxAsm(const Alphabet& alphabet, int time_blocks) {
  alphabet.validate();
  if (time_blocks < 1) throw ConfigError("time_blocks must be >= 1");
  const std::size_t S = alphabet.n_agent_states;
  const std::size_t A = alphabet.n_actions;
  const std::size_t O = alphabet.n_obs;
  const std::size_t T = time_blocks;
  layout_.kind = PolicyKind::kTabular;
  layout_.alphabet = alphabet;
  layout_.time_blocks = time_blocks;
  phi_base_ = T * S * A * O * S;
  layout_.blocks = {{"nu", 0, phi_base_}, {"phi", phi_base_, T * S * A}};
  params_.assign(layout_.dim(), 0.0);
}

std::size_t TabularSoftmaxAsm::nu_offset(int s_prev, int a_prev, int o, int t) const {
  const auto& ab = layout_.alphabet;
  const std::size_t tb = time_block(t);
  return (((tb * ab.n_agent_states + s_prev) * ab.n_actions + a_prev) * ab.n_obs + o) * ab.n_agent_states;
}

std::size_t TabularSoftmaxAsm::phi_offset(int s, int t) const {
  const auto& ab = layout_.alphabet;
  const std::size_t tb = time_block(t);
  return phi_base_ + (tb * ab.n_agent_states + s) * ab.n_actions;
}

void TabularSoftmaxAsm::nu_dist(const StepContext& ctx, std::span<double> out) const {
  check_context(ctx);
  const std::size_t off = nu_offset(ctx.s_prev, ctx.a_prev, ctx.obs.index, ctx.t);
  softmax(std::span<const double>(params_).subspan(off, n_agent_states()), out);
}

void TabularSoftmaxAsm::phi_dist(int s, int t, std::span<double> out) const {
  if (s < 0 || s >= n_agent_states()) throw BoundsError("agent state out of range");
  softmax(std::span<const double>(params_).subspan(phi_offset(s, t), n_actions()), out);
}

double TabularSoftmaxAsm::log_prob(const StepTransition& tr) const {
  check_transition(tr);
  const int S = n_agent_states();
  const int A = n_actions();
  std::vector<double> lnu(S), lphi(A);
  log_softmax(std::span<const double>(params_).subspan(nu_offset(tr.s_prev, tr.a_prev, tr.obs.index, tr.t), S), lnu);
  log_softmax(std::span<const double>(params_).subspan(phi_offset(tr.s, tr.t), A), lphi);
  return lnu[tr.s] + lphi[tr.a];
}

void TabularSoftmaxAsm::add_score(const StepTransition& tr, double weight, std::span<double> grad) const {
  check_transition(tr);
  const int S = n_agent_states();
  const int A = n_actions();
  const std::size_t nu_off = nu_offset(tr.s_prev, tr.a_prev, tr.obs.index, tr.t);
  const std::size_t phi_off = phi_offset(tr.s, tr.t);
  std::vector<double> p(std::max(S, A));
  softmax(std::span<const double>(params_).subspan(nu_off, S), std::span<double>(p).first(S));
  for (int j = 0; j < S; ++j) grad[nu_off + j] += weight * ((j == tr.s ? 1.0 : 0.0) - p[j]);
  softmax(std::span<const double>(params_).subspan(phi_off, A), std::span<double>(p).first(A));
  for (int j = 0; j < A; ++j) grad[phi_off + j] += weight * ((j == tr.a ? 1.0 : 0.0) - p[j]);
}

double TabularSoftmaxAsm::barrier_value(const StepContext& ctx, int s) const {
  check_transition({ctx.s_prev, ctx.a_prev, ctx.obs, s, 0, ctx.t});
  const auto theta = std::span<const double>(params_);
  return sum_log_softmax(theta.subspan(nu_offset(ctx.s_prev, ctx.a_prev, ctx.obs.index, ctx.t), n_agent_states())) +
         sum_log_softmax(theta.subspan(phi_offset(s, ctx.t), n_actions()));
}

void TabularSoftmaxAsm::add_barrier_grad(const StepContext& ctx, int s, double weight, std::span<double> grad) const {
  check_transition({ctx.s_prev, ctx.a_prev, ctx.obs, s, 0, ctx.t});
  const int S = n_agent_states();
  const int A = n_actions();
  const std::size_t nu_off = nu_offset(ctx.s_prev, ctx.a_prev, ctx.obs.index, ctx.t);
  const std::size_t phi_off = phi_offset(s, ctx.t);
  std::vector<double> p(S);
  softmax(std::span<const double>(params_).subspan(nu_off, S), p);
  add_barrier_logit_grad(p, weight, grad.data() + nu_off);
  p.resize(A);
  softmax(std::span<const double>(params_).subspan(phi_off, A), p);
  add_barrier_logit_grad(p, weight, grad.data() + phi_off);
}

SquareMatrix TabularSoftmaxAsm::hessian_log_prob(const StepTransition& tr) const {
  check_transition(tr);
  const int S = n_agent_states();
  const int A = n_actions();
  std::vector<double> nu(S), phi(A);
  nu_dist(tr.context(), nu);
  phi_dist(tr.s, tr.t, phi);
  SquareMatrix h(S + A);
  write_softmax_hessian(nu, 0, h);
  write_softmax_hessian(phi, S, h);
  return h;
}

// ---------------------------------------------------------------------------
// JointSoftmaxAsm

JointSoftmaxAsm::JointSoftmaxAsm(const Alphabet& alphabet, int time_blocks) {
  alphabet.validate();
  if (time_blocks < 1) throw ConfigError("time_blocks must be >= 1");
  const std::size_t S = alphabet.n_agent_states;
  const std::size_t A = alphabet.n_actions;
  const std::size_t O = alphabet.n_obs;
  layout_.kind = PolicyKind::kJointTabular;
  layout_.alphabet = alphabet;
  layout_.time_blocks = time_blocks;
  layout_.blocks = {{"joint", 0, static_cast<std::size_t>(time_blocks) * S * A * O * S * A}};
  params_.assign(layout_.dim(), 0.0);
}

std::optional<double> JointSoftmaxAsm::score_bound() const { return std::sqrt(2.0); }

std::size_t JointSoftmaxAsm::offset(int s_prev, int a_prev, int o, int t) const {
  const auto& ab = layout_.alphabet;
  const std::size_t tb = time_block(t);
  const std::size_t outcomes = static_cast<std::size_t>(ab.n_agent_states) * ab.n_actions;
  return (((tb * ab.n_agent_states + s_prev) * ab.n_actions + a_prev) * ab.n_obs + o) * outcomes;
}

void JointSoftmaxAsm::joint_probs(const StepContext& ctx, std::span<double> out) const {
  check_context(ctx);
  const std::size_t n = static_cast<std::size_t>(n_agent_states()) * n_actions();
  softmax(std::span<const double>(params_).subspan(offset(ctx.s_prev, ctx.a_prev, ctx.obs.index, ctx.t), n), out);
}

double JointSoftmaxAsm::log_prob(const StepTransition& tr) const {
  check_transition(tr);
  const std::size_t n = static_cast<std::size_t>(n_agent_states()) * n_actions();
  std::vector<double> lp(n);
  log_softmax(std::span<const double>(params_).subspan(offset(tr.s_prev, tr.a_prev, tr.obs.index, tr.t), n), lp);
  return lp[static_cast<std::size_t>(tr.s) * n_actions() + tr.a];
}

void JointSoftmaxAsm::add_score(const StepTransition& tr, double weight, std::span<double> grad) const {
  check_transition(tr);
  const std::size_t n = static_cast<std::size_t>(n_agent_states()) * n_actions();
  const std::size_t off = offset(tr.s_prev, tr.a_prev, tr.obs.index, tr.t);
  const std::size_t y = static_cast<std::size_t>(tr.s) * n_actions() + tr.a;
  std::vector<double> p(n);
  softmax(std::span<const double>(params_).subspan(off, n), p);
  for (std::size_t j = 0; j < n; ++j) grad[off + j] += weight * ((j == y ? 1.0 : 0.0) - p[j]);
}

double JointSoftmaxAsm::barrier_value(const StepContext& ctx, int) const {
  check_context(ctx);
  const std::size_t n = static_cast<std::size_t>(n_agent_states()) * n_actions();
  return sum_log_softmax(std::span<const double>(params_).subspan(offset(ctx.s_prev, ctx.a_prev, ctx.obs.index, ctx.t), n));
}

void JointSoftmaxAsm::add_barrier_grad(const StepContext& ctx, int, double weight, std::span<double> grad) const {
  check_context(ctx);
  const std::size_t n = static_cast<std::size_t>(n_agent_states()) * n_actions();
  const std::size_t off = offset(ctx.s_prev, ctx.a_prev, ctx.obs.index, ctx.t);
  std::vector<double> p(n);
  softmax(std::span<const double>(params_).subspan(off, n), p);
  add_barrier_logit_grad(p, weight, grad.data() + off);
}

SquareMatrix JointSoftmaxAsm::hessian_log_prob(const StepTransition& tr) const {
  check_transition(tr);
  const std::size_t n = static_cast<std::size_t>(n_agent_states()) * n_actions();
  std::vector<double> p(n);
  joint_probs(tr.context(), p);
  SquareMatrix h(n);
  write_softmax_hessian(p, 0, h);
  return h;
}

// ---------------------------------------------------------------------------
// MlpAsm

MlpAsm::MlpAsm(const Alphabet& alphabet, int hidden, int feature_dim, double obs_scale) {
  alphabet.validate();
  if (hidden < 1) throw ConfigError("hidden width d_h must be >= 1");
  if (feature_dim < 0) throw ConfigError("feature_dim must be >= 0");
  const int S = alphabet.n_agent_states;
  const int A = alphabet.n_actions;
  const int obs_width = feature_dim > 0 ? feature_dim : alphabet.n_obs;
  state_net_ = Mlp({S + A + obs_width, 2 * hidden, 2 * hidden, hidden, S});
  policy_net_ = Mlp({S, hidden, hidden, A});
  layout_.kind = PolicyKind::kMlp;
  layout_.alphabet = alphabet;
  layout_.time_blocks = 1;
  layout_.feature_dim = feature_dim;
  layout_.hidden = hidden;
  layout_.obs_scale = obs_scale;
  layout_.blocks = {{"state_net", 0, state_net_.num_params()},
                    {"policy_net", state_net_.num_params(), policy_net_.num_params()}};
  params_.assign(layout_.dim(), 0.0);
}

void MlpAsm::initialize(Rng& rng) {
  state_net_.init_glorot(std::span<double>(params_).first(state_net_.num_params()), rng);
  policy_net_.init_glorot(std::span<double>(params_).subspan(state_net_.num_params()), rng);
}

std::span<const double> MlpAsm::state_params() const {
  return std::span<const double>(params_).first(state_net_.num_params());
}

std::span<const double> MlpAsm::policy_params() const {
  return std::span<const double>(params_).subspan(state_net_.num_params());
}

std::vector<double> MlpAsm::encode_state_input(const StepContext& ctx) const {
  const int S = n_agent_states();
  const int A = n_actions();
  std::vector<double> x(state_net_.input_dim(), 0.0);
  x[ctx.s_prev] = 1.0;
  x[S + ctx.a_prev] = 1.0;
  if (layout_.feature_dim > 0) {
    for (int i = 0; i < layout_.feature_dim; ++i) x[S + A + i] = ctx.obs.features[i] * layout_.obs_scale;
  } else {
    x[S + A + ctx.obs.index] = 1.0;
  }
  return x;
}

std::vector<double> MlpAsm::encode_policy_input(int s) const {
  std::vector<double> x(n_agent_states(), 0.0);
  x[s] = 1.0;
  return x;
}

void MlpAsm::nu_dist(const StepContext& ctx, std::span<double> out) const {
  check_context(ctx);
  Mlp::Tape tape;
  state_net_.forward(state_params(), encode_state_input(ctx), tape);
  softmax(tape.values.back(), out);
}

void MlpAsm::phi_dist(int s, int t, std::span<double> out) const {
  if (s < 0 || s >= n_agent_states()) throw BoundsError("agent state out of range");
  time_block(t);
  Mlp::Tape tape;
  policy_net_.forward(policy_params(), encode_policy_input(s), tape);
  softmax(tape.values.back(), out);
}

double MlpAsm::log_prob(const StepTransition& tr) const {
  check_transition(tr);
  Mlp::Tape tape;
  std::vector<double> lnu(n_agent_states()), lphi(n_actions());
  state_net_.forward(state_params(), encode_state_input(tr.context()), tape);
  log_softmax(tape.values.back(), lnu);
  policy_net_.forward(policy_params(), encode_policy_input(tr.s), tape);
  log_softmax(tape.values.back(), lphi);
  return lnu[tr.s] + lphi[tr.a];
}

void MlpAsm::add_score(const StepTransition& tr, double weight, std::span<double> grad) const {
  check_transition(tr);
  const int S = n_agent_states();
  const int A = n_actions();
  Mlp::Tape tape;
  std::vector<double> d(S);
  state_net_.forward(state_params(), encode_state_input(tr.context()), tape);
  softmax(tape.values.back(), d);
  for (int j = 0; j < S; ++j) d[j] = (j == tr.s ? 1.0 : 0.0) - d[j];
  state_net_.backward(state_params(), tape, d, weight, grad.first(state_net_.num_params()));

  d.assign(A, 0.0);
  policy_net_.forward(policy_params(), encode_policy_input(tr.s), tape);
  softmax(tape.values.back(), d);
  for (int j = 0; j < A; ++j) d[j] = (j == tr.a ? 1.0 : 0.0) - d[j];
  policy_net_.backward(policy_params(), tape, d, weight, grad.subspan(state_net_.num_params()));
}

double MlpAsm::barrier_value(const StepContext& ctx, int s) const {
  check_transition({ctx.s_prev, ctx.a_prev, ctx.obs, s, 0, ctx.t});
  Mlp::Tape tape;
  state_net_.forward(state_params(), encode_state_input(ctx), tape);
  double total = sum_log_softmax(tape.values.back());
  policy_net_.forward(policy_params(), encode_policy_input(s), tape);
  return total + sum_log_softmax(tape.values.back());
}

void MlpAsm::add_barrier_grad(const StepContext& ctx, int s, double weight, std::span<double> grad) const {
  check_transition({ctx.s_prev, ctx.a_prev, ctx.obs, s, 0, ctx.t});
  Mlp::Tape tape;
  std::vector<double> p(n_agent_states()), d;
  state_net_.forward(state_params(), encode_state_input(ctx), tape);
  softmax(tape.values.back(), p);
  d.assign(p.size(), 0.0);
  add_barrier_logit_grad(p, 1.0, d.data());
  state_net_.backward(state_params(), tape, d, weight, grad.first(state_net_.num_params()));

  p.assign(n_actions(), 0.0);
  policy_net_.forward(policy_params(), encode_policy_input(s), tape);
  softmax(tape.values.back(), p);
  d.assign(p.size(), 0.0);
  add_barrier_logit_grad(p, 1.0, d.data());
  policy_net_.backward(policy_params(), tape, d, weight, grad.subspan(state_net_.num_params()));
}

void MlpAsm::episode_forward(const Trajectory& traj, Mlp::BatchTape& state_tape,
                             Mlp::BatchTape& policy_tape) const {
  const std::size_t T = traj.length();
  const int S = n_agent_states();
  const std::size_t in = state_net_.input_dim();
  std::vector<double> xs(T * in, 0.0), xp(T * S, 0.0);
  for (std::size_t t = 1; t <= T; ++t) {
    const auto tr = transition_at(traj, t);
    check_transition(tr);
    const auto row = encode_state_input(tr.context());
    std::copy(row.begin(), row.end(), xs.begin() + (t - 1) * in);
    xp[(t - 1) * S + tr.s] = 1.0;
  }
  state_net_.forward_batch(state_params(), xs, static_cast<int>(T), state_tape);
  policy_net_.forward_batch(policy_params(), xp, static_cast<int>(T), policy_tape);
}

void MlpAsm::add_episode_score(const Trajectory& traj, std::span<const double> weights,
                               std::span<double> grad) const {
  const std::size_t T = traj.length();
  if (weights.size() != T) throw ShapeError("one weight per step is required");
  if (T == 0) return;
  const int S = n_agent_states();
  const int A = n_actions();
  Mlp::BatchTape st, pt;
  episode_forward(traj, st, pt);
  std::vector<double> ds(T * S), da(T * A);
  for (std::size_t t = 0; t < T; ++t) {
    const double w = weights[t];
    auto rs = std::span<double>(ds).subspan(t * S, S);
    auto ra = std::span<double>(da).subspan(t * A, A);
    softmax(std::span<const double>(st.values.back()).subspan(t * S, S), rs);
    softmax(std::span<const double>(pt.values.back()).subspan(t * A, A), ra);
    const int s = traj.agent_states[t + 1];
    const int a = traj.actions[t + 1];
    for (int j = 0; j < S; ++j) rs[j] = w * ((j == s ? 1.0 : 0.0) - rs[j]);
    for (int j = 0; j < A; ++j) ra[j] = w * ((j == a ? 1.0 : 0.0) - ra[j]);
  }
  state_net_.backward_batch(state_params(), st, ds, grad.first(state_net_.num_params()));
  policy_net_.backward_batch(policy_params(), pt, da, grad.subspan(state_net_.num_params()));
}

void MlpAsm::add_episode_barrier(const Trajectory& traj, double weight, std::span<double> grad) const {
  const std::size_t T = traj.length();
  if (T == 0) return;
  const int S = n_agent_states();
  const int A = n_actions();
  Mlp::BatchTape st, pt;
  episode_forward(traj, st, pt);
  std::vector<double> ds(T * S, 0.0), da(T * A, 0.0), p(std::max(S, A));
  for (std::size_t t = 0; t < T; ++t) {
    softmax(std::span<const double>(st.values.back()).subspan(t * S, S), std::span<double>(p).first(S));
    add_barrier_logit_grad(std::span<const double>(p).first(S), weight, ds.data() + t * S);
    softmax(std::span<const double>(pt.values.back()).subspan(t * A, A), std::span<double>(p).first(A));
    add_barrier_logit_grad(std::span<const double>(p).first(A), weight, da.data() + t * A);
  }
  state_net_.backward_batch(state_params(), st, ds, grad.first(state_net_.num_params()));
  policy_net_.backward_batch(policy_params(), pt, da, grad.subspan(state_net_.num_params()));
}

// ---------------------------------------------------------------------------
// Factory and checkpoints

std::unique_ptr<ParametricAsm> make_policy(const Alphabet& alphabet, const PolicyOptions& options) {
  switch (options.kind) {
    case PolicyKind::kTabular:
      return std::make_unique<TabularSoftmaxAsm>(alphabet, options.time_blocks);
    case PolicyKind::kJointTabular:
      return std::make_unique<JointSoftmaxAsm>(alphabet, options.time_blocks);
    case PolicyKind::kMlp:
      if (options.time_blocks != 1) throw ConfigError("network policies are stationary (time_blocks must be 1)");
      return std::make_unique<MlpAsm>(alphabet, options.hidden, options.feature_dim, options.obs_scale);
  }
  throw ConfigError("unknown parametrization");
}

std::unique_ptr<ParametricAsm> make_policy(const PolicyLayout& layout) {
  PolicyOptions options;
  options.kind = layout.kind;
  options.time_blocks = layout.time_blocks;
  options.hidden = layout.hidden;
  options.feature_dim = layout.feature_dim;
  options.obs_scale = layout.obs_scale;
  return make_policy(layout.alphabet, options);
}

namespace {
constexpr char kMagic[8] = {'A', 'S', 'M', 'P', 'G', 'C', 'K', '1'};
}

void save_checkpoint(const std::string& path, const ParametricAsm& policy) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open checkpoint for writing: " + path);
  const std::string layout = policy.layout().to_json().dump();
  const std::uint64_t layout_size = layout.size();
  const std::uint64_t count = policy.dim();
  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char*>(&layout_size), sizeof(layout_size));
  out.write(layout.data(), static_cast<std::streamsize>(layout.size()));
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  out.write(reinterpret_cast<const char*>(policy.params().data()), static_cast<std::streamsize>(count * sizeof(double)));
  if (!out) throw ConfigError("failed writing checkpoint: " + path);
}

std::unique_ptr<ParametricAsm> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw ConfigError("not an asmpg checkpoint: " + path);
  std::uint64_t layout_size = 0;
  in.read(reinterpret_cast<char*>(&layout_size), sizeof(layout_size));
  if (!in || layout_size > (1u << 20)) throw ConfigError("corrupt checkpoint header: " + path);
  std::string layout_text(layout_size, '\0');
  in.read(layout_text.data(), static_cast<std::streamsize>(layout_size));
  nlohmann::json layout_json;
  try {
    layout_json = nlohmann::json::parse(layout_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("corrupt checkpoint layout: ") + e.what());
  }
  auto policy = make_policy(PolicyLayout::from_json(layout_json));
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (!in || count != policy->dim()) throw ConfigError("checkpoint parameter count does not match its layout");
  std::vector<double> values(count);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw ConfigError("truncated checkpoint: " + path);
  policy->set_params(values);
  return policy;
}

}  // namespace asmpg
