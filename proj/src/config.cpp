#include "asmpg/config.hpp"

#include <fstream>
#include <set>

namespace asmpg {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError((where.empty() ? key : where + "." + key) + ": unknown key");
  }
}

template <typename T>
void read(const json& obj, const char* key, const std::string& where, T& out) {
  if (!obj.contains(key)) return;
  const std::string field = where.empty() ? key : where + "." + key;
  try {
    const auto& v = obj.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(field + ": expected a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(field + ": expected a string");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(field + ": expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0) {
          throw ConfigError(field + ": expected a nonnegative integer");
        }
      }
    } else {
      if (!v.is_number()) throw ConfigError(field + ": expected a number");
    }
    out = v.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(field + ": " + e.what());
  }
}

Schedule schedule_from_string(const std::string& kind) {
  if (kind == "sgd_constant") return Schedule::kConstant;
  if (kind == "sgd_sqrt_decay") return Schedule::kSqrtDecay;
  if (kind == "sgd_custom") return Schedule::kCustom;
  throw ConfigError("optimizer.kind: unknown optimizer '" + kind +
                    "' (expected adam, sgd_constant, sgd_sqrt_decay or sgd_custom)");
}

}  // namespace

TrainConfig config_from_json(const json& doc) {
  reject_unknown(doc, "", {"version", "env", "policy", "mode", "optimizer", "batch_size", "barrier",
                           "total_env_steps", "max_iterations", "eval_every", "eval_episodes", "seed", "workers",
                           "clip_factor", "exact_metrics", "exact_gradient", "checkpoint_every"});
  if (!doc.contains("version")) throw ConfigError("version: required");
  int version = 0;
  read(doc, "version", "", version);
  if (version != kConfigVersion) {
    throw ConfigError("version: unsupported config version " + std::to_string(version) + " (expected " +
                      std::to_string(kConfigVersion) + ")");
  }
  TrainConfig c;

  if (!doc.contains("env")) throw ConfigError("env: required");
  const auto& env = doc.at("env");
  reject_unknown(env, "env", {"name", "params"});
  if (!env.contains("name")) throw ConfigError("env.name: required");
  read(env, "name", "env", c.env);
  if (c.env.empty()) throw ConfigError("env.name: must not be empty");
  if (env.contains("params")) {
    if (!env.at("params").is_object()) throw ConfigError("env.params: expected an object");
    c.env_params = env.at("params");
  }

  if (doc.contains("policy")) {
    const auto& p = doc.at("policy");
    reject_unknown(p, "policy", {"parametrization", "n_agent_states", "hidden", "time_blocks", "obs_scale",
                                 "init_scale"});
    std::string kind = to_string(c.policy.kind);
    read(p, "parametrization", "policy", kind);
    try {
      c.policy.kind = policy_kind_from_string(kind);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("policy.parametrization: ") + e.what());
    }
    read(p, "n_agent_states", "policy", c.n_agent_states);
    read(p, "hidden", "policy", c.policy.hidden);
    read(p, "time_blocks", "policy", c.policy.time_blocks);
    read(p, "obs_scale", "policy", c.policy.obs_scale);
    read(p, "init_scale", "policy", c.init_scale);
  }

  if (doc.contains("mode")) {
    const auto& m = doc.at("mode");
    reject_unknown(m, "mode", {"type", "horizon", "gamma", "truncation"});
    std::string type = "discounted";
    read(m, "type", "mode", type);
    if (type == "episodic") {
      if (!m.contains("horizon")) throw ConfigError("mode.horizon: required for episodic mode");
      int h = 0;
      read(m, "horizon", "mode", h);
      if (h < 1) throw ConfigError("mode.horizon: must be >= 1");
      c.mode = ReturnSpec::episodic(h);
    } else if (type == "discounted") {
      double gamma = 0.99;
      int truncation = 200;
      read(m, "gamma", "mode", gamma);
      read(m, "truncation", "mode", truncation);
      if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("mode.gamma: must lie in (0, 1)");
      if (truncation < 1) throw ConfigError("mode.truncation: must be >= 1");
      c.mode = ReturnSpec::discounted(gamma, truncation);
    } else {
      throw ConfigError("mode.type: expected episodic or discounted");
    }
  }

  if (doc.contains("optimizer")) {
    const auto& o = doc.at("optimizer");
    reject_unknown(o, "optimizer", {"kind", "lr", "beta1", "beta2", "eps", "delta1", "K", "delta", "c", "p"});
    std::string kind = "adam";
    read(o, "kind", "optimizer", kind);
    if (kind == "adam") {
      c.optimizer = OptimizerKind::kAdam;
    } else {
      c.optimizer = OptimizerKind::kSgd;
      c.schedule.kind = schedule_from_string(kind);
    }
    read(o, "lr", "optimizer", c.adam.lr);
    read(o, "beta1", "optimizer", c.adam.beta1);
    read(o, "beta2", "optimizer", c.adam.beta2);
    read(o, "eps", "optimizer", c.adam.eps);
    read(o, "delta1", "optimizer", c.schedule.delta1);
    read(o, "K", "optimizer", c.schedule.budget_k);
    read(o, "delta", "optimizer", c.schedule.delta);
    read(o, "c", "optimizer", c.schedule.custom_c);
    read(o, "p", "optimizer", c.schedule.custom_p);
  }

  read(doc, "batch_size", "", c.batch_size);
  read(doc, "barrier", "", c.barrier);
  read(doc, "total_env_steps", "", c.total_env_steps);
  read(doc, "max_iterations", "", c.max_iterations);
  read(doc, "eval_every", "", c.eval_every);
  read(doc, "eval_episodes", "", c.eval_episodes);
  read(doc, "seed", "", c.seed);
  read(doc, "workers", "", c.workers);
  read(doc, "clip_factor", "", c.clip_factor);
  read(doc, "exact_metrics", "", c.exact_metrics);
  read(doc, "exact_gradient", "", c.exact_gradient);
  read(doc, "checkpoint_every", "", c.checkpoint_every);
  c.validate();
  return c;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
  return config_from_json(doc);
}

nlohmann::json TrainConfig::to_json() const {
  json j;
  j["version"] = kConfigVersion;
  j["env"] = {{"name", env}, {"params", env_params}};
  j["policy"] = {{"parametrization", asmpg::to_string(policy.kind)},
                 {"n_agent_states", n_agent_states},
                 {"hidden", policy.hidden},
                 {"time_blocks", policy.time_blocks},
                 {"obs_scale", policy.obs_scale},
                 {"init_scale", init_scale}};
  if (mode.mode == ReturnMode::kEpisodic) {
    j["mode"] = {{"type", "episodic"}, {"horizon", mode.horizon}};
  } else {
    j["mode"] = {{"type", "discounted"}, {"gamma", mode.gamma}, {"truncation", mode.truncation}};
  }
  if (optimizer == OptimizerKind::kAdam) {
    j["optimizer"] = {{"kind", "adam"}, {"lr", adam.lr}, {"beta1", adam.beta1}, {"beta2", adam.beta2},
                      {"eps", adam.eps}};
  } else {
    j["optimizer"] = {{"kind", asmpg::to_string(schedule.kind)}, {"delta1", schedule.delta1},
                      {"K", schedule.budget_k},                  {"delta", schedule.delta},
                      {"c", schedule.custom_c},                  {"p", schedule.custom_p}};
  }
  j["batch_size"] = batch_size;
  j["barrier"] = barrier;
  j["total_env_steps"] = total_env_steps;
  j["max_iterations"] = max_iterations;
  j["eval_every"] = eval_every;
  j["eval_episodes"] = eval_episodes;
  j["seed"] = seed;
  j["workers"] = workers;
  j["clip_factor"] = clip_factor;
  j["exact_metrics"] = exact_metrics;
  j["exact_gradient"] = exact_gradient;
  j["checkpoint_every"] = checkpoint_every;
  return j;
}

}  // namespace asmpg
