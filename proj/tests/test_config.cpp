#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "asmpg/config.hpp"

using namespace asmpg;
using nlohmann::json;

namespace {

json minimal() { return {{"version", 1}, {"env", {{"name", "cheese_maze"}}}}; }

std::string error_of(const json& doc) {
  try {
    config_from_json(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("minimal config takes the defaults") {
  const auto c = config_from_json(minimal());
  CHECK(c.env == "cheese_maze");
  CHECK(c.batch_size == TrainConfig{}.batch_size);
  CHECK(c.mode.mode == ReturnMode::kDiscounted);
}

TEST_CASE("errors name the offending field") {
  auto doc = minimal();
  doc["bogus"] = 1;
  CHECK(error_of(doc).find("bogus") != std::string::npos);

  doc = minimal();
  doc.erase("version");
  CHECK(error_of(doc).find("version") != std::string::npos);

  doc = minimal();
  doc["version"] = 2;
  CHECK(error_of(doc).find("version") != std::string::npos);

  doc = minimal();
  doc["env"] = json::object();
  CHECK(error_of(doc).find("env.name") != std::string::npos);

  doc = minimal();
  doc["batch_size"] = "ten";
  CHECK(error_of(doc).find("batch_size") != std::string::npos);

  doc = minimal();
  doc["policy"] = {{"parametrization", "lookup"}};
  CHECK(error_of(doc).find("policy.parametrization") != std::string::npos);

  doc = minimal();
  doc["policy"] = {{"hiden", 3}};
  CHECK(error_of(doc).find("policy.hiden") != std::string::npos);

  doc = minimal();
  doc["mode"] = {{"type", "discounted"}, {"gamma", 1.0}};
  CHECK(error_of(doc).find("mode.gamma") != std::string::npos);

  doc = minimal();
  doc["mode"] = {{"type", "episodic"}};
  CHECK(error_of(doc).find("mode.horizon") != std::string::npos);

  doc = minimal();
  doc["optimizer"] = {{"kind", "rmsprop"}};
  CHECK(error_of(doc).find("optimizer.kind") != std::string::npos);

  doc = minimal();
  doc["eval_episodes"] = 0;
  CHECK_FALSE(error_of(doc).empty());
}

TEST_CASE("to_json round trips") {
  auto doc = minimal();
  doc["policy"] = {{"parametrization", "joint_tabular"}, {"n_agent_states", 3}, {"time_blocks", 4}};
  doc["mode"] = {{"type", "episodic"}, {"horizon", 4}};
  doc["optimizer"] = {{"kind", "sgd_custom"}, {"c", 0.5}, {"p", 0.75}, {"K", 50}};
  doc["batch_size"] = 3;
  doc["seed"] = 42;
  doc["exact_metrics"] = false;
  const auto c = config_from_json(doc);
  const auto again = config_from_json(c.to_json());
  CHECK(again.to_json() == c.to_json());
  CHECK(again.policy.kind == PolicyKind::kJointTabular);
  CHECK(again.schedule.kind == Schedule::kCustom);
  CHECK(again.schedule.custom_p == 0.75);
  CHECK(again.mode.horizon == 4);
  CHECK(again.seed == 42);
}

TEST_CASE("shipped configs load") {
  const std::filesystem::path dir = ASMPG_CONFIG_DIR;
  int count = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    CAPTURE(entry.path().string());
    CHECK_NOTHROW(load_config(entry.path().string()));
    ++count;
  }
  CHECK(count >= 6);
}

TEST_CASE("load_config reports unreadable and malformed files") {
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
  const auto path = std::filesystem::temp_directory_path() / "asmpg_bad_config.json";
  std::ofstream(path) << "{ not json";
  CHECK_THROWS_AS(load_config(path.string()), ConfigError);
  std::filesystem::remove(path);
}
