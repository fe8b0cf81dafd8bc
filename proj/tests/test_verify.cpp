#include <doctest.h>

#include <string>

#include "asmpg/errors.hpp"
#include "asmpg/verify.hpp"

using namespace asmpg;

TEST_CASE("suite list") {
  const auto& suites = verify_suites();
  CHECK(suites.size() == 6);
  CHECK(suites.back() == "all");
}

TEST_CASE("softmax bounds suite") {
  const auto r = run_verify("softmax_bounds");
  CHECK(r.pass());
  const auto j = r.to_json();
  CHECK(j.at("schema_version") == kVerifySchemaVersion);
  CHECK(j.at("suite") == "softmax_bounds");
  CHECK(j.at("pass") == true);
  for (const auto& c : j.at("checks")) {
    CHECK(c.contains("name"));
    CHECK(c.contains("computed"));
    CHECK(c.contains("bound_or_reference"));
  }
}

TEST_CASE("ideal agent-state suite") {
  const auto r = run_verify("ideal_asd");
  CHECK(r.pass());
  CHECK(r.checks.size() >= 4);
}

TEST_CASE("exact gradient suite with few probes") {
  VerifyOptions opts;
  opts.probes = 2;
  const auto r = run_verify("theorem1", opts);
  CHECK(r.pass());
}

TEST_CASE("bad requests") {
  CHECK_THROWS_AS(run_verify("nope"), ConfigError);
  VerifyOptions opts;
  opts.probes = 0;
  CHECK_THROWS_AS(run_verify("theorem1", opts), ConfigError);
  opts = VerifyOptions{};
  opts.budget = 10;
  try {
    run_verify("theorem1", opts);
    FAIL("expected a budget error");
  } catch (const BudgetError& e) {
    CHECK(std::string(e.what()).find("theorem1") != std::string::npos);
  }
}
