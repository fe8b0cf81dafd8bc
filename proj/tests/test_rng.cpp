#include <doctest.h>

#include <set>
#include <vector>

#include "asmpg/rng.hpp"

using namespace asmpg;

TEST_CASE("derive_seed is deterministic and separates streams") {
  CHECK(derive_seed(1952, 3, 4) == derive_seed(1952, 3, 4));
  std::set<std::uint64_t> seen;
  for (std::uint64_t k = 0; k < 50; ++k) {
    for (std::uint64_t i = 0; i < 10; ++i) seen.insert(derive_seed(1952, k, i));
  }
  CHECK(seen.size() == 500);
  CHECK(derive_seed(1952, 1, 0) != derive_seed(5235, 1, 0));
  CHECK(derive_seed(1952, 1, 2) != derive_seed(1952, 2, 1));
}

TEST_CASE("uniform stays in range and the stream is reproducible") {
  Rng a(7), b(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(u == b.uniform());
  }
}

TEST_CASE("categorical never returns a zero-weight index") {
  Rng rng(11);
  const std::vector<double> w{0.0, 2.0, 0.0, 1.0};
  std::vector<int> counts(4, 0);
  for (int i = 0; i < 30000; ++i) ++counts[rng.categorical(w)];
  CHECK(counts[0] == 0);
  CHECK(counts[2] == 0);
  CHECK(counts[1] / 30000.0 == doctest::Approx(2.0 / 3.0).epsilon(0.02));
}
