#include <chrono>
#include <cstdio>
#include <omp.h>
#include <vector>

#include "asmpg/envs.hpp"
#include "asmpg/grad.hpp"
#include "asmpg/oracle.hpp"
#include "asmpg/trainer.hpp"

using namespace asmpg;

namespace {

template <class F>
double time_ms(F&& f, int reps) {
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) f();
  const auto end = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(end - start).count() / reps;
}

void report(const char* name, double serial, double parallel, bool identical) {
  std::printf("%-28s serial %9.3f ms  parallel %9.3f ms  speedup %5.2fx  identical %s\n", name, serial, parallel,
              serial / parallel, identical ? "yes" : "NO");
}

}  // namespace

int main() {
  const int workers = omp_get_max_threads();
  std::printf("threads: %d\n", workers);

  {
    auto env = make_env("cheese_maze", 0);
    MlpAsm policy({7, 4, 8}, 128);
    Rng init(1);
    policy.initialize(init);
    Rng rng(2);
    std::vector<Trajectory> batch;
    for (int i = 0; i < 32; ++i) batch.push_back(rollout(policy, *env, rng, 200));
    const auto spec = ReturnSpec::discounted(0.99, 200);
    GradEstimate a, b;
    const double s = time_ms([&] { a = batch_estimate(policy, batch, spec); }, 5);
    const double p = time_ms([&] { b = batch_estimate_parallel(policy, batch, spec, workers); }, 5);
    report("batch_estimate (mlp, 32 ep)", s, p, a.vector == b.vector);
  }

  {
    const auto nmdp = tiny_nmdp({3, 2, 5, 0});
    TabularSoftmaxAsm policy({3, 2, 2}, 5);
    Rng rng(3);
    for (auto& v : policy.mutable_params()) v = rng.uniform(-1.0, 1.0);
    const auto spec = ReturnSpec::episodic(5);
    EnumerationOptions serial;
    serial.workers = 1;
    serial.budget = 1e9;
    EnumerationOptions parallel = serial;
    parallel.workers = workers;
    std::vector<double> a, b;
    const double s = time_ms([&] { a = exact_gradient(nmdp, policy, spec, serial); }, 3);
    const double p = time_ms([&] { b = exact_gradient(nmdp, policy, spec, parallel); }, 3);
    report("exact_gradient (tiny 3,2,5)", s, p, a == b);
  }

  {
    auto env = make_env("cheese_maze", 0);
    TabularSoftmaxAsm policy({7, 4, 8}, 1);
    EvalResult a, b;
    const double s = time_ms([&] { a = evaluate(policy, *env, 2000, 9, 200, 1); }, 3);
    const double p = time_ms([&] { b = evaluate(policy, *env, 2000, 9, 200, workers); }, 3);
    report("evaluate (2000 ep)", s, p, a.mean_return == b.mean_return && a.mean_steps == b.mean_steps);
  }
  return 0;
}
