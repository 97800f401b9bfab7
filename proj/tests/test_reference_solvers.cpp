#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "dsmopt/core_model.hpp"
#include "dsmopt/errors.hpp"
#include "dsmopt/metrics.hpp"
#include "dsmopt/reference_solvers.hpp"
#include "dsmopt/rng.hpp"
#include "naive_cost.hpp"

using namespace dsmopt;

TEST_SUITE("reference_solvers") {

TEST_CASE("set partition enumeration hits the Bell numbers") {
  const int bell[] = {0, 1, 2, 5, 15, 52, 203, 877, 4140};
  for (int n = 1; n <= 8; ++n) {
    int count = 0;
    for_each_set_partition(n, [&](std::span<const int>, int) { ++count; });
    CHECK(count == bell[n]);
  }
}

TEST_CASE("set partition enumeration is lexicographic and well-formed") {
  std::vector<std::vector<int>> seen;
  for_each_set_partition(4, [&](std::span<const int> labels, int blocks) {
    REQUIRE(labels.size() == 4);
    CHECK(labels[0] == 0);  // restricted growth strings pin position 0
    int max_label = -1;
    for (const int label : labels) {
      CHECK(label <= max_label + 1);  // growth condition
      max_label = std::max(max_label, label);
    }
    CHECK(blocks == max_label + 1);
    seen.emplace_back(labels.begin(), labels.end());
  });
  REQUIRE(seen.size() == 15);
  CHECK(seen.front() == std::vector<int>{0, 0, 0, 0});
  CHECK(seen.back() == std::vector<int>{0, 1, 2, 3});
  CHECK(std::is_sorted(seen.begin(), seen.end()));
}

TEST_CASE("brute force finds the obvious two-cluster optimum") {
  // two triangles joined by one thin link; optimal split is the two triangles
  const DsmCase dsm_case = parse_case_text(R"({
    "name": "twoclusters", "dsm_type": "component", "domain": "t",
    "nodes": [{"id":"a"},{"id":"b"},{"id":"c"},{"id":"d"},{"id":"e"},{"id":"f"}],
    "edges": [
      {"target":"b","source":"a","weight":9},
      {"target":"c","source":"b","weight":9},
      {"target":"a","source":"c","weight":9},
      {"target":"e","source":"d","weight":9},
      {"target":"f","source":"e","weight":9},
      {"target":"d","source":"f","weight":9},
      {"target":"d","source":"a","weight":1}
    ]
  })");
  const SolutionRecord best = brute_force_optimum(dsm_case);
  CHECK(best.partition.module_count == 2);
  CHECK(best.partition.modules == std::vector<int>{1, 1, 1, 2, 2, 2});
  // 54 intra * (3/6) + 6 * 1 cross = 27 + 6 = 33
  CHECK(best.total_cost == doctest::Approx(33.0));
}

TEST_CASE("brute force never loses to exhaustive naive scoring") {
  Rng rng(77);
  for (int trial = 0; trial < 8; ++trial) {
    const int n = 4 + static_cast<int>(rng.uniform_index(3));
    const DsmCase dsm_case = generate_random_case(n, 0.5, 1, 9, rng.next_u64());
    const SolutionRecord best = brute_force_optimum(dsm_case);
    double naive_best = std::numeric_limits<double>::infinity();
    for_each_set_partition(n, [&](std::span<const int> labels, int blocks) {
      if (blocks < 2) return;
      const Partition partition = canonicalize_labels(labels);
      naive_best =
          std::min(naive_best, testutil::naive_total_cost(dsm_case, partition, 1.0));
    });
    CHECK(best.total_cost == doctest::Approx(naive_best).epsilon(1e-12));
  }
}

TEST_CASE("brute force refuses oversized cases") {
  const DsmCase dsm_case = generate_random_case(9, 0.3, 1, 5, 3);
  CHECK_THROWS_AS(brute_force_optimum(dsm_case, {}, 8), ConfigError);
  CHECK_NOTHROW(brute_force_optimum(dsm_case, {}, 9));
}

TEST_CASE("metropolis acceptance rule") {
  CHECK(accept_move(-1.0, 5.0, 0.999));      // downhill always accepted
  CHECK(accept_move(0.0, 5.0, 0.999));       // ties accepted
  CHECK(accept_move(1.0, 1e9, 0.5));         // hot: nearly everything passes
  CHECK_FALSE(accept_move(100.0, 0.01, 0.01));  // cold: uphill rejected
  const double delta = 2.0, temperature = 3.0;
  const double threshold = std::exp(-delta / temperature);
  CHECK(accept_move(delta, temperature, threshold - 1e-9));
  CHECK_FALSE(accept_move(delta, temperature, threshold + 1e-9));
}

TEST_CASE("restart seeds are distinct and stable") {
  std::set<std::uint64_t> seeds;
  for (int i = 0; i < 1000; ++i) {
    seeds.insert(sa_restart_seed(42, i));
  }
  CHECK(seeds.size() == 1000);
  CHECK(sa_restart_seed(42, 7) == sa_restart_seed(42, 7));
  CHECK(sa_restart_seed(42, 7) != sa_restart_seed(43, 7));
}

TEST_CASE("initial temperature calibration") {
  const DsmCase dsm_case = generate_random_case(8, 0.4, 1, 9, 11);
  const double calibrated = calibrate_initial_temperature(dsm_case, 200, 0.8, 5);
  CHECK(calibrated > 0.0);
  CHECK(calibrated == calibrate_initial_temperature(dsm_case, 200, 0.8, 5));

  SaConfig configured;
  configured.initial_temperature = 123.5;
  CHECK(resolve_initial_temperature(dsm_case, configured) == doctest::Approx(123.5));

  SaConfig automatic;
  automatic.rng_seed = 5;
  CHECK(resolve_initial_temperature(dsm_case, automatic) > 0.0);

  CHECK_THROWS_AS(calibrate_initial_temperature(dsm_case, 0, 0.8, 5), ConfigError);
  CHECK_THROWS_AS(calibrate_initial_temperature(dsm_case, 200, 1.5, 5), ConfigError);
}

TEST_CASE("invalid SA configs are rejected") {
  const DsmCase dsm_case = generate_random_case(6, 0.4, 1, 9, 2);
  SaConfig config;
  config.restarts = 4;

  SaConfig bad_alpha = config;
  bad_alpha.alpha = 1.0;
  CHECK_THROWS_AS(sa_reference(dsm_case, bad_alpha), ConfigError);

  SaConfig bad_steps = config;
  bad_steps.temperature_steps = 0;
  CHECK_THROWS_AS(sa_reference(dsm_case, bad_steps), ConfigError);

  SaConfig bad_restarts = config;
  bad_restarts.restarts = 0;
  CHECK_THROWS_AS(sa_reference(dsm_case, bad_restarts), ConfigError);

  SaConfig bad_t0 = config;
  bad_t0.initial_temperature = -1.0;
  CHECK_THROWS_AS(sa_reference(dsm_case, bad_t0), ConfigError);
}

TEST_CASE("sa_single_run returns a feasible exactly-scored record") {
  const DsmCase dsm_case = generate_random_case(7, 0.4, 1, 9, 21);
  SaConfig config;
  config.initial_temperature = 50.0;
  const SolutionRecord record = sa_single_run(dsm_case, config, 99);
  CHECK(record.partition.module_count >= 2);
  CHECK(record.partition.modules.size() == 7);
  CHECK(record.total_cost ==
        doctest::Approx(total_cost(dsm_case, record.partition)).epsilon(1e-12));
  const SolutionRecord again = sa_single_run(dsm_case, config, 99);
  CHECK(again.partition == record.partition);
  CHECK(again.total_cost == record.total_cost);
}

TEST_CASE("sa_reference is deterministic across worker counts") {
  const DsmCase dsm_case = generate_random_case(8, 0.4, 1, 9, 31);
  SaConfig config;
  config.restarts = 40;
  config.rng_seed = 12;
  const SaReferenceResult serial = sa_reference(dsm_case, config, 1);
  const SaReferenceResult parallel = sa_reference(dsm_case, config, 4);
  CHECK(serial.best.partition == parallel.best.partition);
  CHECK(serial.best.total_cost == parallel.best.total_cost);
  CHECK(serial.best.iteration_found == parallel.best.iteration_found);
  CHECK(serial.restart_costs == parallel.restart_costs);
  REQUIRE(serial.restart_costs.size() == 40);
  CHECK(serial.restarts_run == 40);
  double min_cost = serial.restart_costs.front();
  for (const double cost : serial.restart_costs) min_cost = std::min(min_cost, cost);
  CHECK(serial.best.total_cost == doctest::Approx(min_cost));
}

TEST_CASE("SA attains the exact optimum on small cases") {
  Rng rng(55);
  int hits = 0;
  const int cases = 8;
  for (int trial = 0; trial < cases; ++trial) {
    const int n = 5 + static_cast<int>(rng.uniform_index(3));
    const DsmCase dsm_case = generate_random_case(n, 0.45, 1, 9, rng.next_u64());
    const SolutionRecord exact = brute_force_optimum(dsm_case);
    SaConfig config;
    config.restarts = 120;
    config.rng_seed = rng.next_u64();
    const SaReferenceResult sa = sa_reference(dsm_case, config, 4);
    CHECK(sa.best.total_cost >= exact.total_cost - 1e-9);  // never below the optimum
    if (sa.best.total_cost <= exact.total_cost + 1e-9) ++hits;
  }
  CHECK(hits == cases);
}

}  // TEST_SUITE
