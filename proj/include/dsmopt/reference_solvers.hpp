#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "dsmopt/core_model.hpp"
#include "dsmopt/metrics.hpp"

namespace dsmopt {

struct SaConfig {
  double alpha = 0.9;        // geometric cooling factor
  int temperature_steps = 150;
  int moves_per_step = 0;    // 0 = auto (2*n proposals per step)
  int restarts = 10000;
  std::optional<double> initial_temperature;  // nullopt = auto-calibrated
  std::uint64_t rng_seed = 0;
  CostParams cost_params{};
};

struct SaReferenceResult {
  SolutionRecord best;       // iteration_found carries the winning restart index
  int restarts_run = 0;
  std::vector<double> restart_costs;
};

// Per-restart seeds depend only on (master seed, restart index), so results
// are identical no matter how restarts are scheduled across workers.
std::uint64_t sa_restart_seed(std::uint64_t master_seed, int restart_index);

// Metropolis rule: accept when delta <= 0, otherwise when u01 < exp(-delta/T).
bool accept_move(double delta, double temperature, double u01);

// T0 estimate from uphill deltas sampled along a random walk:
// T0 = mean(positive deltas) / -ln(target_accept). Falls back to the case's
// total weight when the walk finds no uphill move.
double calibrate_initial_temperature(const DsmCase& dsm_case, int sample_moves,
                                     double target_accept, std::uint64_t rng_seed);

// The configured initial temperature, or the auto-calibrated default
// (derived deterministically from config.rng_seed).
double resolve_initial_temperature(const DsmCase& dsm_case, const SaConfig& config);

SolutionRecord sa_single_run(const DsmCase& dsm_case, const SaConfig& config,
                             std::uint64_t restart_seed);

SaReferenceResult sa_reference(const DsmCase& dsm_case, const SaConfig& config,
                               int workers = 1);

// Exact optimum by set-partition enumeration; feasible only for small n.
// Ties are broken toward the lexicographically smallest canonical assignment.
SolutionRecord brute_force_optimum(const DsmCase& dsm_case,
                                   const CostParams& params = {}, int max_n = 12);

// Visits every set partition of {0..n-1} as a restricted-growth string, in
// lexicographic order. The visitor receives (labels, block_count) with 0-based
// block labels; the label span is only valid during the call.
template <class Visitor>
void for_each_set_partition(int n, Visitor&& visit) {
  if (n <= 0) return;
  std::vector<int> labels(static_cast<std::size_t>(n), 0);
  auto recurse = [&](auto&& self, int position, int max_used) -> void {
    if (position == n) {
      visit(std::span<const int>(labels.data(), labels.size()), max_used + 1);
      return;
    }
    for (int label = 0; label <= max_used + 1; ++label) {
      labels[static_cast<std::size_t>(position)] = label;
      self(self, position + 1, std::max(max_used, label));
    }
  };
  recurse(recurse, 1, 0);  // position 0 is pinned to label 0
}

}  // namespace dsmopt
