#include "dsmopt/reference_solvers.hpp"

#include <algorithm>
#include <cmath>

#include "dsmopt/parallel.hpp"
#include "dsmopt/rng.hpp"

namespace dsmopt {

namespace {

// Mutable SA state over a case: assignment with gapless 0-based module labels,
// per-module sizes and intra-module weight sums, and the cross-module total.
// Moves are evaluated incrementally in O(deg(node)).
class SaState {
 public:
  SaState(const DsmCase& dsm_case, const Partition& start, const CostParams& params)
      : dsm_case_(&dsm_case), rho_(params.rho), n_(dsm_case.size()) {
    adjacency_.resize(n_);
    for (const DsmCase::IndexedEdge& edge : dsm_case.indexed_edges()) {
      adjacency_[edge.target].push_back({static_cast<int>(edge.source), edge.weight});
      adjacency_[edge.source].push_back({static_cast<int>(edge.target), edge.weight});
    }
    n_pow_ = std::pow(static_cast<double>(n_), rho_);
    size_pow_.resize(n_ + 1);
    for (int s = 0; s <= n_; ++s) {
      size_pow_[s] = std::pow(static_cast<double>(s), rho_) / n_pow_;
    }
    reset(start);
  }

  void reset(const Partition& start) {
    module_of_.assign(n_, 0);
    const int k = start.module_count;
    sizes_.assign(k, 0);
    intra_.assign(k, 0.0);
    cross_ = 0.0;
    for (int i = 0; i < n_; ++i) {
      module_of_[i] = start.modules[i] - 1;
      sizes_[module_of_[i]] += 1;
    }
    for (const DsmCase::IndexedEdge& edge : dsm_case_->indexed_edges()) {
      if (module_of_[edge.target] == module_of_[edge.source]) {
        intra_[module_of_[edge.target]] += edge.weight;
      } else {
        cross_ += edge.weight;
      }
    }
    cost_ = 0.0;
    for (int m = 0; m < k; ++m) cost_ += intra_[m] * size_pow_[sizes_[m]];
    cost_ += static_cast<double>(n_) * cross_;
  }

  int module_count() const { return static_cast<int>(sizes_.size()); }
  double cost() const { return cost_; }
  const std::vector<int>& assignment() const { return module_of_; }

  struct Move {
    int node = 0;
    int from = 0;
    int to = 0;          // == module_count() means a fresh module
    double delta = 0.0;
    double weight_to_from = 0.0;
    double weight_to_target = 0.0;
    bool feasible = false;
  };

  // Proposes moving a uniformly random node to a target chosen uniformly among
  // its other existing modules plus one fresh module. Moves that would leave a
  // single module are marked infeasible (the proposal is spent).
  Move propose(Rng& rng) {
    Move move;
    move.node = static_cast<int>(rng.uniform_index(n_));
    move.from = module_of_[move.node];
    const int k = module_count();
    const std::size_t choice = rng.uniform_index(static_cast<std::size_t>(k));
    // choices 0..k-2 enumerate existing modules != from, choice k-1 is fresh
    if (choice == static_cast<std::size_t>(k - 1)) {
      move.to = k;
    } else {
      move.to = static_cast<int>(choice) + (static_cast<int>(choice) >= move.from ? 1 : 0);
    }
    if (sizes_[move.from] == 1) {
      if (move.to == k) {
        // singleton to fresh module: identity move
        move.feasible = true;
        move.delta = 0.0;
        return move;
      }
      if (k == 2) {
        move.feasible = false;  // would collapse to a single module
        return move;
      }
    }
    move.feasible = true;

    double to_from = 0.0;
    double to_target = 0.0;
    for (const auto& [other, weight] : adjacency_[move.node]) {
      if (other == move.node) continue;
      const int other_module = module_of_[other];
      if (other_module == move.from) to_from += weight;
      if (other_module == move.to) to_target += weight;
    }
    move.weight_to_from = to_from;
    move.weight_to_target = to_target;

    const double old_from_term = intra_[move.from] * size_pow_[sizes_[move.from]];
    const double new_from_term =
        (intra_[move.from] - to_from) * size_pow_[sizes_[move.from] - 1];
    double old_to_term = 0.0;
    double new_to_term = 0.0;
    if (move.to < k) {
      old_to_term = intra_[move.to] * size_pow_[sizes_[move.to]];
      new_to_term = (intra_[move.to] + to_target) * size_pow_[sizes_[move.to] + 1];
    } else {
      new_to_term = 0.0;  // fresh singleton has no intra weight
    }
    const double cross_delta = to_from - to_target;
    move.delta = (new_from_term - old_from_term) + (new_to_term - old_to_term) +
                 static_cast<double>(n_) * cross_delta;
    return move;
  }

  void apply(const Move& move) {
    const int k = module_count();
    if (move.to == k) {
      if (sizes_[move.from] == 1) return;  // identity move
      sizes_.push_back(0);
      intra_.push_back(0.0);
    }
    intra_[move.from] -= move.weight_to_from;
    intra_[move.to] += move.weight_to_target;
    cross_ += move.weight_to_from - move.weight_to_target;
    sizes_[move.from] -= 1;
    sizes_[move.to] += 1;
    module_of_[move.node] = move.to;
    cost_ += move.delta;
    if (sizes_[move.from] == 0) compact(move.from);
  }

  Partition to_partition() const { return canonicalize_labels(module_of_); }

 private:
  // Removes an emptied module slot, keeping labels gapless by swapping in the
  // last module.
  void compact(int emptied) {
    const int last = module_count() - 1;
    if (emptied != last) {
      sizes_[emptied] = sizes_[last];
      intra_[emptied] = intra_[last];
      for (int& module : module_of_) {
        if (module == last) module = emptied;
      }
    }
    sizes_.pop_back();
    intra_.pop_back();
  }

  struct Neighbor {
    int other;
    double weight;
  };

  const DsmCase* dsm_case_;
  double rho_;
  int n_;
  double n_pow_ = 1.0;
  std::vector<std::vector<Neighbor>> adjacency_;
  std::vector<double> size_pow_;
  std::vector<int> module_of_;
  std::vector<int> sizes_;
  std::vector<double> intra_;
  double cross_ = 0.0;
  double cost_ = 0.0;
};

int resolve_moves_per_step(const DsmCase& dsm_case, const SaConfig& config) {
  return config.moves_per_step > 0 ? config.moves_per_step : 2 * dsm_case.size();
}

void check_config(const SaConfig& config) {
  if (!(config.alpha > 0.0) || !(config.alpha < 1.0)) {
    throw ConfigError("SA cooling factor alpha must lie in (0, 1)");
  }
  if (config.temperature_steps < 1) {
    throw ConfigError("SA temperature_steps must be >= 1");
  }
  if (config.restarts < 1) {
    throw ConfigError("SA restarts must be >= 1");
  }
  if (config.initial_temperature && !(*config.initial_temperature > 0.0)) {
    throw ConfigError("SA initial temperature must be positive");
  }
}

}  // namespace

std::uint64_t sa_restart_seed(std::uint64_t master_seed, int restart_index) {
  return derive_seed(master_seed, "sa-restart", static_cast<std::uint64_t>(restart_index));
}

bool accept_move(double delta, double temperature, double u01) {
  if (delta <= 0.0) return true;
  if (!(temperature > 0.0)) return false;
  return u01 < std::exp(-delta / temperature);
}

double calibrate_initial_temperature(const DsmCase& dsm_case, int sample_moves,
                                     double target_accept, std::uint64_t rng_seed) {
  if (sample_moves < 10) {
    throw ConfigError("temperature calibration needs at least 10 sample moves");
  }
  if (!(target_accept > 0.0) || !(target_accept < 1.0)) {
    throw ConfigError("target acceptance must lie in (0, 1)");
  }
  Rng rng(derive_seed(rng_seed, "t0-walk"));
  SaState state(dsm_case, random_partition(dsm_case, derive_seed(rng_seed, "t0-start")),
                CostParams{});
  double uphill_sum = 0.0;
  int uphill_count = 0;
  for (int i = 0; i < sample_moves; ++i) {
    SaState::Move move = state.propose(rng);
    if (!move.feasible) continue;
    if (move.delta > 0.0) {
      uphill_sum += move.delta;
      ++uphill_count;
    }
    state.apply(move);  // keep walking regardless of cost
  }
  if (uphill_count == 0) return dsm_case.total_weight();
  return (uphill_sum / uphill_count) / -std::log(target_accept);
}

double resolve_initial_temperature(const DsmCase& dsm_case, const SaConfig& config) {
  if (config.initial_temperature) return *config.initial_temperature;
  return calibrate_initial_temperature(dsm_case, 200, 0.8,
                                       derive_seed(config.rng_seed, "t0"));
}

SolutionRecord sa_single_run(const DsmCase& dsm_case, const SaConfig& config,
                             std::uint64_t restart_seed) {
  check_config(config);
  const double t0 = resolve_initial_temperature(dsm_case, config);
  const int moves_per_step = resolve_moves_per_step(dsm_case, config);

  Rng rng(derive_seed(restart_seed, "sa-moves"));
  SaState state(dsm_case, random_partition(dsm_case, derive_seed(restart_seed, "sa-init")),
                config.cost_params);

  double best_cost = state.cost();
  std::vector<int> best_assignment = state.assignment();

  double temperature = t0;
  for (int step = 0; step < config.temperature_steps; ++step) {
    for (int m = 0; m < moves_per_step; ++m) {
      SaState::Move move = state.propose(rng);
      if (!move.feasible) continue;
      if (!accept_move(move.delta, temperature, rng.uniform01())) continue;
      state.apply(move);
      if (state.cost() < best_cost) {
        best_cost = state.cost();
        best_assignment = state.assignment();
      }
    }
    temperature *= config.alpha;
  }

  SolutionRecord record;
  record.partition = canonicalize_labels(best_assignment);
  // recompute exactly so incremental rounding never leaks into reported costs
  record.total_cost = total_cost(dsm_case, record.partition, config.cost_params);
  record.iteration_found = 0;
  return record;
}

SaReferenceResult sa_reference(const DsmCase& dsm_case, const SaConfig& config,
                               int workers) {
  check_config(config);
  // resolve T0 once so every restart anneals on the same schedule
  SaConfig resolved = config;
  resolved.initial_temperature = resolve_initial_temperature(dsm_case, config);

  std::vector<SolutionRecord> records(static_cast<std::size_t>(config.restarts));
  parallel_for_index(config.restarts, workers, [&](int restart) {
    records[restart] =
        sa_single_run(dsm_case, resolved, sa_restart_seed(config.rng_seed, restart));
  });

  SaReferenceResult result;
  result.restarts_run = config.restarts;
  result.restart_costs.reserve(records.size());
  int best_index = 0;
  for (int i = 0; i < config.restarts; ++i) {
    result.restart_costs.push_back(records[i].total_cost);
    if (records[i].total_cost < records[best_index].total_cost) best_index = i;
  }
  result.best = records[best_index];
  result.best.iteration_found = best_index;
  return result;
}

SolutionRecord brute_force_optimum(const DsmCase& dsm_case, const CostParams& params,
                                   int max_n) {
  const int n = dsm_case.size();
  if (n > max_n) {
    throw ConfigError("brute force enumeration limited to n <= " +
                      std::to_string(max_n) + ", case has n = " + std::to_string(n));
  }
  const double n_pow = std::pow(static_cast<double>(n), params.rho);
  std::vector<double> size_pow(static_cast<std::size_t>(n) + 1);
  for (int s = 0; s <= n; ++s) {
    size_pow[s] = std::pow(static_cast<double>(s), params.rho) / n_pow;
  }
  const auto& edges = dsm_case.indexed_edges();

  std::vector<double> intra(static_cast<std::size_t>(n));
  std::vector<int> sizes(static_cast<std::size_t>(n));
  std::vector<int> best_labels;
  double best_cost = 0.0;
  bool found = false;

  for_each_set_partition(n, [&](std::span<const int> labels, int blocks) {
    if (blocks < 2) return;
    std::fill(intra.begin(), intra.begin() + blocks, 0.0);
    std::fill(sizes.begin(), sizes.begin() + blocks, 0);
    for (int i = 0; i < n; ++i) sizes[labels[i]] += 1;
    double cross = 0.0;
    for (const DsmCase::IndexedEdge& edge : edges) {
      if (labels[edge.target] == labels[edge.source]) {
        intra[labels[edge.target]] += edge.weight;
      } else {
        cross += edge.weight;
      }
    }
    double cost = static_cast<double>(n) * cross;
    for (int b = 0; b < blocks; ++b) cost += intra[b] * size_pow[sizes[b]];
    // strict improvement keeps the lexicographically smallest assignment on ties
    if (!found || cost < best_cost) {
      found = true;
      best_cost = cost;
      best_labels.assign(labels.begin(), labels.end());
    }
  });

  SolutionRecord record;
  record.partition = canonicalize_labels(best_labels);
  record.total_cost = best_cost;
  record.iteration_found = 0;
  return record;
}

}  // namespace dsmopt
