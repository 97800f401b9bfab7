#pragma once

// Deliberately independent re-implementation of the TotalCost objective, used
// as an oracle against the production metric. It goes through a dense
// receiver-by-provider weight matrix and per-module node sets instead of the
// edge list walk the library uses.

#include <cmath>
#include <vector>

#include "dsmopt/core_model.hpp"

namespace testutil {

inline double naive_total_cost(const dsmopt::DsmCase& dsm_case,
                               const dsmopt::Partition& partition, double rho) {
  const std::size_t n = dsm_case.nodes().size();
  std::vector<std::vector<double>> weight(n, std::vector<double>(n, 0.0));
  double grand_total = 0.0;
  for (const dsmopt::DsmCase::IndexedEdge& edge : dsm_case.indexed_edges()) {
    weight[edge.target][edge.source] += edge.weight;
    grand_total += edge.weight;
  }

  std::vector<std::vector<std::size_t>> members(
      static_cast<std::size_t>(partition.module_count));
  for (std::size_t i = 0; i < n; ++i) {
    members[static_cast<std::size_t>(partition.modules[i] - 1)].push_back(i);
  }

  double cost = 0.0;
  double intra_total = 0.0;
  for (const std::vector<std::size_t>& module : members) {
    double intra = 0.0;
    for (const std::size_t receiver : module) {
      for (const std::size_t provider : module) {
        intra += weight[receiver][provider];
      }
    }
    intra_total += intra;
    cost += intra * std::pow(static_cast<double>(module.size()), rho) /
            std::pow(static_cast<double>(n), rho);
  }
  cost += static_cast<double>(n) * (grand_total - intra_total);
  return cost;
}

}  // namespace testutil
