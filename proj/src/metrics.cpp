#include "dsmopt/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace dsmopt {

namespace {

void check_total(const DsmCase& dsm_case, const Partition& partition) {
  if (partition.modules.size() != dsm_case.nodes().size()) {
    throw MetricError("partition is not total over case '" + dsm_case.name() + "'");
  }
  if (partition.module_count < 1 ||
      partition.module_count > static_cast<int>(partition.modules.size())) {
    throw MetricError("partition has invalid module count");
  }
  for (int module : partition.modules) {
    if (module < 1 || module > partition.module_count) {
      throw MetricError("partition has out-of-range module index");
    }
  }
}

}  // namespace

double total_cost(const DsmCase& dsm_case, const Partition& partition,
                  const CostParams& params) {
  check_total(dsm_case, partition);
  const int n = dsm_case.size();
  std::vector<double> intra(partition.module_count, 0.0);
  std::vector<int> sizes(partition.module_count, 0);
  for (int module : partition.modules) sizes[module - 1] += 1;

  double cross = 0.0;
  for (const DsmCase::IndexedEdge& edge : dsm_case.indexed_edges()) {
    const int target_module = partition.modules[edge.target];
    if (target_module == partition.modules[edge.source]) {
      intra[target_module - 1] += edge.weight;
    } else {
      cross += edge.weight;
    }
  }

  double cost = static_cast<double>(n) * cross;
  const double n_pow = std::pow(static_cast<double>(n), params.rho);
  for (int module = 0; module < partition.module_count; ++module) {
    if (intra[module] != 0.0) {
      cost += intra[module] *
              std::pow(static_cast<double>(sizes[module]), params.rho) / n_pow;
    }
  }
  return cost;
}

double clustering_efficiency(const DsmCase& dsm_case, const Partition& partition) {
  check_total(dsm_case, partition);
  if (!(dsm_case.total_weight() > 0.0)) {
    throw MetricError("clustering efficiency is undefined for zero total weight");
  }
  double intra = 0.0;
  for (const DsmCase::IndexedEdge& edge : dsm_case.indexed_edges()) {
    if (partition.modules[edge.target] == partition.modules[edge.source]) {
      intra += edge.weight;
    }
  }
  return intra / dsm_case.total_weight();
}

double gap_percent(double total_cost, double sa_reference) {
  if (!(sa_reference > 0.0)) {
    throw MetricError("SA reference must be positive");
  }
  return (total_cost - sa_reference) / sa_reference * 100.0;
}

Aggregate aggregate(std::span<const double> values, StdKind std_kind) {
  if (values.empty()) {
    throw MetricError("cannot aggregate an empty value list");
  }
  Aggregate result;
  result.count = static_cast<int>(values.size());
  result.min = values[0];
  result.max = values[0];
  double sum = 0.0;
  for (double v : values) {
    sum += v;
    result.min = std::min(result.min, v);
    result.max = std::max(result.max, v);
  }
  result.mean = sum / static_cast<double>(values.size());
  double squared = 0.0;
  for (double v : values) {
    squared += (v - result.mean) * (v - result.mean);
  }
  const double denom = std_kind == StdKind::Population
                           ? static_cast<double>(values.size())
                           : static_cast<double>(values.size() - 1);
  result.std = values.size() == 1 && std_kind == StdKind::Sample
                   ? 0.0
                   : std::sqrt(squared / denom);
  return result;
}

}  // namespace dsmopt
