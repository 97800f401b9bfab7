#pragma once

#include <span>

#include "dsmopt/core_model.hpp"

namespace dsmopt {

struct CostParams {
  double rho = 1.0;  // size-penalty exponent
};

enum class StdKind { Population, Sample };

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;
  int count = 0;
  double min = 0.0;
  double max = 0.0;
};

// TotalCost: sum over modules of (intra-module weight) * (|M_k|/n)^rho, plus
// n times the cross-module weight. Each directed edge contributes to exactly
// one of the two terms. Lower is better; K=1 partitions are accepted here.
double total_cost(const DsmCase& dsm_case, const Partition& partition,
                  const CostParams& params = {});

// Fraction of total edge weight that falls within modules; in [0, 1].
double clustering_efficiency(const DsmCase& dsm_case, const Partition& partition);

// Relative excess over the SA reference, in percent.
double gap_percent(double total_cost, double sa_reference);

Aggregate aggregate(std::span<const double> values,
                    StdKind std_kind = StdKind::Population);

}  // namespace dsmopt
