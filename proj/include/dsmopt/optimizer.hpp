#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsmopt/core_model.hpp"
#include "dsmopt/llm_gateway.hpp"
#include "dsmopt/metrics.hpp"
#include "dsmopt/prompting.hpp"

namespace dsmopt {

struct OptimizerConfig {
  int iterations = 30;
  PromptSpec prompt_spec;
  CostParams cost_params;
  std::uint64_t master_seed = 0;
  bool invalid_retry_in_place = false;
  // Request shaping passed through to the gateway.
  double temperature = 1.0;
  std::string model_name;
  int max_output_tokens = 0;
  RetryPolicy retry_policy;
};

// Why a response produced no usable partition. NoJsonBlock is a parse-level
// failure; the rest are the validation criteria of the parsing contract.
enum class ParseFailureKind {
  NoJsonBlock,
  MissingNode,
  ExtraNode,
  SingleModule,
  NonStringLabel,
  DuplicateAssignment,
};

std::string to_string(ParseFailureKind kind);

struct ParseResult {
  std::optional<Partition> partition;
  std::optional<ParseFailureKind> failure;
  std::string detail;  // offending node id / label, empty when not applicable
  bool ok() const { return partition.has_value(); }
};

// Extracts the first balanced JSON object from raw model output (quote-aware,
// so braces inside strings don't confuse the scan), reads it as a display
// label -> module label map, translates labels back through label_map, and
// validates totality, K >= 2 and string-typed module labels. On success the
// partition comes back canonicalized.
ParseResult parse_response(const std::string& text, const LabelMap& label_map,
                           const DsmCase& dsm_case);

enum class IterationOutcome { Valid, ParseFailure, ValidationFailure, TransportFailure };

std::string to_string(IterationOutcome outcome);

struct IterationRecord {
  int iteration = 0;  // 1-based; the singleton init lives in RunTrace::init
  std::string prompt_hash;
  std::string raw_response;
  IterationOutcome outcome = IterationOutcome::TransportFailure;
  std::optional<ParseFailureKind> failure;
  std::string failure_detail;
  std::optional<Partition> partition;
  std::optional<double> total_cost;
  double best_so_far = 0.0;

  bool operator==(const IterationRecord&) const = default;
};

struct RunTrace {
  std::string case_name;
  OptimizerConfig config;
  SolutionRecord init;  // evaluated singleton partition, iteration_found = 0
  std::vector<IterationRecord> records;
  SolutionRecord best;
  int invalid_count = 0;
};

// The p cheapest solutions in history with grouping-equivalent duplicates
// collapsed (earliest record wins), sorted ascending by (cost, iteration).
std::vector<SolutionRecord> pool_best_slice(const std::vector<SolutionRecord>& history,
                                            int p);

// Full solution base for one prompt: deduplicated p best plus q sampled
// uniformly from history, sorted ascending.
std::vector<SolutionRecord> update_pool(const std::vector<SolutionRecord>& history, int p,
                                        int q, std::uint64_t rng_seed);

// The four-stage loop: render prompt from the current pool, query the
// backend, parse + validate, evaluate and record. Invalid iterations consume
// budget; every failure is recorded, never thrown. The returned trace holds
// exactly config.iterations records plus the evaluated singleton init.
RunTrace run_optimization(const DsmCase& dsm_case, const OptimizerConfig& config,
                          ChatBackend& backend);

nlohmann::json trace_to_json(const RunTrace& trace);
RunTrace trace_from_json(const nlohmann::json& data);

nlohmann::json optimizer_config_to_json(const OptimizerConfig& config);
OptimizerConfig optimizer_config_from_json(const nlohmann::json& data);

}  // namespace dsmopt
