#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dsmopt/core_model.hpp"
#include "dsmopt/llm_gateway.hpp"
#include "dsmopt/metrics.hpp"
#include "dsmopt/optimizer.hpp"
#include "dsmopt/reference_solvers.hpp"

namespace dsmopt {

// One backend column of the experiment grid. Mock backends are rebuilt fresh
// for every run (they carry RNG state); http backends read their key from the
// named environment variable, never from the plan file.
struct BackendSpec {
  std::string kind = "mock";  // "mock" | "http"
  MockMode mock_mode = MockMode::RandomMove;
  std::string extra;  // echo text or replay script path
  std::string base_url;
  std::string path = "/v1/chat/completions";
  std::string api_key_env = "DSMOPT_API_KEY";
  std::string model_name;
  int timeout_seconds = 120;
  std::string label;  // report row label; defaulted from the fields above

  std::string display_name() const;
};

BackendSpec backend_spec_from_json(const nlohmann::json& data);
nlohmann::json backend_spec_to_json(const BackendSpec& spec);

// Shorthand accepted by the CLI and bindings: "mock:<mode>[:<extra>]" (with
// "oracle" and "replay" aliases) or a bare http(s):// base URL.
BackendSpec backend_spec_from_string(const std::string& text);

// Builds the backend for one run. Injectable so tests can count instances or
// substitute failing transports.
using BackendFactory = std::function<std::unique_ptr<ChatBackend>(
    const BackendSpec& spec, const DsmCase& dsm_case, std::uint64_t backend_seed)>;

BackendFactory default_backend_factory();

enum class SaReferenceSourceKind { ComputeNow, LoadFile };

struct SaReferenceSource {
  SaReferenceSourceKind kind = SaReferenceSourceKind::ComputeNow;
  SaConfig sa_config;      // ComputeNow settings (desk-scale default: 200 restarts)
  std::string cache_path;  // ComputeNow: optional read/write cache file
  std::string path;        // LoadFile: required reference file
};

// Persistent map (case hash, SA config fingerprint) -> best cost, stored as a
// readable JSON file so full-scale references can be shipped with a repo.
class SaReferenceStore {
 public:
  SaReferenceStore() = default;

  static SaReferenceStore load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::optional<double> lookup(const DsmCase& dsm_case, const SaConfig& config) const;
  // Cheapest entry recorded for the case under any SA config.
  std::optional<double> lookup_any(const DsmCase& dsm_case) const;
  void put(const DsmCase& dsm_case, const SaConfig& config, double best_cost);

  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    std::string case_hash;
    std::string case_name;
    std::string config_fingerprint;
    double best_cost = 0.0;
    int restarts = 0;
  };
  std::vector<Entry> entries_;
};

// Fingerprint of every SA setting that affects the reference value.
std::string sa_config_fingerprint(const SaConfig& config);

struct ExperimentPlan {
  std::vector<std::string> case_paths;
  std::vector<BackendSpec> backends;
  std::vector<bool> knowledge_conditions = {false, true};
  int runs_per_condition = 10;
  OptimizerConfig optimizer_defaults;
  SaReferenceSource sa_reference_source;
  std::string trace_dir = "traces";
  int workers = 1;
};

ExperimentPlan plan_from_json(const nlohmann::json& data);
ExperimentPlan load_plan_file(const std::filesystem::path& path);

struct ConditionSummary {
  std::string case_name;
  std::string backend;
  bool knowledge = false;
  Aggregate total_cost;
  Aggregate ce;
  Aggregate final_gap;
  double reference_cost = 0.0;
  std::vector<std::string> trace_paths;
  int runs_requested = 0;
  int runs_completed = 0;
  // In-memory copies of the completed traces, in run order; convergence
  // tables are built from these without re-reading the files.
  std::vector<RunTrace> traces;
};

// Deterministic per-run seed: stable under any scheduling of cells and runs.
std::uint64_t run_master_seed(std::uint64_t plan_seed, const std::string& case_name,
                              const std::string& backend_label, bool knowledge,
                              int run_index);

// Executes the full (case x backend x knowledge) grid, runs_per_condition
// runs per cell, writing one trace file per run under plan.trace_dir. A
// failing run is recorded and skipped in aggregation; it never aborts
// siblings. Summaries aggregate final TotalCost, CE of each run's best
// partition, and Gap% against the SA reference.
std::vector<ConditionSummary> run_experiment(const ExperimentPlan& plan,
                                             const BackendFactory& factory =
                                                 default_backend_factory());

enum class AblationDimension { PoolDesign, ObjectiveFormula, InputFormat };

std::string to_string(AblationDimension dimension);
AblationDimension ablation_dimension_from_string(const std::string& text);

struct AblationArm {
  std::string name;
  PromptSpec spec;
};

// The enumerated prompt-spec variants for one ablation dimension, derived
// from a base spec: pool {(5,5),(5,0),(0,5)}, formula {on,off}, format {all
// four input formats}.
std::vector<AblationArm> ablation_arms(AblationDimension dimension,
                                       const PromptSpec& base);

struct AblationPlan {
  AblationDimension dimension = AblationDimension::PoolDesign;
  ExperimentPlan base;  // restricted to one case, one backend, one knowledge level
};

AblationPlan ablation_plan_from_json(const nlohmann::json& data);
AblationPlan load_ablation_plan_file(const std::filesystem::path& path);

std::vector<std::pair<AblationArm, ConditionSummary>> run_ablation(
    const AblationPlan& plan, const BackendFactory& factory = default_backend_factory());

struct ConvergenceRow {
  int iteration = 0;  // 0 = singleton initialization
  double gap_mean = 0.0;
  double gap_std = 0.0;
};

struct ConvergenceTable {
  std::string cell_label;
  std::vector<ConvergenceRow> rows;  // iterations + 1 rows
};

// Per-iteration Gap% of best-so-far aggregated over runs; row 0 carries the
// singleton-init gap. All traces must share the iteration count.
ConvergenceTable convergence_table(const std::vector<RunTrace>& traces,
                                   double reference_cost);

// File-name-safe identifier for one condition cell.
std::string cell_label(const ConditionSummary& summary);

// Writes summary.csv plus convergence_<cell>.csv / convergence_<cell>.svg per
// summary into out_dir. Byte-deterministic for identical inputs.
std::vector<std::filesystem::path> emit_report(
    const std::vector<ConditionSummary>& summaries,
    const std::filesystem::path& out_dir);

// Rebuilds summaries from the trace files under traces_dir (the meta header
// written by run_experiment makes them self-contained) and emits the same
// report shape into out_dir.
std::vector<ConditionSummary> report_from_traces(const std::filesystem::path& traces_dir);

// Trace file wrapper: {"meta": {...}, "trace": trace_to_json(...)}.
nlohmann::json trace_file_to_json(const RunTrace& trace, const std::string& case_path,
                                  const std::string& backend_label, bool knowledge,
                                  int run_index, double reference_cost, double ce_best);

}  // namespace dsmopt
