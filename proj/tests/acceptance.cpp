// Acceptance checks for the DSM modularization toolkit. Each criterion prints
// exactly one [PASS]/[FAIL] line with its runtime; the process exits nonzero
// if any criterion fails or overruns its budget.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dsmopt/core_model.hpp"
#include "dsmopt/errors.hpp"
#include "dsmopt/harness.hpp"
#include "dsmopt/llm_gateway.hpp"
#include "dsmopt/metrics.hpp"
#include "dsmopt/optimizer.hpp"
#include "dsmopt/prompting.hpp"
#include "dsmopt/reference_solvers.hpp"
#include "dsmopt/rng.hpp"
#include "naive_cost.hpp"
#include "test_util.hpp"

using namespace dsmopt;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  int number;
  std::string title;
  double budget_seconds;
  std::function<void(std::vector<std::string>&)> body;  // push failure messages
};

int hardware_workers() {
  const unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::min(8u, std::max(1u, hw)));
}

DsmCase random_case(Rng& rng, int n_lo, int n_hi) {
  const int n = n_lo + static_cast<int>(rng.uniform_index(
                           static_cast<std::size_t>(n_hi - n_lo + 1)));
  const double density = 0.3 + 0.4 * (static_cast<double>(rng.uniform_index(1000)) / 1000.0);
  return generate_random_case(n, density, 1, 9, rng.next_u64());
}

Partition single_module_partition(const DsmCase& dsm_case) {
  Partition partition;
  partition.modules.assign(static_cast<std::size_t>(dsm_case.size()), 1);
  partition.module_count = 1;
  return partition;
}

std::vector<SolutionRecord> singleton_history(const DsmCase& dsm_case) {
  const Partition singleton = singleton_partition(dsm_case);
  return {SolutionRecord{singleton, total_cost(dsm_case, singleton), 0}};
}

#define EXPECT(cond, message)                         \
  do {                                                \
    if (!(cond)) {                                    \
      std::ostringstream oss_;                        \
      oss_ << message;                                \
      failures.push_back(oss_.str());                 \
    }                                                 \
  } while (0)

// --- criterion bodies -------------------------------------------------------

void check_cost_identities(std::vector<std::string>& failures) {
  Rng rng(101);
  for (int trial = 0; trial < 50; ++trial) {
    const DsmCase dsm_case = random_case(rng, 3, 10);
    const double w_total = dsm_case.total_weight();
    const double merged = total_cost(dsm_case, single_module_partition(dsm_case));
    const double split = total_cost(dsm_case, singleton_partition(dsm_case));
    EXPECT(std::abs(merged - w_total) <= 1e-9,
           "single-module cost " << merged << " != W_total " << w_total);
    EXPECT(std::abs(split - dsm_case.size() * w_total) <= 1e-9,
           "singleton cost " << split << " != n*W_total "
                             << dsm_case.size() * w_total);
  }
}

void check_metric_oracle(std::vector<std::string>& failures) {
  Rng rng(202);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const DsmCase dsm_case = random_case(rng, 3, 10);
    const Partition partition = random_partition(dsm_case, rng.next_u64());
    const double fast = total_cost(dsm_case, partition);
    const double naive = testutil::naive_total_cost(dsm_case, partition, 1.0);
    if (std::abs(fast - naive) > 1e-9) ++mismatches;
  }
  EXPECT(mismatches == 0, mismatches << "/1000 pairs disagree with the naive oracle");
}

void check_sa_vs_brute(std::vector<std::string>& failures) {
  Rng rng(303);
  const int workers = hardware_workers();
  int hits = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const DsmCase dsm_case = random_case(rng, 5, 8);
    const SolutionRecord exact = brute_force_optimum(dsm_case);

    SaConfig config;
    config.alpha = 0.9;
    config.temperature_steps = 150;
    config.restarts = 200;
    config.rng_seed = rng.next_u64();
    const SaReferenceResult sa = sa_reference(dsm_case, config, workers);

    EXPECT(sa.best.total_cost >= exact.total_cost - 1e-9,
           "SA cost " << sa.best.total_cost << " below brute-force optimum "
                      << exact.total_cost << " on trial " << trial);
    if (std::abs(sa.best.total_cost - exact.total_cost) <= 1e-9) ++hits;
  }
  EXPECT(hits >= 19, "SA matched the optimum on only " << hits << "/20 cases");
}

void check_gap_anchor(std::vector<std::string>& failures) {
  const double gap = gap_percent(1420.8, 1371.0);
  EXPECT(std::abs(gap - 3.63) <= 0.05,
         "gap_percent(1420.8, 1371) = " << gap << ", expected 3.63 +/- 0.05");
}

void check_validation_suite(std::vector<std::string>& failures) {
  const DsmCase dsm_case = load_case_file(testutil::case_path("fuel_demo.json"));
  const LabelMap label_map = make_label_map(dsm_case, 0, 1);

  const ParseResult good = parse_response(
      R"(Here is the improved partition: {"N01": "M2", "N02": "M1", "N03": "M2"})",
      label_map, dsm_case);
  EXPECT(good.ok(), "conformant response rejected: "
                        << (good.failure ? to_string(*good.failure) : "?"));

  const auto expect_failure = [&](const std::string& text, ParseFailureKind kind) {
    const ParseResult result = parse_response(text, label_map, dsm_case);
    EXPECT(!result.ok() && result.failure == kind,
           "expected " << to_string(kind) << " for: " << text);
  };
  expect_failure(R"({"N01": "M1", "N02": "M2"})", ParseFailureKind::MissingNode);
  expect_failure(R"({"N01": "M1", "N02": "M1", "N03": "M1"})",
                 ParseFailureKind::SingleModule);
  expect_failure(R"({"N01": 1, "N02": 2, "N03": 1})", ParseFailureKind::NonStringLabel);
  expect_failure("no structured content in this reply", ParseFailureKind::NoJsonBlock);
  expect_failure(R"({"N01": "M1", "N01": "M2", "N02": "M2", "N03": "M1"})",
                 ParseFailureKind::DuplicateAssignment);

  Rng rng(404);
  const std::string valid = R"({"N01": "M2", "N02": "M1", "N03": "M2"})";
  for (int trial = 0; trial < 10000; ++trial) {
    std::string text;
    if (trial % 3 == 0) {
      text = valid;
      const int edits = 1 + static_cast<int>(rng.uniform_index(5));
      for (int e = 0; e < edits; ++e) {
        text[rng.uniform_index(text.size())] = static_cast<char>(rng.uniform_index(256));
      }
    } else {
      const std::size_t length = rng.uniform_index(240);
      text.reserve(length);
      for (std::size_t i = 0; i < length; ++i) {
        text.push_back(static_cast<char>(rng.uniform_index(256)));
      }
    }
    try {
      const ParseResult result = parse_response(text, label_map, dsm_case);
      if (result.ok()) {
        const Partition& p = *result.partition;
        const bool feasible =
            static_cast<int>(p.modules.size()) == dsm_case.size() &&
            p.module_count >= 2 && canonicalize_labels(p.modules) == p;
        EXPECT(feasible, "fuzz trial " << trial << " accepted an invalid partition");
        if (!feasible) return;
      }
    } catch (const std::exception& error) {
      EXPECT(false, "fuzz trial " << trial << " threw: " << error.what());
      return;
    }
  }
}

void check_oracle_loop(std::vector<std::string>& failures) {
  Rng rng(505);
  for (int trial = 0; trial < 10; ++trial) {
    const DsmCase dsm_case = random_case(rng, 4, 7);
    const SolutionRecord exact = brute_force_optimum(dsm_case);
    const auto backend =
        mock_heuristic_backend(dsm_case, MockMode::OracleOnceThenRandom, rng.next_u64());
    OptimizerConfig config;
    config.iterations = 30;
    config.master_seed = rng.next_u64();
    const RunTrace trace = run_optimization(dsm_case, config, *backend);

    EXPECT(std::abs(trace.best.total_cost - exact.total_cost) <= 1e-9,
           "trial " << trial << ": best " << trace.best.total_cost
                    << " != optimum " << exact.total_cost);
    double previous = trace.init.total_cost;
    for (const IterationRecord& record : trace.records) {
      EXPECT(record.best_so_far <= previous + 1e-12,
             "trial " << trial << ": best_so_far rose at iteration "
                      << record.iteration);
      previous = record.best_so_far;
    }
  }
}

void check_random_move_loop(std::vector<std::string>& failures) {
  testutil::TempDir dir("acceptance_e2e");
  const DsmCase dsm_case = generate_random_case(8, 0.45, 1, 9, 2024);
  const fs::path case_path = dir / "eight_node.json";
  {
    std::ofstream out(case_path);
    out << case_to_json_text(dsm_case);
  }

  ExperimentPlan plan;
  plan.case_paths = {case_path.string()};
  BackendSpec backend;
  backend.kind = "mock";
  backend.mock_mode = MockMode::RandomMove;
  plan.backends = {backend};
  plan.knowledge_conditions = {false};
  plan.runs_per_condition = 10;
  plan.optimizer_defaults.iterations = 30;
  plan.optimizer_defaults.master_seed = 7;
  plan.sa_reference_source.kind = SaReferenceSourceKind::ComputeNow;
  plan.sa_reference_source.sa_config.restarts = 200;
  plan.trace_dir = (dir / "traces_a").string();
  plan.workers = hardware_workers();

  const std::vector<ConditionSummary> first = run_experiment(plan);
  if (first.size() != 1) {
    EXPECT(false, "expected one condition summary, got " << first.size());
    return;
  }
  const ConditionSummary& summary = first[0];
  EXPECT(summary.runs_completed == 10,
         "only " << summary.runs_completed << "/10 runs completed");
  for (const RunTrace& trace : summary.traces) {
    EXPECT(trace.records.size() == 30,
           "trace holds " << trace.records.size() << " iterations, expected 30");
  }

  const double init_gap =
      gap_percent(total_cost(dsm_case, singleton_partition(dsm_case)),
                  summary.reference_cost);
  EXPECT(summary.final_gap.mean < init_gap,
         "mean final gap " << summary.final_gap.mean
                           << "% did not improve on the singleton init gap "
                           << init_gap << "%");

  const fs::path report_a = dir / "report_a";
  emit_report(first, report_a);

  ExperimentPlan rerun = plan;
  rerun.trace_dir = (dir / "traces_b").string();
  const std::vector<ConditionSummary> second = run_experiment(rerun);
  const fs::path report_b = dir / "report_b";
  emit_report(second, report_b);

  const std::string csv_a = testutil::read_file(report_a / "summary.csv");
  const std::string csv_b = testutil::read_file(report_b / "summary.csv");
  EXPECT(csv_a == csv_b, "summary.csv is not byte-identical across reruns");
}

void check_prompt_goldens(std::vector<std::string>& failures) {
  const DsmCase dsm_case = load_case_file(testutil::case_path("fuel_demo.json"));
  const std::vector<SolutionRecord> history = singleton_history(dsm_case);

  const char* format_names[] = {"directed_edge_list", "adjacency_matrix",
                                "undirected_edge_list", "natural_language"};
  for (const char* format_name : format_names) {
    for (const bool knowledge : {false, true}) {
      for (const bool formula : {true, false}) {
        PromptSpec spec;
        spec.input_format = input_format_from_string(format_name);
        spec.knowledge = knowledge;
        spec.include_formula = formula;
        spec.shuffle_seed = 0;
        const RenderedPrompt prompt = render_prompt(dsm_case, spec, history, history, 1);
        const std::string golden_name =
            std::string("prompt_") + format_name + (knowledge ? "_k1_" : "_k0_") +
            (formula ? "formula" : "noformula") + ".txt";
        const std::string expected =
            testutil::read_file(testutil::golden_path(golden_name));
        EXPECT(prompt.user_message == expected, golden_name << " drifted from its golden");

        if (!knowledge) {
          for (const DsmNode& node : dsm_case.nodes()) {
            EXPECT(prompt.user_message.find(node.name) == std::string::npos,
                   golden_name << " leaks node name '" << node.name << "'");
          }
        }
      }
    }
  }

  PromptSpec spec;
  spec.shuffle_seed = 0;
  const RenderedPrompt directed = render_prompt(dsm_case, spec, history, history, 1);
  EXPECT(directed.user_message.find("N03 --> N01 (weight: 4)") != std::string::npos,
         "directed edge line format drifted");
  EXPECT(system_message_text() ==
             testutil::read_file(testutil::golden_path("system_message.txt")),
         "system message drifted from its golden");
}

void check_ablation(std::vector<std::string>& failures) {
  testutil::TempDir dir("acceptance_ablation");

  AblationPlan plan;
  plan.base.case_paths = {testutil::case_path("fuel_demo.json")};
  BackendSpec backend;
  backend.kind = "mock";
  backend.mock_mode = MockMode::RandomMove;
  plan.base.backends = {backend};
  plan.base.knowledge_conditions = {false};
  plan.base.runs_per_condition = 1;
  plan.base.optimizer_defaults.iterations = 2;
  plan.base.sa_reference_source.sa_config.restarts = 20;
  plan.base.sa_reference_source.cache_path = (dir / "sa_cache.json").string();
  plan.base.workers = 1;

  const std::size_t expected_arms[] = {3, 2, 4};
  const AblationDimension dimensions[] = {AblationDimension::PoolDesign,
                                          AblationDimension::ObjectiveFormula,
                                          AblationDimension::InputFormat};
  for (int d = 0; d < 3; ++d) {
    plan.dimension = dimensions[d];
    plan.base.trace_dir = (dir / ("traces_" + to_string(dimensions[d]))).string();
    const auto results = run_ablation(plan);
    EXPECT(results.size() == expected_arms[d],
           to_string(dimensions[d]) << " produced " << results.size() << " arms, expected "
                                    << expected_arms[d]);
  }

  // the two formula arms must render prompts that differ only by the block
  const DsmCase dsm_case = load_case_file(plan.base.case_paths[0]);
  const std::vector<SolutionRecord> history = singleton_history(dsm_case);
  const std::vector<AblationArm> arms =
      ablation_arms(AblationDimension::ObjectiveFormula, PromptSpec{});
  if (arms.size() == 2) {
    PromptSpec on = arms[0].spec;
    PromptSpec off = arms[1].spec;
    on.shuffle_seed = off.shuffle_seed = 9;
    const RenderedPrompt with = render_prompt(dsm_case, on, history, history, 1);
    const RenderedPrompt without = render_prompt(dsm_case, off, history, history, 1);
    const std::string formula = total_cost_formula_text(dsm_case.size(), 1.0);
    const std::size_t at = with.user_message.find(formula);
    EXPECT(at != std::string::npos, "formula block missing from the formula_on prompt");
    if (at != std::string::npos) {
      std::string stripped = with.user_message;
      stripped.erase(at, formula.size() + 2);
      EXPECT(stripped == without.user_message,
             "formula arms differ beyond the formula block");
    }
  } else {
    EXPECT(false, "objective_formula enumerated " << arms.size() << " arms");
  }
}

void check_ce_bounds(std::vector<std::string>& failures) {
  Rng rng(606);
  for (int trial = 0; trial < 1000; ++trial) {
    const DsmCase dsm_case = random_case(rng, 3, 10);
    const Partition partition = random_partition(dsm_case, rng.next_u64());
    const double ce = clustering_efficiency(dsm_case, partition);
    EXPECT(ce >= 0.0 && ce <= 1.0, "CE " << ce << " out of [0,1] on trial " << trial);
  }
  for (int trial = 0; trial < 25; ++trial) {
    const DsmCase dsm_case = random_case(rng, 3, 10);
    EXPECT(clustering_efficiency(dsm_case, single_module_partition(dsm_case)) == 1.0,
           "single-module CE != 1.0 exactly");
    EXPECT(clustering_efficiency(dsm_case, singleton_partition(dsm_case)) == 0.0,
           "singleton CE != 0.0 exactly");
  }
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "TotalCost identities on 50 random cases", 1.0, check_cost_identities},
      {2, "naive-oracle equivalence on 1000 pairs", 5.0, check_metric_oracle},
      {3, "SA attains brute-force optimum (>=19/20, never below)", 120.0,
       check_sa_vs_brute},
      {4, "Gap% arithmetic anchor 3.63%", 1.0, check_gap_anchor},
      {5, "response validation suite + 10k fuzz", 10.0, check_validation_suite},
      {6, "oracle-mock loop reaches the optimum on 10 cases", 30.0, check_oracle_loop},
      {7, "random-move loop improves and reruns byte-identically", 60.0,
       check_random_move_loop},
      {8, "prompt goldens across 16 conditions", 1.0, check_prompt_goldens},
      {9, "ablation arm counts 3/2/4 and formula-only delta", 10.0, check_ablation},
      {10, "clustering efficiency bounds and anchors", 1.0, check_ce_bounds},
  };

  int failed = 0;
  for (const Criterion& criterion : criteria) {
    std::vector<std::string> failures;
    const auto started = std::chrono::steady_clock::now();
    try {
      criterion.body(failures);
    } catch (const std::exception& error) {
      failures.push_back(std::string("unexpected exception: ") + error.what());
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (elapsed > criterion.budget_seconds) {
      std::ostringstream oss;
      oss << "runtime " << elapsed << " s exceeded the " << criterion.budget_seconds
          << " s budget";
      failures.push_back(oss.str());
    }

    if (failures.empty()) {
      std::printf("[PASS] criterion %2d: %s (%.2f s)\n", criterion.number,
                  criterion.title.c_str(), elapsed);
    } else {
      ++failed;
      std::printf("[FAIL] criterion %2d: %s (%.2f s)\n", criterion.number,
                  criterion.title.c_str(), elapsed);
      for (const std::string& failure : failures) {
        std::printf("       - %s\n", failure.c_str());
      }
    }
    std::fflush(stdout);
  }

  if (failed > 0) {
    std::printf("%d of %zu acceptance criteria failed\n", failed, criteria.size());
    return 1;
  }
  std::printf("all %zu acceptance criteria passed\n", criteria.size());
  return 0;
}
