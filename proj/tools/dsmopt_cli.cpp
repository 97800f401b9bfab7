// Command line front end for the DSM modularization toolkit.
//
// Subcommands: solve, sa-ref, brute, eval, experiment, ablate,
// prompt-preview, report. Exit codes: 0 success, 1 usage/config error,
// 2 runtime failure (I/O, transport).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dsmopt/core_model.hpp"
#include "dsmopt/errors.hpp"
#include "dsmopt/harness.hpp"
#include "dsmopt/llm_gateway.hpp"
#include "dsmopt/metrics.hpp"
#include "dsmopt/optimizer.hpp"
#include "dsmopt/prompting.hpp"
#include "dsmopt/reference_solvers.hpp"
#include "dsmopt/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json partition_json(const dsmopt::DsmCase& dsm_case, const dsmopt::Partition& partition) {
  json mapping = json::object();
  for (const auto& [node, module] : dsmopt::partition_to_map(dsm_case, partition)) {
    mapping[node] = "M" + std::to_string(module);
  }
  return mapping;
}

json load_json_file(const fs::path& path, const char* what) {
  std::ifstream input(path);
  if (!input) {
    throw dsmopt::IoError(std::string("cannot open ") + what + ": " + path.string());
  }
  try {
    json data;
    input >> data;
    return data;
  } catch (const json::exception& error) {
    throw dsmopt::ConfigError(std::string(what) + " " + path.string() +
                              " is not valid JSON: " + error.what());
  }
}

struct SolveArgs {
  std::string case_path;
  int knowledge = 0;
  int iterations = 30;
  std::string format = "directed_edge_list";
  std::string backend = "mock:random_move";
  std::uint64_t seed = 0;
  int pool_best_p = 5;
  int pool_random_q = 5;
  bool no_formula = false;
  double rho = 1.0;
  double temperature = 1.0;
  std::string model;
  std::string trace_out;
};

int cmd_solve(const SolveArgs& args) {
  const dsmopt::DsmCase dsm_case = dsmopt::load_case_file(args.case_path);
  dsmopt::OptimizerConfig config;
  config.iterations = args.iterations;
  config.master_seed = args.seed;
  config.cost_params.rho = args.rho;
  config.temperature = args.temperature;
  config.model_name = args.model;
  config.prompt_spec.input_format = dsmopt::input_format_from_string(args.format);
  config.prompt_spec.knowledge = args.knowledge != 0;
  config.prompt_spec.include_formula = !args.no_formula;
  config.prompt_spec.pool_best_p = args.pool_best_p;
  config.prompt_spec.pool_random_q = args.pool_random_q;

  const dsmopt::BackendSpec backend_spec = dsmopt::backend_spec_from_string(args.backend);
  const std::unique_ptr<dsmopt::ChatBackend> backend = dsmopt::default_backend_factory()(
      backend_spec, dsm_case, dsmopt::derive_seed(args.seed, "backend"));

  const dsmopt::RunTrace trace = dsmopt::run_optimization(dsm_case, config, *backend);
  if (!args.trace_out.empty()) {
    std::ofstream out(args.trace_out, std::ios::binary);
    if (!out) throw dsmopt::IoError("cannot open " + args.trace_out + " for writing");
    out << dsmopt::trace_to_json(trace).dump(2) << "\n";
  }

  json result{{"case", dsm_case.name()},
              {"backend", backend->name()},
              {"iterations", args.iterations},
              {"invalid_iterations", trace.invalid_count},
              {"best_cost", trace.best.total_cost},
              {"best_found_at", trace.best.iteration_found},
              {"best_partition", partition_json(dsm_case, trace.best.partition)},
              {"init_cost", trace.init.total_cost}};
  std::cout << result.dump(2) << "\n";
  return 0;
}

struct SaRefArgs {
  std::string case_path;
  int restarts = 200;
  bool full_scale = false;
  double alpha = 0.9;
  int steps = 150;
  int moves_per_step = 0;
  std::optional<double> initial_temperature;
  std::uint64_t seed = 0;
  double rho = 1.0;
  int workers = 1;
  std::string cache;
};

int cmd_sa_ref(const SaRefArgs& args) {
  const dsmopt::DsmCase dsm_case = dsmopt::load_case_file(args.case_path);
  dsmopt::SaConfig config;
  config.alpha = args.alpha;
  config.temperature_steps = args.steps;
  config.moves_per_step = args.moves_per_step;
  config.restarts = args.full_scale ? 10000 : args.restarts;
  config.initial_temperature = args.initial_temperature;
  config.rng_seed = args.seed;
  config.cost_params.rho = args.rho;

  dsmopt::SaReferenceStore store;
  const bool use_cache = !args.cache.empty();
  if (use_cache && fs::exists(args.cache)) {
    store = dsmopt::SaReferenceStore::load(args.cache);
  }

  dsmopt::SaReferenceResult result;
  const std::optional<double> cached = store.lookup(dsm_case, config);
  if (cached) {
    result.best.total_cost = *cached;
    result.restarts_run = 0;
  } else {
    result = dsmopt::sa_reference(dsm_case, config, args.workers);
    if (use_cache) {
      store.put(dsm_case, config, result.best.total_cost);
      store.save(args.cache);
    }
  }

  json histogram = json::array();
  if (!result.restart_costs.empty()) {
    double lo = result.restart_costs.front(), hi = lo;
    for (const double c : result.restart_costs) {
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
    const int bins = hi - lo < 1e-12 ? 1 : 10;
    const double width = bins == 1 ? 1.0 : (hi - lo) / bins;
    std::vector<int> counts(static_cast<std::size_t>(bins), 0);
    for (const double c : result.restart_costs) {
      int bin = bins == 1 ? 0 : static_cast<int>((c - lo) / width);
      bin = std::min(bin, bins - 1);
      ++counts[static_cast<std::size_t>(bin)];
    }
    for (int b = 0; b < bins; ++b) {
      histogram.push_back(json{{"lo", lo + b * width},
                               {"hi", bins == 1 ? hi : lo + (b + 1) * width},
                               {"count", counts[static_cast<std::size_t>(b)]}});
    }
  }

  json out{{"case", dsm_case.name()},
           {"best_cost", result.best.total_cost},
           {"restarts", config.restarts},
           {"restarts_run", result.restarts_run},
           {"histogram", histogram}};
  if (!result.best.partition.modules.empty()) {
    out["best_partition"] = partition_json(dsm_case, result.best.partition);
  } else {
    out["best_partition"] = nullptr;  // served from cache; partition not stored
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_brute(const std::string& case_path, int max_n, double rho) {
  const dsmopt::DsmCase dsm_case = dsmopt::load_case_file(case_path);
  dsmopt::CostParams params;
  params.rho = rho;
  const dsmopt::SolutionRecord best = dsmopt::brute_force_optimum(dsm_case, params, max_n);
  json out{{"case", dsm_case.name()},
           {"best_cost", best.total_cost},
           {"best_partition", partition_json(dsm_case, best.partition)},
           {"modules", best.partition.module_count}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_eval(const std::string& case_path, const std::string& partition_path, double rho) {
  const dsmopt::DsmCase dsm_case = dsmopt::load_case_file(case_path);
  const json raw = load_json_file(partition_path, "partition file");
  if (!raw.is_object()) {
    throw dsmopt::ConfigError("partition file must be a JSON object node -> module");
  }
  std::unordered_map<dsmopt::NodeId, std::string> assignment;
  for (const auto& [node, module] : raw.items()) {
    if (!module.is_string()) {
      throw dsmopt::ConfigError("module labels must be strings, got " + module.dump() +
                                " for node '" + node + "'");
    }
    assignment[node] = module.get<std::string>();
  }
  const dsmopt::Partition partition = dsmopt::canonicalize(assignment, dsm_case);
  dsmopt::CostParams params;
  params.rho = rho;
  json out{{"case", dsm_case.name()},
           {"total_cost", dsmopt::total_cost(dsm_case, partition, params)},
           {"clustering_efficiency", dsmopt::clustering_efficiency(dsm_case, partition)},
           {"modules", partition.module_count}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_experiment(const std::string& plan_path, const std::string& out_dir,
                   std::optional<int> workers, std::optional<std::uint64_t> seed) {
  dsmopt::ExperimentPlan plan = dsmopt::load_plan_file(plan_path);
  if (workers) plan.workers = *workers;
  if (seed) plan.optimizer_defaults.master_seed = *seed;
  const std::vector<dsmopt::ConditionSummary> summaries = dsmopt::run_experiment(plan);
  const std::vector<fs::path> written = dsmopt::emit_report(summaries, out_dir);
  json files = json::array();
  for (const fs::path& path : written) files.push_back(path.string());
  json cells = json::array();
  for (const dsmopt::ConditionSummary& summary : summaries) {
    cells.push_back(json{{"case", summary.case_name},
                         {"backend", summary.backend},
                         {"k", summary.knowledge ? 1 : 0},
                         {"cost_mean", summary.total_cost.mean},
                         {"gap_mean", summary.final_gap.mean},
                         {"runs_completed", summary.runs_completed},
                         {"runs_requested", summary.runs_requested}});
  }
  std::cout << json{{"report_dir", out_dir}, {"files", files}, {"cells", cells}}.dump(2)
            << "\n";
  return 0;
}

int cmd_ablate(const std::string& plan_path, const std::string& out_dir,
               std::optional<int> workers) {
  dsmopt::AblationPlan plan = dsmopt::load_ablation_plan_file(plan_path);
  if (workers) plan.base.workers = *workers;
  const auto results = dsmopt::run_ablation(plan);

  fs::create_directories(out_dir);
  std::string csv =
      "arm,case,backend,k,cost_mean,cost_std,ce_mean,ce_std,gap_mean,gap_std,reference,"
      "runs\n";
  json arms = json::array();
  for (const auto& [arm, summary] : results) {
    char row[512];
    std::snprintf(row, sizeof(row), "%s,%s,%s,%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%d\n",
                  arm.name.c_str(), summary.case_name.c_str(), summary.backend.c_str(),
                  summary.knowledge ? 1 : 0, summary.total_cost.mean,
                  summary.total_cost.std, summary.ce.mean, summary.ce.std,
                  summary.final_gap.mean, summary.final_gap.std, summary.reference_cost,
                  summary.runs_completed);
    csv += row;
    dsmopt::emit_report({summary}, fs::path(out_dir) / arm.name);
    arms.push_back(json{{"arm", arm.name},
                        {"cost_mean", summary.total_cost.mean},
                        {"gap_mean", summary.final_gap.mean},
                        {"runs_completed", summary.runs_completed}});
  }
  const fs::path csv_path = fs::path(out_dir) / "ablation.csv";
  std::ofstream out(csv_path, std::ios::binary);
  if (!out) throw dsmopt::IoError("cannot open " + csv_path.string() + " for writing");
  out << csv;
  std::cout << json{{"report_dir", out_dir},
                    {"dimension", dsmopt::to_string(plan.dimension)},
                    {"arms", arms}}
                   .dump(2)
            << "\n";
  return 0;
}

struct PreviewArgs {
  std::string case_path;
  int knowledge = 0;
  std::string format = "directed_edge_list";
  int iteration = 1;
  std::uint64_t seed = 0;
  bool no_formula = false;
  int pool_best_p = 5;
  int pool_random_q = 5;
  double rho = 1.0;
  std::string history_path;
};

int cmd_prompt_preview(const PreviewArgs& args) {
  const dsmopt::DsmCase dsm_case = dsmopt::load_case_file(args.case_path);
  dsmopt::PromptSpec spec;
  spec.input_format = dsmopt::input_format_from_string(args.format);
  spec.knowledge = args.knowledge != 0;
  spec.include_formula = !args.no_formula;
  spec.pool_best_p = args.pool_best_p;
  spec.pool_random_q = args.pool_random_q;
  spec.shuffle_seed = args.seed;
  spec.rho = args.rho;

  std::vector<dsmopt::SolutionRecord> history;
  if (!args.history_path.empty()) {
    const dsmopt::RunTrace trace =
        dsmopt::trace_from_json(load_json_file(args.history_path, "trace file"));
    history.push_back(trace.init);
    for (const dsmopt::IterationRecord& record : trace.records) {
      if (record.partition && record.total_cost) {
        history.push_back(dsmopt::SolutionRecord{*record.partition, *record.total_cost,
                                                 record.iteration});
      }
    }
  } else {
    const dsmopt::Partition singleton = dsmopt::singleton_partition(dsm_case);
    dsmopt::CostParams params;
    params.rho = args.rho;
    history.push_back(dsmopt::SolutionRecord{
        singleton, dsmopt::total_cost(dsm_case, singleton, params), 0});
  }

  const dsmopt::RenderedPrompt prompt = dsmopt::render_prompt(
      dsm_case, spec, dsmopt::pool_best_slice(history, spec.pool_best_p), history,
      args.iteration);
  std::cout << "# system\n"
            << prompt.system_message << "\n\n# user\n"
            << prompt.user_message << "\n# prompt_hash: " << prompt.prompt_hash << "\n";
  return 0;
}

int cmd_report(const std::string& traces_dir, const std::string& out_dir) {
  const std::vector<dsmopt::ConditionSummary> summaries =
      dsmopt::report_from_traces(traces_dir);
  const std::vector<fs::path> written = dsmopt::emit_report(summaries, out_dir);
  json files = json::array();
  for (const fs::path& path : written) files.push_back(path.string());
  std::cout << json{{"report_dir", out_dir}, {"files", files}}.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DSM modularization toolkit: LLM-driven loop, SA and exact references"};
  app.require_subcommand(1);

  SolveArgs solve_args;
  CLI::App* solve = app.add_subcommand("solve", "Run the LLM-driven optimization loop");
  solve->add_option("case", solve_args.case_path, "case JSON file")->required();
  solve->add_option("--k", solve_args.knowledge, "knowledge condition: 0 labels, 1 names")
      ->check(CLI::Range(0, 1));
  solve->add_option("--iters", solve_args.iterations, "iteration budget");
  solve->add_option("--format", solve_args.format,
                    "directed_edge_list|adjacency_matrix|undirected_edge_list|natural_"
                    "language");
  solve->add_option("--backend", solve_args.backend,
                    "mock:<mode>[:<extra>] or an http(s):// base URL");
  solve->add_option("--seed", solve_args.seed, "master seed");
  solve->add_option("--p", solve_args.pool_best_p, "best solutions in the prompt pool");
  solve->add_option("--q", solve_args.pool_random_q, "random solutions in the prompt pool");
  solve->add_flag("--no-formula", solve_args.no_formula, "omit the TotalCost formula block");
  solve->add_option("--rho", solve_args.rho, "module size exponent");
  solve->add_option("--temperature", solve_args.temperature, "sampling temperature");
  solve->add_option("--model", solve_args.model, "model name for http backends");
  solve->add_option("--trace", solve_args.trace_out, "write the run trace JSON here");

  SaRefArgs sa_args;
  CLI::App* sa_ref = app.add_subcommand("sa-ref", "Compute the SA reference cost");
  sa_ref->add_option("case", sa_args.case_path, "case JSON file")->required();
  sa_ref->add_option("--restarts", sa_args.restarts, "restart count (desk scale: 200)");
  sa_ref->add_flag("--full", sa_args.full_scale, "use the full 10000-restart schedule");
  sa_ref->add_option("--alpha", sa_args.alpha, "geometric cooling factor");
  sa_ref->add_option("--steps", sa_args.steps, "temperature steps");
  sa_ref->add_option("--moves", sa_args.moves_per_step, "moves per step (0 = 2n)");
  double t0 = 0.0;
  CLI::Option* t0_opt = sa_ref->add_option("--t0", t0, "initial temperature (default: auto)");
  sa_ref->add_option("--seed", sa_args.seed, "RNG seed");
  sa_ref->add_option("--rho", sa_args.rho, "module size exponent");
  sa_ref->add_option("--workers", sa_args.workers, "parallel restart workers");
  sa_ref->add_option("--cache", sa_args.cache, "reference cache JSON file");

  std::string brute_case;
  int brute_max_n = 12;
  double brute_rho = 1.0;
  CLI::App* brute = app.add_subcommand("brute", "Exact optimum by full enumeration");
  brute->add_option("case", brute_case, "case JSON file")->required();
  brute->add_option("--max-n", brute_max_n, "refuse cases larger than this");
  brute->add_option("--rho", brute_rho, "module size exponent");

  std::string eval_case, eval_partition;
  double eval_rho = 1.0;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a partition file against a case");
  eval->add_option("case", eval_case, "case JSON file")->required();
  eval->add_option("partition", eval_partition, "JSON object node -> module label")
      ->required();
  eval->add_option("--rho", eval_rho, "module size exponent");

  std::string exp_plan, exp_out = "report";
  std::optional<int> exp_workers;
  std::optional<std::uint64_t> exp_seed;
  int exp_workers_raw = 0;
  std::uint64_t exp_seed_raw = 0;
  CLI::App* experiment = app.add_subcommand("experiment", "Run an experiment plan");
  experiment->add_option("plan", exp_plan, "experiment plan JSON file")->required();
  experiment->add_option("--out", exp_out, "report output directory");
  CLI::Option* exp_workers_opt =
      experiment->add_option("--workers", exp_workers_raw, "parallel run workers");
  CLI::Option* exp_seed_opt =
      experiment->add_option("--seed", exp_seed_raw, "override the plan master seed");

  std::string abl_plan, abl_out = "ablation";
  std::optional<int> abl_workers;
  int abl_workers_raw = 0;
  CLI::App* ablate = app.add_subcommand("ablate", "Run an ablation plan");
  ablate->add_option("plan", abl_plan, "ablation plan JSON file")->required();
  ablate->add_option("--out", abl_out, "report output directory");
  CLI::Option* abl_workers_opt =
      ablate->add_option("--workers", abl_workers_raw, "parallel run workers");

  PreviewArgs preview_args;
  CLI::App* preview = app.add_subcommand("prompt-preview", "Render one prompt to stdout");
  preview->add_option("case", preview_args.case_path, "case JSON file")->required();
  preview->add_option("--k", preview_args.knowledge, "knowledge condition")
      ->check(CLI::Range(0, 1));
  preview->add_option("--format", preview_args.format, "input format");
  preview->add_option("--iteration", preview_args.iteration, "iteration number");
  preview->add_option("--seed", preview_args.seed, "label/order shuffle seed");
  preview->add_flag("--no-formula", preview_args.no_formula, "omit the formula block");
  preview->add_option("--p", preview_args.pool_best_p, "best solutions in the pool");
  preview->add_option("--q", preview_args.pool_random_q, "random solutions in the pool");
  preview->add_option("--rho", preview_args.rho, "module size exponent");
  preview->add_option("--history", preview_args.history_path,
                      "trace JSON supplying the solution base");

  std::string report_traces, report_out = "report";
  CLI::App* report = app.add_subcommand("report", "Rebuild a report from trace files");
  report->add_option("traces", report_traces, "directory of trace JSON files")->required();
  report->add_option("--out", report_out, "report output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& error) {
    const int code = app.exit(error);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*solve) return cmd_solve(solve_args);
    if (*sa_ref) {
      if (t0_opt->count() > 0) sa_args.initial_temperature = t0;
      return cmd_sa_ref(sa_args);
    }
    if (*brute) return cmd_brute(brute_case, brute_max_n, brute_rho);
    if (*eval) return cmd_eval(eval_case, eval_partition, eval_rho);
    if (*experiment) {
      if (exp_workers_opt->count() > 0) exp_workers = exp_workers_raw;
      if (exp_seed_opt->count() > 0) exp_seed = exp_seed_raw;
      return cmd_experiment(exp_plan, exp_out, exp_workers, exp_seed);
    }
    if (*ablate) {
      if (abl_workers_opt->count() > 0) abl_workers = abl_workers_raw;
      return cmd_ablate(abl_plan, abl_out, abl_workers);
    }
    if (*preview) return cmd_prompt_preview(preview_args);
    if (*report) return cmd_report(report_traces, report_out);
  } catch (const dsmopt::ConfigError& error) {
    std::cerr << "error: " << error.what() << "\n";
    return 1;
  } catch (const dsmopt::CaseError& error) {
    std::cerr << "error: " << error.what() << "\n";
    return 1;
  } catch (const std::exception& error) {
    std::cerr << "error: " << error.what() << "\n";
    return 2;
  }
  return 0;
}
