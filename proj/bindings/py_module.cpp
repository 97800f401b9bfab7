// Python surface of the DSM modularization toolkit. Thin translation layer:
// cases in, plain dicts and floats out; all real work stays in the C++ core.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
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

namespace py = pybind11;

namespace {

dsmopt::Partition partition_from_dict(const dsmopt::DsmCase& dsm_case,
                                      const py::dict& assignment) {
  std::unordered_map<dsmopt::NodeId, std::string> raw;
  for (const auto& item : assignment) {
    const std::string node = py::cast<std::string>(item.first);
    std::string module;
    if (py::isinstance<py::str>(item.second)) {
      module = py::cast<std::string>(item.second);
    } else if (py::isinstance<py::int_>(item.second)) {
      module = std::to_string(py::cast<long long>(item.second));
    } else {
      throw dsmopt::ConfigError("module labels must be strings or integers");
    }
    raw[node] = module;
  }
  return dsmopt::canonicalize(raw, dsm_case);
}

py::dict partition_to_dict(const dsmopt::DsmCase& dsm_case,
                           const dsmopt::Partition& partition) {
  py::dict out;
  for (const auto& [node, module] : dsmopt::partition_to_map(dsm_case, partition)) {
    out[py::str(node)] = module;
  }
  return out;
}

dsmopt::CostParams cost_params(double rho) {
  dsmopt::CostParams params;
  params.rho = rho;
  return params;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "DSM modularization toolkit: TotalCost metrics, SA and exact reference "
            "solvers, prompt rendering and the LLM-driven optimization loop";

  py::register_exception_translator([](std::exception_ptr pointer) {
    try {
      if (pointer) std::rethrow_exception(pointer);
    } catch (const dsmopt::IoError& error) {
      PyErr_SetString(PyExc_OSError, error.what());
    } catch (const dsmopt::GatewayError& error) {
      PyErr_SetString(PyExc_RuntimeError, error.what());
    } catch (const dsmopt::Error& error) {
      PyErr_SetString(PyExc_ValueError, error.what());
    }
  });

  py::class_<dsmopt::DsmCase>(m, "Case")
      .def_property_readonly("name", &dsmopt::DsmCase::name)
      .def_property_readonly("size", &dsmopt::DsmCase::size)
      .def_property_readonly("edge_count", &dsmopt::DsmCase::edge_count)
      .def_property_readonly("total_weight", &dsmopt::DsmCase::total_weight)
      .def_property_readonly("has_full_knowledge", &dsmopt::DsmCase::has_full_knowledge)
      .def_property_readonly("node_ids",
                             [](const dsmopt::DsmCase& dsm_case) {
                               std::vector<std::string> ids;
                               ids.reserve(dsm_case.nodes().size());
                               for (const dsmopt::DsmNode& node : dsm_case.nodes()) {
                                 ids.push_back(node.id);
                               }
                               return ids;
                             })
      .def_property_readonly(
          "edges",
          [](const dsmopt::DsmCase& dsm_case) {
            py::list edges;
            for (const dsmopt::DsmEdge& edge : dsm_case.edges()) {
              edges.append(py::make_tuple(edge.target, edge.source, edge.weight));
            }
            return edges;
          },
          "list of (target, source, weight): target receives input from source")
      .def("to_json", [](const dsmopt::DsmCase& dsm_case) {
        return dsmopt::case_to_json_text(dsm_case);
      })
      .def("content_hash",
           [](const dsmopt::DsmCase& dsm_case) { return dsmopt::case_content_hash(dsm_case); })
      .def("__repr__", [](const dsmopt::DsmCase& dsm_case) {
        return "<dsmopt.Case '" + dsm_case.name() + "' n=" +
               std::to_string(dsm_case.size()) + " edges=" +
               std::to_string(dsm_case.edge_count()) + ">";
      });

  m.def("load_case",
        [](const std::string& path) { return dsmopt::load_case_file(path); },
        py::arg("path"), "Load a case document from a JSON file.");
  m.def("parse_case", &dsmopt::parse_case_text, py::arg("text"),
        "Parse a case document from JSON text.");
  m.def("generate_random_case", &dsmopt::generate_random_case, py::arg("n"),
        py::arg("density"), py::arg("weight_lo"), py::arg("weight_hi"), py::arg("seed"),
        "Random connected-ish case with integer weights, reproducible from the seed.");

  m.def(
      "total_cost",
      [](const dsmopt::DsmCase& dsm_case, const py::dict& assignment, double rho) {
        return dsmopt::total_cost(dsm_case, partition_from_dict(dsm_case, assignment),
                                  cost_params(rho));
      },
      py::arg("case"), py::arg("assignment"), py::arg("rho") = 1.0,
      "TotalCost of an assignment dict (node id -> module label).");
  m.def(
      "clustering_efficiency",
      [](const dsmopt::DsmCase& dsm_case, const py::dict& assignment) {
        return dsmopt::clustering_efficiency(dsm_case,
                                             partition_from_dict(dsm_case, assignment));
      },
      py::arg("case"), py::arg("assignment"),
      "Fraction of dependency weight kept inside modules, in [0, 1].");
  m.def("gap_percent", &dsmopt::gap_percent, py::arg("cost"), py::arg("reference"),
        "100 * (cost - reference) / reference.");

  m.def(
      "singleton_partition",
      [](const dsmopt::DsmCase& dsm_case) {
        return partition_to_dict(dsm_case, dsmopt::singleton_partition(dsm_case));
      },
      py::arg("case"), "Every node in its own module.");
  m.def(
      "canonical_partition",
      [](const dsmopt::DsmCase& dsm_case, const py::dict& assignment) {
        return partition_to_dict(dsm_case, partition_from_dict(dsm_case, assignment));
      },
      py::arg("case"), py::arg("assignment"),
      "Renumber arbitrary module labels to canonical 1..K form.");

  m.def(
      "sa_reference",
      [](const dsmopt::DsmCase& dsm_case, int restarts, double alpha, int steps,
         int moves_per_step, py::object initial_temperature, std::uint64_t seed,
         double rho, int workers) {
        dsmopt::SaConfig config;
        config.restarts = restarts;
        config.alpha = alpha;
        config.temperature_steps = steps;
        config.moves_per_step = moves_per_step;
        if (!initial_temperature.is_none()) {
          config.initial_temperature = py::cast<double>(initial_temperature);
        }
        config.rng_seed = seed;
        config.cost_params.rho = rho;
        dsmopt::SaReferenceResult result;
        {
          py::gil_scoped_release release;
          result = dsmopt::sa_reference(dsm_case, config, workers);
        }
        py::dict out;
        out["best_cost"] = result.best.total_cost;
        out["best_partition"] = partition_to_dict(dsm_case, result.best.partition);
        out["restarts_run"] = result.restarts_run;
        out["restart_costs"] = result.restart_costs;
        return out;
      },
      py::arg("case"), py::arg("restarts") = 200, py::arg("alpha") = 0.9,
      py::arg("steps") = 150, py::arg("moves_per_step") = 0,
      py::arg("initial_temperature") = py::none(), py::arg("seed") = 0,
      py::arg("rho") = 1.0, py::arg("workers") = 1,
      "Multi-restart simulated annealing reference (desk scale by default).");

  m.def(
      "brute_force_optimum",
      [](const dsmopt::DsmCase& dsm_case, double rho, int max_n) {
        dsmopt::SolutionRecord best;
        {
          py::gil_scoped_release release;
          best = dsmopt::brute_force_optimum(dsm_case, cost_params(rho), max_n);
        }
        py::dict out;
        out["best_cost"] = best.total_cost;
        out["best_partition"] = partition_to_dict(dsm_case, best.partition);
        return out;
      },
      py::arg("case"), py::arg("rho") = 1.0, py::arg("max_n") = 12,
      "Exact optimum by set-partition enumeration (small n only).");

  m.def(
      "render_prompt",
      [](const dsmopt::DsmCase& dsm_case, const std::string& input_format, bool knowledge,
         bool include_formula, int pool_best_p, int pool_random_q, std::uint64_t seed,
         int iteration, double rho) {
        dsmopt::PromptSpec spec;
        spec.input_format = dsmopt::input_format_from_string(input_format);
        spec.knowledge = knowledge;
        spec.include_formula = include_formula;
        spec.pool_best_p = pool_best_p;
        spec.pool_random_q = pool_random_q;
        spec.shuffle_seed = seed;
        spec.rho = rho;
        const dsmopt::Partition singleton = dsmopt::singleton_partition(dsm_case);
        const std::vector<dsmopt::SolutionRecord> history{dsmopt::SolutionRecord{
            singleton, dsmopt::total_cost(dsm_case, singleton, cost_params(rho)), 0}};
        const dsmopt::RenderedPrompt prompt = dsmopt::render_prompt(
            dsm_case, spec, dsmopt::pool_best_slice(history, spec.pool_best_p), history,
            iteration);
        py::dict out;
        out["system"] = prompt.system_message;
        out["user"] = prompt.user_message;
        out["prompt_hash"] = prompt.prompt_hash;
        out["label_map"] = prompt.label_map.to_node;  // display label -> node id
        return out;
      },
      py::arg("case"), py::arg("input_format") = "directed_edge_list",
      py::arg("knowledge") = false, py::arg("include_formula") = true, py::arg("p") = 5,
      py::arg("q") = 5, py::arg("seed") = 0, py::arg("iteration") = 1,
      py::arg("rho") = 1.0,
      "Render one prompt over a singleton-initialized solution base.");

  m.def(
      "parse_response",
      [](const dsmopt::DsmCase& dsm_case, const std::string& text,
         const std::unordered_map<std::string, std::string>& label_map) {
        dsmopt::LabelMap labels;
        for (const auto& [label, node] : label_map) {
          labels.to_node[label] = node;
          labels.to_label[node] = label;
        }
        const dsmopt::ParseResult result = dsmopt::parse_response(text, labels, dsm_case);
        py::dict out;
        out["ok"] = result.ok();
        if (result.ok()) {
          out["partition"] = partition_to_dict(dsm_case, *result.partition);
        } else {
          out["failure"] = dsmopt::to_string(*result.failure);
          out["detail"] = result.detail;
        }
        return out;
      },
      py::arg("case"), py::arg("text"), py::arg("label_map"),
      "Parse and validate a model reply against a label map (label -> node id).");

  m.def(
      "run_optimization",
      [](const dsmopt::DsmCase& dsm_case, const std::string& backend, int iterations,
         std::uint64_t seed, bool knowledge, const std::string& input_format,
         bool include_formula, int pool_best_p, int pool_random_q, double rho,
         bool return_trace) {
        dsmopt::OptimizerConfig config;
        config.iterations = iterations;
        config.master_seed = seed;
        config.cost_params.rho = rho;
        config.prompt_spec.input_format = dsmopt::input_format_from_string(input_format);
        config.prompt_spec.knowledge = knowledge;
        config.prompt_spec.include_formula = include_formula;
        config.prompt_spec.pool_best_p = pool_best_p;
        config.prompt_spec.pool_random_q = pool_random_q;

        const dsmopt::BackendSpec spec = dsmopt::backend_spec_from_string(backend);
        dsmopt::RunTrace trace;
        {
          py::gil_scoped_release release;
          const std::unique_ptr<dsmopt::ChatBackend> chat =
              dsmopt::default_backend_factory()(spec, dsm_case,
                                                dsmopt::derive_seed(seed, "backend"));
          trace = dsmopt::run_optimization(dsm_case, config, *chat);
        }

        py::dict out;
        out["case"] = trace.case_name;
        out["best_cost"] = trace.best.total_cost;
        out["best_partition"] = partition_to_dict(dsm_case, trace.best.partition);
        out["best_found_at"] = trace.best.iteration_found;
        out["init_cost"] = trace.init.total_cost;
        out["invalid_iterations"] = trace.invalid_count;
        out["clustering_efficiency"] =
            dsmopt::clustering_efficiency(dsm_case, trace.best.partition);
        std::vector<double> best_so_far;
        best_so_far.reserve(trace.records.size() + 1);
        best_so_far.push_back(trace.init.total_cost);
        for (const dsmopt::IterationRecord& record : trace.records) {
          best_so_far.push_back(record.best_so_far);
        }
        out["best_so_far"] = best_so_far;
        if (return_trace) {
          out["trace_json"] = dsmopt::trace_to_json(trace).dump();
        }
        return out;
      },
      py::arg("case"), py::arg("backend") = "mock:random_move", py::arg("iterations") = 30,
      py::arg("seed") = 0, py::arg("knowledge") = false,
      py::arg("input_format") = "directed_edge_list", py::arg("include_formula") = true,
      py::arg("p") = 5, py::arg("q") = 5, py::arg("rho") = 1.0,
      py::arg("return_trace") = false,
      "Run the LLM-driven loop against a backend string "
      "('mock:<mode>[:<extra>]' or an http(s):// base URL).");

  m.attr("__version__") = "0.1.0";
}
