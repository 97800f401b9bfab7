#include "dsmopt/optimizer.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

#include "dsmopt/rng.hpp"

namespace dsmopt {

namespace {

using nlohmann::json;

// Finds the first balanced {...} substring that parses as a JSON object.
// The scan is quote-aware so braces inside string values don't end the block.
std::optional<std::string> first_json_object(const std::string& text) {
  for (std::size_t start = text.find('{'); start != std::string::npos;
       start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      const char c = text[i];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (c == '\\') {
          escaped = true;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}') {
        if (--depth == 0) {
          std::string candidate = text.substr(start, i - start + 1);
          const json parsed = json::parse(candidate, nullptr, /*allow_exceptions=*/false);
          if (!parsed.is_discarded() && parsed.is_object()) return candidate;
          break;  // balanced but not valid JSON: try the next '{'
        }
      }
    }
  }
  return std::nullopt;
}

// SAX walker that stops at the first duplicate key of the top-level object.
struct DupKeyScanner : public json::json_sax_t {
  int depth = 0;
  std::set<std::string> seen;
  std::string duplicate;

  bool null() override { return true; }
  bool boolean(bool) override { return true; }
  bool number_integer(number_integer_t) override { return true; }
  bool number_unsigned(number_unsigned_t) override { return true; }
  bool number_float(number_float_t, const string_t&) override { return true; }
  bool string(string_t&) override { return true; }
  bool binary(binary_t&) override { return true; }
  bool start_object(std::size_t) override {
    ++depth;
    return true;
  }
  bool key(string_t& value) override {
    if (depth == 1 && !seen.insert(value).second) {
      duplicate = value;
      return false;
    }
    return true;
  }
  bool end_object() override {
    --depth;
    return true;
  }
  bool start_array(std::size_t) override {
    ++depth;
    return true;
  }
  bool end_array() override {
    --depth;
    return true;
  }
  bool parse_error(std::size_t, const std::string&, const nlohmann::detail::exception&) override {
    return false;
  }
};

json partition_to_json(const Partition& partition) {
  return json(partition.modules);
}

Partition partition_from_json(const json& data) {
  std::vector<int> modules = data.get<std::vector<int>>();
  return canonicalize_labels(modules);
}

json solution_to_json(const SolutionRecord& record) {
  return json{{"partition", partition_to_json(record.partition)},
              {"total_cost", record.total_cost},
              {"iteration_found", record.iteration_found}};
}

SolutionRecord solution_from_json(const json& data) {
  SolutionRecord record;
  record.partition = partition_from_json(data.at("partition"));
  record.total_cost = data.at("total_cost").get<double>();
  record.iteration_found = data.at("iteration_found").get<int>();
  return record;
}

IterationOutcome outcome_from_string(const std::string& text) {
  if (text == "valid") return IterationOutcome::Valid;
  if (text == "parse_failure") return IterationOutcome::ParseFailure;
  if (text == "validation_failure") return IterationOutcome::ValidationFailure;
  if (text == "transport_failure") return IterationOutcome::TransportFailure;
  throw ConfigError("unknown iteration outcome: " + text);
}

ParseFailureKind parse_failure_from_string(const std::string& text) {
  if (text == "no_json_block") return ParseFailureKind::NoJsonBlock;
  if (text == "missing_node") return ParseFailureKind::MissingNode;
  if (text == "extra_node") return ParseFailureKind::ExtraNode;
  if (text == "single_module") return ParseFailureKind::SingleModule;
  if (text == "non_string_label") return ParseFailureKind::NonStringLabel;
  if (text == "duplicate_assignment") return ParseFailureKind::DuplicateAssignment;
  throw ConfigError("unknown parse failure kind: " + text);
}

}  // namespace

std::string to_string(ParseFailureKind kind) {
  switch (kind) {
    case ParseFailureKind::NoJsonBlock:
      return "no_json_block";
    case ParseFailureKind::MissingNode:
      return "missing_node";
    case ParseFailureKind::ExtraNode:
      return "extra_node";
    case ParseFailureKind::SingleModule:
      return "single_module";
    case ParseFailureKind::NonStringLabel:
      return "non_string_label";
    case ParseFailureKind::DuplicateAssignment:
      return "duplicate_assignment";
  }
  return "unknown";
}

std::string to_string(IterationOutcome outcome) {
  switch (outcome) {
    case IterationOutcome::Valid:
      return "valid";
    case IterationOutcome::ParseFailure:
      return "parse_failure";
    case IterationOutcome::ValidationFailure:
      return "validation_failure";
    case IterationOutcome::TransportFailure:
      return "transport_failure";
  }
  return "unknown";
}

ParseResult parse_response(const std::string& text, const LabelMap& label_map,
                           const DsmCase& dsm_case) {
  ParseResult result;
  const std::optional<std::string> block = first_json_object(text);
  if (!block) {
    result.failure = ParseFailureKind::NoJsonBlock;
    return result;
  }

  DupKeyScanner scanner;
  if (!json::sax_parse(*block, &scanner) && !scanner.duplicate.empty()) {
    result.failure = ParseFailureKind::DuplicateAssignment;
    result.detail = scanner.duplicate;
    return result;
  }

  const json object = json::parse(*block);
  std::unordered_map<NodeId, std::string> assignment;
  assignment.reserve(object.size());
  for (const auto& [key, value] : object.items()) {
    if (!value.is_string()) {
      result.failure = ParseFailureKind::NonStringLabel;
      result.detail = key;
      return result;
    }
    const auto found = label_map.to_node.find(key);
    if (found == label_map.to_node.end()) {
      result.failure = ParseFailureKind::ExtraNode;
      result.detail = key;
      return result;
    }
    assignment[found->second] = value.get<std::string>();
  }
  for (const DsmNode& node : dsm_case.nodes()) {
    if (assignment.find(node.id) == assignment.end()) {
      result.failure = ParseFailureKind::MissingNode;
      result.detail = node.id;
      return result;
    }
  }
  std::set<std::string> distinct;
  for (const auto& [id, module] : assignment) distinct.insert(module);
  if (distinct.size() < 2) {
    result.failure = ParseFailureKind::SingleModule;
    return result;
  }
  result.partition = canonicalize(assignment, dsm_case);
  return result;
}

std::vector<SolutionRecord> pool_best_slice(const std::vector<SolutionRecord>& history,
                                            int p) {
  std::vector<SolutionRecord> sorted = history;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const SolutionRecord& a, const SolutionRecord& b) {
                     if (a.total_cost != b.total_cost) return a.total_cost < b.total_cost;
                     return a.iteration_found < b.iteration_found;
                   });
  std::vector<SolutionRecord> slice;
  for (const SolutionRecord& record : sorted) {
    if (static_cast<int>(slice.size()) >= p) break;
    const bool duplicate =
        std::any_of(slice.begin(), slice.end(), [&](const SolutionRecord& kept) {
          return kept.partition == record.partition;
        });
    if (!duplicate) slice.push_back(record);
  }
  return slice;
}

std::vector<SolutionRecord> update_pool(const std::vector<SolutionRecord>& history, int p,
                                        int q, std::uint64_t rng_seed) {
  if (history.empty()) {
    throw ConfigError("solution pool update needs a non-empty history");
  }
  return sample_solution_base(pool_best_slice(history, p), history, p, q, rng_seed);
}

RunTrace run_optimization(const DsmCase& dsm_case, const OptimizerConfig& config,
                          ChatBackend& backend) {
  if (config.iterations < 1) {
    throw ConfigError("optimizer needs iterations >= 1");
  }
  if (config.retry_policy.max_attempts < 1) {
    throw ConfigError("retry policy needs max_attempts >= 1");
  }
  validate_prompt_spec(config.prompt_spec);
  if (config.prompt_spec.knowledge && !dsm_case.has_full_knowledge()) {
    throw ConfigError("knowledge condition k=1 requires a name and description for every "
                      "node of case '" + dsm_case.name() + "'");
  }

  PromptSpec spec = config.prompt_spec;
  spec.shuffle_seed = derive_seed(config.master_seed, "prompt");
  spec.rho = config.cost_params.rho;

  RunTrace trace;
  trace.case_name = dsm_case.name();
  trace.config = config;
  const Partition singleton = singleton_partition(dsm_case);
  trace.init = SolutionRecord{singleton, total_cost(dsm_case, singleton, config.cost_params), 0};
  trace.best = trace.init;

  std::vector<SolutionRecord> history{trace.init};
  for (int iteration = 1; iteration <= config.iterations; ++iteration) {
    IterationRecord record;
    record.iteration = iteration;

    const std::vector<SolutionRecord> slice =
        pool_best_slice(history, spec.pool_best_p);
    const RenderedPrompt prompt = render_prompt(dsm_case, spec, slice, history, iteration);
    record.prompt_hash = prompt.prompt_hash;

    ChatRequest request;
    request.system_message = prompt.system_message;
    request.user_message = prompt.user_message;
    request.temperature = config.temperature;
    request.model_name = config.model_name;
    request.max_output_tokens = config.max_output_tokens;

    const auto attempt = [&]() {
      record.failure.reset();
      record.failure_detail.clear();
      record.partition.reset();
      try {
        const ChatResponse response = complete(backend, request, config.retry_policy);
        record.raw_response = response.text;
      } catch (const GatewayError& error) {
        record.outcome = IterationOutcome::TransportFailure;
        record.failure_detail = error.what();
        return;
      }
      const ParseResult parsed = parse_response(record.raw_response, prompt.label_map, dsm_case);
      if (parsed.ok()) {
        record.outcome = IterationOutcome::Valid;
        record.partition = parsed.partition;
      } else {
        record.failure = parsed.failure;
        record.failure_detail = parsed.detail;
        record.outcome = parsed.failure == ParseFailureKind::NoJsonBlock
                             ? IterationOutcome::ParseFailure
                             : IterationOutcome::ValidationFailure;
      }
    };

    attempt();
    if (record.outcome != IterationOutcome::Valid && config.invalid_retry_in_place) {
      attempt();  // one in-place re-query of the identical prompt
    }

    if (record.outcome == IterationOutcome::Valid) {
      const double cost = total_cost(dsm_case, *record.partition, config.cost_params);
      record.total_cost = cost;
      history.push_back(SolutionRecord{*record.partition, cost, iteration});
      if (cost < trace.best.total_cost) trace.best = history.back();
    } else {
      ++trace.invalid_count;
    }
    record.best_so_far = trace.best.total_cost;
    trace.records.push_back(std::move(record));
  }
  return trace;
}

nlohmann::json optimizer_config_to_json(const OptimizerConfig& config) {
  return json{
      {"iterations", config.iterations},
      {"prompt_spec",
       json{{"input_format", to_string(config.prompt_spec.input_format)},
            {"knowledge", config.prompt_spec.knowledge},
            {"include_formula", config.prompt_spec.include_formula},
            {"pool_best_p", config.prompt_spec.pool_best_p},
            {"pool_random_q", config.prompt_spec.pool_random_q},
            {"shuffle_seed", config.prompt_spec.shuffle_seed},
            {"rho", config.prompt_spec.rho}}},
      {"cost_params", json{{"rho", config.cost_params.rho}}},
      {"master_seed", config.master_seed},
      {"invalid_retry_in_place", config.invalid_retry_in_place},
      {"temperature", config.temperature},
      {"model_name", config.model_name},
      {"max_output_tokens", config.max_output_tokens},
      {"retry", json{{"max_attempts", config.retry_policy.max_attempts},
                     {"backoff_base_ms",
                      static_cast<long long>(config.retry_policy.backoff_base.count())}}},
  };
}

OptimizerConfig optimizer_config_from_json(const nlohmann::json& data) {
  OptimizerConfig config;
  config.iterations = data.value("iterations", config.iterations);
  if (data.contains("prompt_spec")) {
    const json& spec = data.at("prompt_spec");
    config.prompt_spec.input_format =
        input_format_from_string(spec.value("input_format", std::string("directed_edge_list")));
    config.prompt_spec.knowledge = spec.value("knowledge", false);
    config.prompt_spec.include_formula = spec.value("include_formula", true);
    config.prompt_spec.pool_best_p = spec.value("pool_best_p", 5);
    config.prompt_spec.pool_random_q = spec.value("pool_random_q", 5);
    config.prompt_spec.shuffle_seed = spec.value("shuffle_seed", std::uint64_t{0});
    config.prompt_spec.rho = spec.value("rho", 1.0);
  }
  if (data.contains("cost_params")) {
    config.cost_params.rho = data.at("cost_params").value("rho", 1.0);
  }
  config.master_seed = data.value("master_seed", std::uint64_t{0});
  config.invalid_retry_in_place = data.value("invalid_retry_in_place", false);
  config.temperature = data.value("temperature", 1.0);
  config.model_name = data.value("model_name", std::string());
  config.max_output_tokens = data.value("max_output_tokens", 0);
  if (data.contains("retry")) {
    const json& retry = data.at("retry");
    config.retry_policy.max_attempts = retry.value("max_attempts", 3);
    config.retry_policy.backoff_base =
        std::chrono::milliseconds(retry.value("backoff_base_ms", 250));
  }
  return config;
}

nlohmann::json trace_to_json(const RunTrace& trace) {
  json records = json::array();
  for (const IterationRecord& record : trace.records) {
    json entry{
        {"iteration", record.iteration},
        {"prompt_hash", record.prompt_hash},
        {"raw_response", record.raw_response},
        {"outcome", to_string(record.outcome)},
        {"failure", record.failure ? json(to_string(*record.failure)) : json(nullptr)},
        {"failure_detail", record.failure_detail},
        {"partition",
         record.partition ? partition_to_json(*record.partition) : json(nullptr)},
        {"total_cost", record.total_cost ? json(*record.total_cost) : json(nullptr)},
        {"best_so_far", record.best_so_far},
    };
    records.push_back(std::move(entry));
  }
  return json{
      {"case_name", trace.case_name},  {"config", optimizer_config_to_json(trace.config)},
      {"init", solution_to_json(trace.init)}, {"records", std::move(records)},
      {"best", solution_to_json(trace.best)}, {"invalid_count", trace.invalid_count},
  };
}

RunTrace trace_from_json(const nlohmann::json& data) {
  RunTrace trace;
  trace.case_name = data.at("case_name").get<std::string>();
  trace.config = optimizer_config_from_json(data.at("config"));
  trace.init = solution_from_json(data.at("init"));
  trace.best = solution_from_json(data.at("best"));
  trace.invalid_count = data.at("invalid_count").get<int>();
  for (const json& entry : data.at("records")) {
    IterationRecord record;
    record.iteration = entry.at("iteration").get<int>();
    record.prompt_hash = entry.at("prompt_hash").get<std::string>();
    record.raw_response = entry.at("raw_response").get<std::string>();
    record.outcome = outcome_from_string(entry.at("outcome").get<std::string>());
    if (!entry.at("failure").is_null()) {
      record.failure = parse_failure_from_string(entry.at("failure").get<std::string>());
    }
    record.failure_detail = entry.at("failure_detail").get<std::string>();
    if (!entry.at("partition").is_null()) {
      record.partition = partition_from_json(entry.at("partition"));
    }
    if (!entry.at("total_cost").is_null()) {
      record.total_cost = entry.at("total_cost").get<double>();
    }
    record.best_so_far = entry.at("best_so_far").get<double>();
    trace.records.push_back(std::move(record));
  }
  return trace;
}

}  // namespace dsmopt
