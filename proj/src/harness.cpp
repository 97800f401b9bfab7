#include "dsmopt/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "dsmopt/parallel.hpp"
#include "dsmopt/rng.hpp"

namespace dsmopt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt6(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.6f", value);
  return buffer;
}

std::string fmt2(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.2f", value);
  return buffer;
}

std::string fmtg(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%g", value);
  return buffer;
}

std::string sanitize(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (const char c : text) {
    const bool keep = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                      (c >= '0' && c <= '9') || c == '_' || c == '-';
    out += keep ? c : '-';
  }
  return out;
}

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string quoted = "\"";
  for (const char c : text) {
    if (c == '"') quoted += "\"\"";
    else quoted += c;
  }
  quoted += "\"";
  return quoted;
}

void write_text(const fs::path& path, const std::string& content) {
  if (const fs::path parent = path.parent_path(); !parent.empty()) {
    fs::create_directories(parent);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  out << content;
  if (!out) {
    throw IoError("failed writing " + path.string());
  }
}

std::string cell_label_for(const std::string& case_name, const std::string& backend_label,
                           bool knowledge) {
  return sanitize(case_name) + "_" + sanitize(backend_label) + (knowledge ? "_k1" : "_k0");
}

SaConfig sa_config_from_json(const json& data, SaConfig base) {
  base.alpha = data.value("alpha", base.alpha);
  base.temperature_steps = data.value("temperature_steps", base.temperature_steps);
  base.moves_per_step = data.value("moves_per_step", base.moves_per_step);
  base.restarts = data.value("restarts", base.restarts);
  if (data.contains("initial_temperature") && !data.at("initial_temperature").is_null()) {
    base.initial_temperature = data.at("initial_temperature").get<double>();
  }
  base.rng_seed = data.value("rng_seed", base.rng_seed);
  base.cost_params.rho = data.value("rho", base.cost_params.rho);
  return base;
}

// Resolves one reference cost per case according to the plan's source.
std::vector<double> resolve_references(const ExperimentPlan& plan,
                                       const std::vector<DsmCase>& cases) {
  const SaReferenceSource& source = plan.sa_reference_source;
  std::vector<double> references(cases.size(), 0.0);

  if (source.kind == SaReferenceSourceKind::LoadFile) {
    if (source.path.empty()) {
      throw ConfigError("sa_reference source 'load_file' needs a path");
    }
    const SaReferenceStore store = SaReferenceStore::load(source.path);
    for (std::size_t i = 0; i < cases.size(); ++i) {
      std::optional<double> found = store.lookup(cases[i], source.sa_config);
      if (!found) found = store.lookup_any(cases[i]);
      if (!found) {
        throw ConfigError("missing SA reference for case '" + cases[i].name() + "' in " +
                          source.path);
      }
      references[i] = *found;
    }
    return references;
  }

  SaReferenceStore store;
  const bool use_cache = !source.cache_path.empty();
  if (use_cache && fs::exists(source.cache_path)) {
    store = SaReferenceStore::load(source.cache_path);
  }
  bool dirty = false;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (const std::optional<double> cached = store.lookup(cases[i], source.sa_config)) {
      references[i] = *cached;
      continue;
    }
    const SaReferenceResult result = sa_reference(cases[i], source.sa_config, plan.workers);
    references[i] = result.best.total_cost;
    store.put(cases[i], source.sa_config, references[i]);
    dirty = true;
  }
  if (use_cache && dirty) store.save(source.cache_path);
  return references;
}

std::string render_convergence_svg(const ConvergenceTable& table) {
  const double left = 72.0, right = 688.0, top = 52.0, bottom = 384.0;
  const double width = 720.0, height = 440.0;
  const int iterations = table.rows.empty() ? 0 : table.rows.back().iteration;
  const double x_max = std::max(1, iterations);

  double y_min = 0.0, y_max = 0.0;
  bool first = true;
  for (const ConvergenceRow& row : table.rows) {
    const double lo = row.gap_mean - row.gap_std;
    const double hi = row.gap_mean + row.gap_std;
    if (first) {
      y_min = lo;
      y_max = hi;
      first = false;
    } else {
      y_min = std::min(y_min, lo);
      y_max = std::max(y_max, hi);
    }
  }
  if (y_max - y_min < 1e-12) {
    y_min -= 1.0;
    y_max += 1.0;
  } else {
    const double pad = 0.05 * (y_max - y_min);
    y_min -= pad;
    y_max += pad;
  }

  const auto x_of = [&](double iteration) {
    return left + (right - left) * (iteration / x_max);
  };
  const auto y_of = [&](double value) {
    return bottom - (bottom - top) * ((value - y_min) / (y_max - y_min));
  };

  std::string band = "M";
  for (const ConvergenceRow& row : table.rows) {
    band += " " + fmt2(x_of(row.iteration)) + "," + fmt2(y_of(row.gap_mean + row.gap_std));
    band += " L";
  }
  band.erase(band.size() - 2);  // trailing " L"
  for (auto it = table.rows.rbegin(); it != table.rows.rend(); ++it) {
    band += " L " + fmt2(x_of(it->iteration)) + "," + fmt2(y_of(it->gap_mean - it->gap_std));
  }
  band += " Z";

  std::string mean;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    mean += (i == 0 ? "M " : " L ");
    mean += fmt2(x_of(table.rows[i].iteration)) + "," + fmt2(y_of(table.rows[i].gap_mean));
  }

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  svg << "  <rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  svg << "  <text x=\"" << (width / 2)
      << "\" y=\"28\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
      << table.cell_label << "</text>\n";

  // axes
  svg << "  <line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << right
      << "\" y2=\"" << bottom << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  svg << "  <line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
      << bottom << "\" stroke=\"black\" stroke-width=\"1\"/>\n";

  // x ticks
  const int x_step = std::max(1, iterations / 6);
  for (int t = 0; t <= iterations; t += x_step) {
    const double x = x_of(t);
    svg << "  <line x1=\"" << fmt2(x) << "\" y1=\"" << bottom << "\" x2=\"" << fmt2(x)
        << "\" y2=\"" << bottom + 5 << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    svg << "  <text x=\"" << fmt2(x) << "\" y=\"" << bottom + 20
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << t
        << "</text>\n";
  }
  // y ticks
  for (int t = 0; t <= 4; ++t) {
    const double value = y_min + (y_max - y_min) * t / 4.0;
    const double y = y_of(value);
    svg << "  <line x1=\"" << left - 5 << "\" y1=\"" << fmt2(y) << "\" x2=\"" << left
        << "\" y2=\"" << fmt2(y) << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    svg << "  <text x=\"" << left - 9 << "\" y=\"" << fmt2(y + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << fmtg(value) << "</text>\n";
  }

  svg << "  <text x=\"" << (left + right) / 2 << "\" y=\"" << height - 10
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">iteration"
      << "</text>\n";
  svg << "  <text x=\"18\" y=\"" << (top + bottom) / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
         "transform=\"rotate(-90 18 "
      << (top + bottom) / 2 << ")\">Gap (%)</text>\n";

  svg << "  <path d=\"" << band
      << "\" fill=\"#aac8e8\" fill-opacity=\"0.5\" stroke=\"none\"/>\n";
  svg << "  <path d=\"" << mean
      << "\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Backend specs

std::string BackendSpec::display_name() const {
  if (!label.empty()) return label;
  if (kind == "mock") return "mock:" + to_string(mock_mode);
  return "http:" + (model_name.empty() ? base_url : model_name);
}

BackendSpec backend_spec_from_json(const json& data) {
  BackendSpec spec;
  spec.kind = data.value("kind", std::string("mock"));
  if (spec.kind == "mock") {
    spec.mock_mode = mock_mode_from_string(data.value("mode", std::string("random_move")));
    spec.extra = data.value("extra", std::string());
  } else if (spec.kind == "http") {
    if (!data.contains("base_url")) {
      throw ConfigError("http backend spec needs a base_url");
    }
    spec.base_url = data.at("base_url").get<std::string>();
    spec.path = data.value("path", spec.path);
    spec.api_key_env = data.value("api_key_env", spec.api_key_env);
    spec.model_name = data.value("model", std::string());
    spec.timeout_seconds = data.value("timeout_seconds", spec.timeout_seconds);
  } else {
    throw ConfigError("backend kind must be 'mock' or 'http', got '" + spec.kind + "'");
  }
  spec.label = data.value("label", std::string());
  return spec;
}

json backend_spec_to_json(const BackendSpec& spec) {
  if (spec.kind == "mock") {
    return json{{"kind", "mock"},
                {"mode", to_string(spec.mock_mode)},
                {"extra", spec.extra},
                {"label", spec.label}};
  }
  return json{{"kind", "http"},          {"base_url", spec.base_url},
              {"path", spec.path},       {"api_key_env", spec.api_key_env},
              {"model", spec.model_name}, {"timeout_seconds", spec.timeout_seconds},
              {"label", spec.label}};
}

BackendSpec backend_spec_from_string(const std::string& text) {
  BackendSpec spec;
  if (text.rfind("http://", 0) == 0 || text.rfind("https://", 0) == 0) {
    spec.kind = "http";
    spec.base_url = text;
    return spec;
  }
  if (text.rfind("mock:", 0) != 0) {
    throw ConfigError(
        "backend must be 'mock:<mode>[:<extra>]' or an http(s):// base URL, got '" + text +
        "'");
  }
  std::string rest = text.substr(5);
  if (const std::size_t colon = rest.find(':'); colon != std::string::npos) {
    spec.extra = rest.substr(colon + 1);
    rest = rest.substr(0, colon);
  }
  if (rest == "oracle") rest = "oracle_once_then_random";
  if (rest == "replay") rest = "replay_file";
  spec.kind = "mock";
  spec.mock_mode = mock_mode_from_string(rest);
  return spec;
}

BackendFactory default_backend_factory() {
  return [](const BackendSpec& spec, const DsmCase& dsm_case,
            std::uint64_t backend_seed) -> std::unique_ptr<ChatBackend> {
    if (spec.kind == "mock") {
      return mock_heuristic_backend(dsm_case, spec.mock_mode, backend_seed, spec.extra);
    }
    if (spec.kind == "http") {
      HttpBackendConfig config;
      config.base_url = spec.base_url;
      config.path = spec.path;
      config.model_name = spec.model_name;
      config.timeout_seconds = spec.timeout_seconds;
      if (!spec.api_key_env.empty()) {
        if (const char* key = std::getenv(spec.api_key_env.c_str())) config.api_key = key;
      }
      return make_http_backend(config);
    }
    throw ConfigError("backend kind must be 'mock' or 'http', got '" + spec.kind + "'");
  };
}

// ---------------------------------------------------------------------------
// SA reference store

std::string sa_config_fingerprint(const SaConfig& config) {
  char buffer[256];
  std::snprintf(buffer, sizeof(buffer),
                "alpha=%.17g|steps=%d|moves=%d|restarts=%d|t0=%.17g|rho=%.17g|seed=%llu",
                config.alpha, config.temperature_steps, config.moves_per_step,
                config.restarts,
                config.initial_temperature ? *config.initial_temperature : -1.0,
                config.cost_params.rho,
                static_cast<unsigned long long>(config.rng_seed));
  char out[32];
  std::snprintf(out, sizeof(out), "%016llx",
                static_cast<unsigned long long>(fnv1a64(buffer)));
  return out;
}

SaReferenceStore SaReferenceStore::load(const fs::path& path) {
  std::ifstream input(path);
  if (!input) {
    throw IoError("cannot open SA reference file: " + path.string());
  }
  json data;
  try {
    input >> data;
  } catch (const json::exception& error) {
    throw IoError("SA reference file " + path.string() + " is not valid JSON: " +
                  error.what());
  }
  SaReferenceStore store;
  for (const json& entry : data.value("entries", json::array())) {
    Entry parsed;
    parsed.case_hash = entry.at("case_hash").get<std::string>();
    parsed.case_name = entry.value("case_name", std::string());
    parsed.config_fingerprint = entry.value("config_fingerprint", std::string());
    parsed.best_cost = entry.at("best_cost").get<double>();
    parsed.restarts = entry.value("restarts", 0);
    store.entries_.push_back(std::move(parsed));
  }
  return store;
}

void SaReferenceStore::save(const fs::path& path) const {
  std::vector<Entry> sorted = entries_;
  std::sort(sorted.begin(), sorted.end(), [](const Entry& a, const Entry& b) {
    if (a.case_hash != b.case_hash) return a.case_hash < b.case_hash;
    return a.config_fingerprint < b.config_fingerprint;
  });
  json entries = json::array();
  for (const Entry& entry : sorted) {
    entries.push_back(json{{"case_hash", entry.case_hash},
                           {"case_name", entry.case_name},
                           {"config_fingerprint", entry.config_fingerprint},
                           {"best_cost", entry.best_cost},
                           {"restarts", entry.restarts}});
  }
  write_text(path, json{{"entries", entries}}.dump(2) + "\n");
}

std::optional<double> SaReferenceStore::lookup(const DsmCase& dsm_case,
                                               const SaConfig& config) const {
  const std::string hash = case_content_hash(dsm_case);
  const std::string fingerprint = sa_config_fingerprint(config);
  for (const Entry& entry : entries_) {
    if (entry.case_hash == hash && entry.config_fingerprint == fingerprint) {
      return entry.best_cost;
    }
  }
  return std::nullopt;
}

std::optional<double> SaReferenceStore::lookup_any(const DsmCase& dsm_case) const {
  const std::string hash = case_content_hash(dsm_case);
  std::optional<double> best;
  for (const Entry& entry : entries_) {
    if (entry.case_hash != hash) continue;
    if (!best || entry.best_cost < *best) best = entry.best_cost;
  }
  return best;
}

void SaReferenceStore::put(const DsmCase& dsm_case, const SaConfig& config,
                           double best_cost) {
  const std::string hash = case_content_hash(dsm_case);
  const std::string fingerprint = sa_config_fingerprint(config);
  for (Entry& entry : entries_) {
    if (entry.case_hash == hash && entry.config_fingerprint == fingerprint) {
      entry.best_cost = best_cost;
      entry.restarts = config.restarts;
      return;
    }
  }
  entries_.push_back(Entry{hash, dsm_case.name(), fingerprint, best_cost, config.restarts});
}

// ---------------------------------------------------------------------------
// Plans

ExperimentPlan plan_from_json(const json& data) {
  ExperimentPlan plan;
  plan.sa_reference_source.sa_config.restarts = 200;  // desk-scale default

  if (!data.contains("cases") || !data.at("cases").is_array() || data.at("cases").empty()) {
    throw ConfigError("experiment plan needs a non-empty 'cases' array");
  }
  for (const json& entry : data.at("cases")) {
    plan.case_paths.push_back(entry.get<std::string>());
  }
  if (!data.contains("backends") || !data.at("backends").is_array() ||
      data.at("backends").empty()) {
    throw ConfigError("experiment plan needs a non-empty 'backends' array");
  }
  for (const json& entry : data.at("backends")) {
    // objects spell every field out; strings use the CLI shorthand
    plan.backends.push_back(entry.is_string()
                                ? backend_spec_from_string(entry.get<std::string>())
                                : backend_spec_from_json(entry));
  }
  if (data.contains("knowledge_conditions")) {
    plan.knowledge_conditions.clear();
    for (const json& entry : data.at("knowledge_conditions")) {
      const std::string condition = entry.get<std::string>();
      bool knowledge = false;
      if (condition == "k0") knowledge = false;
      else if (condition == "k1") knowledge = true;
      else throw ConfigError("knowledge condition must be 'k0' or 'k1', got '" + condition + "'");
      if (std::find(plan.knowledge_conditions.begin(), plan.knowledge_conditions.end(),
                    knowledge) == plan.knowledge_conditions.end()) {
        plan.knowledge_conditions.push_back(knowledge);
      }
    }
    if (plan.knowledge_conditions.empty()) {
      throw ConfigError("experiment plan needs at least one knowledge condition");
    }
  }
  plan.runs_per_condition = data.value("runs_per_condition", 10);
  if (plan.runs_per_condition < 1) {
    throw ConfigError("runs_per_condition must be >= 1");
  }
  if (data.contains("optimizer")) {
    plan.optimizer_defaults = optimizer_config_from_json(data.at("optimizer"));
  }
  if (data.contains("sa_reference")) {
    const json& source = data.at("sa_reference");
    const std::string kind = source.value("source", std::string("compute_now"));
    if (kind == "compute_now") {
      plan.sa_reference_source.kind = SaReferenceSourceKind::ComputeNow;
      plan.sa_reference_source.sa_config =
          sa_config_from_json(source, plan.sa_reference_source.sa_config);
      plan.sa_reference_source.cache_path = source.value("cache_path", std::string());
    } else if (kind == "load_file") {
      plan.sa_reference_source.kind = SaReferenceSourceKind::LoadFile;
      if (!source.contains("path")) {
        throw ConfigError("sa_reference source 'load_file' needs a path");
      }
      plan.sa_reference_source.path = source.at("path").get<std::string>();
    } else {
      throw ConfigError("sa_reference source must be 'compute_now' or 'load_file'");
    }
  }
  plan.trace_dir = data.value("trace_dir", std::string("traces"));
  plan.workers = data.value("workers", 1);
  if (plan.workers < 1) {
    throw ConfigError("workers must be >= 1");
  }
  return plan;
}

ExperimentPlan load_plan_file(const fs::path& path) {
  std::ifstream input(path);
  if (!input) {
    throw IoError("cannot open plan file: " + path.string());
  }
  json data;
  try {
    input >> data;
  } catch (const json::exception& error) {
    throw ConfigError("plan file " + path.string() + " is not valid JSON: " + error.what());
  }
  return plan_from_json(data);
}

// ---------------------------------------------------------------------------
// Experiment execution

std::uint64_t run_master_seed(std::uint64_t plan_seed, const std::string& case_name,
                              const std::string& backend_label, bool knowledge,
                              int run_index) {
  std::uint64_t seed = derive_seed(plan_seed, "cell");
  seed = derive_seed(seed, case_name);
  seed = derive_seed(seed, backend_label);
  seed = derive_seed(seed, knowledge ? "k1" : "k0");
  return derive_seed(seed, "run", static_cast<std::uint64_t>(run_index));
}

nlohmann::json trace_file_to_json(const RunTrace& trace, const std::string& case_path,
                                  const std::string& backend_label, bool knowledge,
                                  int run_index, double reference_cost, double ce_best) {
  return json{{"meta", json{{"case_name", trace.case_name},
                            {"case_path", case_path},
                            {"backend", backend_label},
                            {"knowledge", knowledge},
                            {"run_index", run_index},
                            {"reference_cost", reference_cost},
                            {"ce_best", ce_best},
                            {"final_cost", trace.best.total_cost}}},
              {"trace", trace_to_json(trace)}};
}

std::vector<ConditionSummary> run_experiment(const ExperimentPlan& plan,
                                             const BackendFactory& factory) {
  if (plan.case_paths.empty()) throw ConfigError("experiment plan has no cases");
  if (plan.backends.empty()) throw ConfigError("experiment plan has no backends");
  if (plan.knowledge_conditions.empty()) {
    throw ConfigError("experiment plan has no knowledge conditions");
  }
  if (plan.runs_per_condition < 1) throw ConfigError("runs_per_condition must be >= 1");

  // Any load failure aborts before the first run.
  std::vector<DsmCase> cases;
  cases.reserve(plan.case_paths.size());
  for (const std::string& path : plan.case_paths) {
    cases.push_back(load_case_file(path));
  }
  const std::vector<double> references = resolve_references(plan, cases);

  struct Cell {
    std::size_t case_index = 0;
    std::size_t backend_index = 0;
    bool knowledge = false;
  };
  std::vector<Cell> cells;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    for (std::size_t b = 0; b < plan.backends.size(); ++b) {
      for (const bool knowledge : plan.knowledge_conditions) {
        cells.push_back(Cell{c, b, knowledge});
      }
    }
  }

  struct RunSlot {
    std::size_t cell = 0;
    int run_index = 0;
    bool completed = false;
    RunTrace trace;
    double ce = 0.0;
    double gap = 0.0;
    std::string trace_path;
    std::string error;
  };
  std::vector<RunSlot> slots;
  slots.reserve(cells.size() * static_cast<std::size_t>(plan.runs_per_condition));
  for (std::size_t cell = 0; cell < cells.size(); ++cell) {
    for (int run = 0; run < plan.runs_per_condition; ++run) {
      RunSlot slot;
      slot.cell = cell;
      slot.run_index = run;
      slots.push_back(std::move(slot));
    }
  }

  fs::create_directories(plan.trace_dir);

  parallel_for_index(static_cast<int>(slots.size()), plan.workers, [&](int index) {
    RunSlot& slot = slots[static_cast<std::size_t>(index)];
    const Cell& cell = cells[slot.cell];
    const DsmCase& dsm_case = cases[cell.case_index];
    const BackendSpec& backend_spec = plan.backends[cell.backend_index];
    const std::string backend_label = backend_spec.display_name();

    OptimizerConfig config = plan.optimizer_defaults;
    config.prompt_spec.knowledge = cell.knowledge;
    config.master_seed = run_master_seed(plan.optimizer_defaults.master_seed,
                                         dsm_case.name(), backend_label, cell.knowledge,
                                         slot.run_index);
    try {
      const std::unique_ptr<ChatBackend> backend =
          factory(backend_spec, dsm_case, derive_seed(config.master_seed, "backend"));
      slot.trace = run_optimization(dsm_case, config, *backend);
      slot.ce = clustering_efficiency(dsm_case, slot.trace.best.partition);
      slot.gap = gap_percent(slot.trace.best.total_cost, references[cell.case_index]);
      slot.completed = true;
    } catch (const std::exception& error) {
      slot.error = error.what();
      return;  // isolation: this run is simply missing from the aggregates
    }

    char run_tag[16];
    std::snprintf(run_tag, sizeof(run_tag), "%02d", slot.run_index);
    const fs::path path =
        fs::path(plan.trace_dir) /
        ("trace_" + cell_label_for(dsm_case.name(), backend_label, cell.knowledge) +
         "_run" + run_tag + ".json");
    write_text(path, trace_file_to_json(slot.trace, plan.case_paths[cell.case_index],
                                        backend_label, cell.knowledge, slot.run_index,
                                        references[cell.case_index], slot.ce)
                         .dump(2) +
                     "\n");
    slot.trace_path = path.string();
  });

  std::vector<ConditionSummary> summaries;
  summaries.reserve(cells.size());
  std::size_t slot_index = 0;
  for (const Cell& cell : cells) {
    ConditionSummary summary;
    summary.case_name = cases[cell.case_index].name();
    summary.backend = plan.backends[cell.backend_index].display_name();
    summary.knowledge = cell.knowledge;
    summary.reference_cost = references[cell.case_index];
    summary.runs_requested = plan.runs_per_condition;

    std::vector<double> costs, ces, gaps;
    for (int run = 0; run < plan.runs_per_condition; ++run, ++slot_index) {
      const RunSlot& slot = slots[slot_index];
      if (!slot.completed) continue;
      costs.push_back(slot.trace.best.total_cost);
      ces.push_back(slot.ce);
      gaps.push_back(slot.gap);
      summary.trace_paths.push_back(slot.trace_path);
      summary.traces.push_back(slot.trace);
    }
    summary.runs_completed = static_cast<int>(costs.size());
    if (summary.runs_completed > 0) {
      summary.total_cost = aggregate(costs);
      summary.ce = aggregate(ces);
      summary.final_gap = aggregate(gaps);
    }
    summaries.push_back(std::move(summary));
  }
  return summaries;
}

// ---------------------------------------------------------------------------
// Ablations

std::string to_string(AblationDimension dimension) {
  switch (dimension) {
    case AblationDimension::PoolDesign:
      return "pool_design";
    case AblationDimension::ObjectiveFormula:
      return "objective_formula";
    case AblationDimension::InputFormat:
      return "input_format";
  }
  return "unknown";
}

AblationDimension ablation_dimension_from_string(const std::string& text) {
  if (text == "pool_design") return AblationDimension::PoolDesign;
  if (text == "objective_formula") return AblationDimension::ObjectiveFormula;
  if (text == "input_format") return AblationDimension::InputFormat;
  throw ConfigError("unknown ablation dimension: " + text);
}

std::vector<AblationArm> ablation_arms(AblationDimension dimension, const PromptSpec& base) {
  std::vector<AblationArm> arms;
  switch (dimension) {
    case AblationDimension::PoolDesign: {
      PromptSpec balanced = base;
      balanced.pool_best_p = 5;
      balanced.pool_random_q = 5;
      PromptSpec exploit = base;
      exploit.pool_best_p = 5;
      exploit.pool_random_q = 0;
      PromptSpec explore = base;
      explore.pool_best_p = 0;
      explore.pool_random_q = 5;
      arms = {{"pool_p5_q5", balanced}, {"pool_p5_q0", exploit}, {"pool_p0_q5", explore}};
      break;
    }
    case AblationDimension::ObjectiveFormula: {
      PromptSpec on = base;
      on.include_formula = true;
      PromptSpec off = base;
      off.include_formula = false;
      arms = {{"formula_on", on}, {"formula_off", off}};
      break;
    }
    case AblationDimension::InputFormat: {
      for (const InputFormat format :
           {InputFormat::DirectedEdgeList, InputFormat::AdjacencyMatrix,
            InputFormat::UndirectedEdgeList, InputFormat::NaturalLanguage}) {
        PromptSpec variant = base;
        variant.input_format = format;
        arms.push_back({to_string(format), variant});
      }
      break;
    }
  }
  return arms;
}

AblationPlan ablation_plan_from_json(const json& data) {
  AblationPlan plan;
  if (!data.contains("dimension")) {
    throw ConfigError("ablation plan needs a 'dimension'");
  }
  plan.dimension = ablation_dimension_from_string(data.at("dimension").get<std::string>());
  if (!data.contains("base")) {
    throw ConfigError("ablation plan needs a 'base' experiment plan");
  }
  plan.base = plan_from_json(data.at("base"));
  return plan;
}

AblationPlan load_ablation_plan_file(const fs::path& path) {
  std::ifstream input(path);
  if (!input) {
    throw IoError("cannot open ablation plan file: " + path.string());
  }
  json data;
  try {
    input >> data;
  } catch (const json::exception& error) {
    throw ConfigError("ablation plan file " + path.string() + " is not valid JSON: " +
                      error.what());
  }
  return ablation_plan_from_json(data);
}

std::vector<std::pair<AblationArm, ConditionSummary>> run_ablation(
    const AblationPlan& plan, const BackendFactory& factory) {
  if (plan.base.case_paths.size() != 1 || plan.base.backends.size() != 1 ||
      plan.base.knowledge_conditions.size() != 1) {
    throw ConfigError("ablation base plan must have exactly one case, one backend and one "
                      "knowledge condition");
  }
  std::vector<std::pair<AblationArm, ConditionSummary>> results;
  for (const AblationArm& arm :
       ablation_arms(plan.dimension, plan.base.optimizer_defaults.prompt_spec)) {
    ExperimentPlan sub = plan.base;
    sub.optimizer_defaults.prompt_spec = arm.spec;
    sub.trace_dir = (fs::path(plan.base.trace_dir) / arm.name).string();
    std::vector<ConditionSummary> summaries = run_experiment(sub, factory);
    results.emplace_back(arm, std::move(summaries.front()));
  }
  return results;
}

// ---------------------------------------------------------------------------
// Reporting

ConvergenceTable convergence_table(const std::vector<RunTrace>& traces,
                                   double reference_cost) {
  if (traces.empty()) {
    throw ConfigError("convergence table needs at least one trace");
  }
  const std::size_t iterations = traces.front().records.size();
  for (const RunTrace& trace : traces) {
    if (trace.records.size() != iterations) {
      throw ConfigError("convergence table needs traces with equal iteration counts");
    }
    if (trace.case_name != traces.front().case_name) {
      throw ConfigError("convergence table needs traces from a single case");
    }
  }
  ConvergenceTable table;
  table.rows.reserve(iterations + 1);
  std::vector<double> gaps(traces.size());
  for (std::size_t t = 0; t <= iterations; ++t) {
    for (std::size_t r = 0; r < traces.size(); ++r) {
      const double best = t == 0 ? traces[r].init.total_cost
                                 : traces[r].records[t - 1].best_so_far;
      gaps[r] = gap_percent(best, reference_cost);
    }
    const Aggregate agg = aggregate(gaps);
    table.rows.push_back(ConvergenceRow{static_cast<int>(t), agg.mean, agg.std});
  }
  return table;
}

std::string cell_label(const ConditionSummary& summary) {
  return cell_label_for(summary.case_name, summary.backend, summary.knowledge);
}

std::vector<fs::path> emit_report(const std::vector<ConditionSummary>& summaries,
                                  const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::vector<fs::path> written;

  std::string csv =
      "case,backend,k,cost_mean,cost_std,ce_mean,ce_std,gap_mean,gap_std,reference,runs\n";
  for (const ConditionSummary& summary : summaries) {
    csv += csv_field(summary.case_name) + "," + csv_field(summary.backend) + "," +
           (summary.knowledge ? "1" : "0") + "," + fmt6(summary.total_cost.mean) + "," +
           fmt6(summary.total_cost.std) + "," + fmt6(summary.ce.mean) + "," +
           fmt6(summary.ce.std) + "," + fmt6(summary.final_gap.mean) + "," +
           fmt6(summary.final_gap.std) + "," + fmt6(summary.reference_cost) + "," +
           std::to_string(summary.runs_completed) + "\n";
  }
  const fs::path summary_path = out_dir / "summary.csv";
  write_text(summary_path, csv);
  written.push_back(summary_path);

  for (const ConditionSummary& summary : summaries) {
    if (summary.traces.empty()) continue;
    ConvergenceTable table = convergence_table(summary.traces, summary.reference_cost);
    table.cell_label = cell_label(summary);

    std::string table_csv = "iteration,gap_mean,gap_std\n";
    for (const ConvergenceRow& row : table.rows) {
      table_csv += std::to_string(row.iteration) + "," + fmt6(row.gap_mean) + "," +
                   fmt6(row.gap_std) + "\n";
    }
    const fs::path csv_path = out_dir / ("convergence_" + table.cell_label + ".csv");
    write_text(csv_path, table_csv);
    written.push_back(csv_path);

    const fs::path svg_path = out_dir / ("convergence_" + table.cell_label + ".svg");
    write_text(svg_path, render_convergence_svg(table));
    written.push_back(svg_path);
  }
  return written;
}

std::vector<ConditionSummary> report_from_traces(const fs::path& traces_dir) {
  if (!fs::is_directory(traces_dir)) {
    throw IoError("trace directory does not exist: " + traces_dir.string());
  }
  std::vector<fs::path> files;
  for (const fs::directory_entry& entry : fs::directory_iterator(traces_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());

  struct CellKey {
    std::string case_name;
    std::string backend;
    bool knowledge;
    bool operator<(const CellKey& other) const {
      return std::tie(case_name, backend, knowledge) <
             std::tie(other.case_name, other.backend, other.knowledge);
    }
  };
  struct CellRuns {
    double reference_cost = 0.0;
    std::vector<std::tuple<int, RunTrace, double, std::string>> runs;  // run_index, trace, ce, path
  };
  std::map<CellKey, CellRuns> grouped;
  std::vector<CellKey> order;

  for (const fs::path& file : files) {
    std::ifstream input(file);
    if (!input) continue;
    json data;
    try {
      input >> data;
    } catch (const json::exception&) {
      continue;  // not a trace file
    }
    if (!data.is_object() || !data.contains("meta") || !data.contains("trace")) continue;
    const json& meta = data.at("meta");
    CellKey key{meta.at("case_name").get<std::string>(),
                meta.at("backend").get<std::string>(), meta.at("knowledge").get<bool>()};
    if (grouped.find(key) == grouped.end()) order.push_back(key);
    CellRuns& cell = grouped[key];
    cell.reference_cost = meta.at("reference_cost").get<double>();
    cell.runs.emplace_back(meta.at("run_index").get<int>(),
                           trace_from_json(data.at("trace")),
                           meta.at("ce_best").get<double>(), file.string());
  }
  if (grouped.empty()) {
    throw IoError("no trace files found under " + traces_dir.string());
  }

  std::vector<ConditionSummary> summaries;
  summaries.reserve(order.size());
  for (const CellKey& key : order) {
    CellRuns& cell = grouped[key];
    std::sort(cell.runs.begin(), cell.runs.end(),
              [](const auto& a, const auto& b) { return std::get<0>(a) < std::get<0>(b); });
    ConditionSummary summary;
    summary.case_name = key.case_name;
    summary.backend = key.backend;
    summary.knowledge = key.knowledge;
    summary.reference_cost = cell.reference_cost;
    std::vector<double> costs, ces, gaps;
    for (auto& [run_index, trace, ce, path] : cell.runs) {
      costs.push_back(trace.best.total_cost);
      ces.push_back(ce);
      gaps.push_back(gap_percent(trace.best.total_cost, cell.reference_cost));
      summary.trace_paths.push_back(path);
      summary.traces.push_back(std::move(trace));
    }
    summary.runs_requested = static_cast<int>(costs.size());
    summary.runs_completed = static_cast<int>(costs.size());
    summary.total_cost = aggregate(costs);
    summary.ce = aggregate(ces);
    summary.final_gap = aggregate(gaps);
    summaries.push_back(std::move(summary));
  }
  return summaries;
}

}  // namespace dsmopt
