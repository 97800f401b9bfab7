#include "dsmopt/prompting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "dsmopt/errors.hpp"
#include "dsmopt/rng.hpp"

namespace dsmopt {

namespace {

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const std::string& line : lines) {
    out += line;
    out += '\n';
  }
  return out;
}

// Display labels sorted ascending, each paired with its node index.
std::vector<std::pair<std::string, int>> ordered_labels(const DsmCase& dsm_case,
                                                        const LabelMap& label_map) {
  std::vector<std::pair<std::string, int>> ordered;
  ordered.reserve(dsm_case.size());
  for (int i = 0; i < dsm_case.size(); ++i) {
    ordered.emplace_back(label_map.to_label.at(dsm_case.nodes()[i].id), i);
  }
  std::sort(ordered.begin(), ordered.end());
  return ordered;
}

std::vector<std::string> directed_edge_lines(const DsmCase& dsm_case,
                                             const LabelMap& label_map) {
  std::vector<std::string> lines;
  lines.reserve(dsm_case.indexed_edges().size());
  for (const DsmCase::IndexedEdge& edge : dsm_case.indexed_edges()) {
    const std::string& target = label_map.to_label.at(dsm_case.nodes()[edge.target].id);
    const std::string& source = label_map.to_label.at(dsm_case.nodes()[edge.source].id);
    lines.push_back(target + " --> " + source + " (weight: " + format_weight(edge.weight) +
                    ")");
  }
  return lines;
}

std::vector<std::string> undirected_edge_lines(const DsmCase& dsm_case,
                                               const LabelMap& label_map) {
  std::map<std::pair<int, int>, double> pair_weight;
  for (const DsmCase::IndexedEdge& edge : dsm_case.indexed_edges()) {
    const int a = static_cast<int>(std::min(edge.target, edge.source));
    const int b = static_cast<int>(std::max(edge.target, edge.source));
    pair_weight[{a, b}] += edge.weight;
  }
  std::vector<std::string> lines;
  lines.reserve(pair_weight.size());
  for (const auto& [pair, weight] : pair_weight) {
    std::string first = label_map.to_label.at(dsm_case.nodes()[pair.first].id);
    std::string second = label_map.to_label.at(dsm_case.nodes()[pair.second].id);
    if (second < first) std::swap(first, second);
    lines.push_back(first + " -- " + second + " (weight: " + format_weight(weight) + ")");
  }
  std::sort(lines.begin(), lines.end());
  return lines;
}

std::vector<std::string> natural_language_lines(const DsmCase& dsm_case,
                                                const LabelMap& label_map,
                                                bool knowledge) {
  auto mention = [&](std::size_t node_index) {
    const DsmNode& node = dsm_case.nodes()[node_index];
    const std::string& label = label_map.to_label.at(node.id);
    return knowledge ? label + " (" + node.name + ")" : label;
  };
  std::vector<std::string> lines;
  lines.reserve(dsm_case.indexed_edges().size());
  for (const DsmCase::IndexedEdge& edge : dsm_case.indexed_edges()) {
    lines.push_back(mention(edge.target) + " receives input from " + mention(edge.source) +
                    " with strength " + format_weight(edge.weight) + ".");
  }
  return lines;
}

std::string format_cost(double cost) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.1f", cost);
  return buffer;
}

std::string pad_left(const std::string& text, std::size_t width) {
  if (text.size() >= width) return text;
  return std::string(width - text.size(), ' ') + text;
}

std::string format_intro(InputFormat format) {
  switch (format) {
    case InputFormat::DirectedEdgeList:
      return "Dependencies are listed as a directed edge list, one edge per line. A line "
             "\"A --> B (weight: w)\" means that element A receives input from element B "
             "with strength w.";
    case InputFormat::AdjacencyMatrix:
      return "Dependencies are given as a weighted adjacency matrix. Rows are receiving "
             "elements and columns are providing elements: the entry in row A, column B is "
             "the strength with which A receives input from B (0 means no dependency).";
    case InputFormat::UndirectedEdgeList:
      return "Dependencies are listed as an undirected edge list, one pair per line. A "
             "line \"A -- B (weight: w)\" means that elements A and B interact with "
             "combined strength w (directionality removed).";
    case InputFormat::NaturalLanguage:
      return "Dependencies are described in natural language, one sentence per directed "
             "dependency.";
  }
  throw ConfigError("unknown input format");
}

}  // namespace

std::string to_string(InputFormat format) {
  switch (format) {
    case InputFormat::DirectedEdgeList:
      return "directed_edge_list";
    case InputFormat::AdjacencyMatrix:
      return "adjacency_matrix";
    case InputFormat::UndirectedEdgeList:
      return "undirected_edge_list";
    case InputFormat::NaturalLanguage:
      return "natural_language";
  }
  throw ConfigError("unknown input format");
}

InputFormat input_format_from_string(const std::string& text) {
  if (text == "directed_edge_list") return InputFormat::DirectedEdgeList;
  if (text == "adjacency_matrix") return InputFormat::AdjacencyMatrix;
  if (text == "undirected_edge_list") return InputFormat::UndirectedEdgeList;
  if (text == "natural_language") return InputFormat::NaturalLanguage;
  throw ConfigError("unknown input format: " + text);
}

void validate_prompt_spec(const PromptSpec& spec) {
  if (spec.pool_best_p < 0 || spec.pool_random_q < 0) {
    throw ConfigError("solution pool sizes p and q must be non-negative");
  }
  if (spec.pool_best_p + spec.pool_random_q < 1) {
    throw ConfigError("solution pool needs p + q >= 1");
  }
}

std::string label_text(int index, int n) {
  const int width = std::max<int>(2, static_cast<int>(std::to_string(n).size()));
  std::string digits = std::to_string(index);
  if (static_cast<int>(digits.size()) < width) {
    digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  }
  return "N" + digits;
}

std::string format_weight(double weight) {
  const double rounded = std::round(weight);
  if (std::abs(weight - rounded) < 1e-9 && std::abs(weight) < 1e15) {
    return std::to_string(static_cast<long long>(rounded));
  }
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.6g", weight);
  return buffer;
}

LabelMap make_label_map(const DsmCase& dsm_case, std::uint64_t shuffle_seed,
                        int iteration) {
  const int n = dsm_case.size();
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(shuffle_seed, "labels", static_cast<std::uint64_t>(iteration)));
  rng.shuffle(order);
  LabelMap map;
  map.to_label.reserve(static_cast<std::size_t>(n));
  map.to_node.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const std::string label = label_text(i + 1, n);
    const NodeId& id = dsm_case.nodes()[static_cast<std::size_t>(order[i])].id;
    map.to_label.emplace(id, label);
    map.to_node.emplace(label, id);
  }
  return map;
}

const std::string& system_message_text() {
  static const std::string text =
      "You are a DSM modularization expert. You analyze design structure matrices and "
      "partition their elements into modules so that the TotalCost objective is "
      "minimized: strong dependencies should fall inside modules, weak ones between "
      "them. You always answer with a single JSON object and no other text.";
  return text;
}

std::string total_cost_formula_text(int n, double rho) {
  return "TotalCost is computed as: TotalCost = sum over modules M of [ (total weight "
         "of dependencies inside M) * |M|^rho / n^rho ] + n * (total weight of "
         "dependencies between different modules), with n = " +
         std::to_string(n) + " elements and rho = " + format_weight(rho) +
         ". Lower TotalCost is better.";
}

std::vector<SolutionRecord> sample_solution_base(
    const std::vector<SolutionRecord>& pool_best,
    const std::vector<SolutionRecord>& history, int p, int q, std::uint64_t rng_seed) {
  if (p < 0 || q < 0) {
    throw ConfigError("solution pool sizes p and q must be non-negative");
  }
  std::vector<SolutionRecord> chosen;
  const std::size_t best_take = std::min<std::size_t>(static_cast<std::size_t>(p),
                                                      pool_best.size());
  chosen.assign(pool_best.begin(), pool_best.begin() + static_cast<std::ptrdiff_t>(best_take));

  if (q > 0) {
    std::vector<const SolutionRecord*> candidates;
    candidates.reserve(history.size());
    for (const SolutionRecord& record : history) {
      const bool selected = std::any_of(chosen.begin(), chosen.end(),
                                        [&](const SolutionRecord& c) { return c == record; });
      if (!selected) candidates.push_back(&record);
    }
    Rng rng(rng_seed);
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(q),
                                                   candidates.size());
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t j = i + rng.uniform_index(candidates.size() - i);
      std::swap(candidates[i], candidates[j]);
      chosen.push_back(*candidates[i]);
    }
  }

  std::stable_sort(chosen.begin(), chosen.end(),
                   [](const SolutionRecord& a, const SolutionRecord& b) {
                     if (a.total_cost != b.total_cost) return a.total_cost < b.total_cost;
                     return a.iteration_found < b.iteration_found;
                   });
  return chosen;
}

std::string render_directed_edge_list(const DsmCase& dsm_case, const LabelMap& label_map) {
  return join_lines(directed_edge_lines(dsm_case, label_map));
}

std::string render_adjacency_matrix(const DsmCase& dsm_case, const LabelMap& label_map) {
  const int n = dsm_case.size();
  const auto ordered = ordered_labels(dsm_case, label_map);
  std::vector<int> display_row(static_cast<std::size_t>(n));  // node index -> display row
  for (int r = 0; r < n; ++r) display_row[static_cast<std::size_t>(ordered[r].second)] = r;

  std::vector<std::vector<std::string>> cells(
      static_cast<std::size_t>(n), std::vector<std::string>(static_cast<std::size_t>(n), "0"));
  for (const DsmCase::IndexedEdge& edge : dsm_case.indexed_edges()) {
    cells[static_cast<std::size_t>(display_row[edge.target])]
         [static_cast<std::size_t>(display_row[edge.source])] = format_weight(edge.weight);
  }

  std::size_t width = 0;
  for (const auto& [label, index] : ordered) width = std::max(width, label.size());
  for (const auto& row : cells) {
    for (const std::string& cell : row) width = std::max(width, cell.size());
  }

  std::vector<std::string> lines;
  lines.reserve(static_cast<std::size_t>(n) + 1);
  std::string header(width, ' ');
  for (const auto& [label, index] : ordered) header += "  " + pad_left(label, width);
  lines.push_back(header);
  for (int r = 0; r < n; ++r) {
    std::string line = pad_left(ordered[static_cast<std::size_t>(r)].first, width);
    for (int c = 0; c < n; ++c) {
      line += "  " + pad_left(cells[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)],
                              width);
    }
    lines.push_back(line);
  }
  return join_lines(lines);
}

std::string render_undirected_edge_list(const DsmCase& dsm_case,
                                        const LabelMap& label_map) {
  return join_lines(undirected_edge_lines(dsm_case, label_map));
}

std::string render_natural_language(const DsmCase& dsm_case, const LabelMap& label_map,
                                    bool knowledge) {
  return join_lines(natural_language_lines(dsm_case, label_map, knowledge));
}

std::string render_solution_mapping(const DsmCase& dsm_case, const Partition& partition,
                                    const LabelMap& label_map) {
  if (static_cast<int>(partition.modules.size()) != dsm_case.size()) {
    throw ConfigError("partition size does not match case size");
  }
  std::vector<std::pair<std::string, int>> entries;  // (label, module)
  entries.reserve(partition.modules.size());
  for (int i = 0; i < dsm_case.size(); ++i) {
    entries.emplace_back(label_map.to_label.at(dsm_case.nodes()[static_cast<std::size_t>(i)].id),
                         partition.modules[static_cast<std::size_t>(i)]);
  }
  std::sort(entries.begin(), entries.end());
  std::string out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (i > 0) out += ", ";
    out += entries[i].first + ": M" + std::to_string(entries[i].second);
  }
  return out;
}

RenderedPrompt render_prompt(const DsmCase& dsm_case, const PromptSpec& spec,
                             const std::vector<SolutionRecord>& pool,
                             const std::vector<SolutionRecord>& history, int iteration) {
  validate_prompt_spec(spec);
  if (spec.knowledge && !dsm_case.has_full_knowledge()) {
    throw ConfigError("knowledge condition k=1 requires a name and description for every "
                      "node of case '" + dsm_case.name() + "'");
  }
  if (pool.empty() && history.empty()) {
    throw ConfigError("cannot render a prompt without at least one evaluated solution");
  }
  for (std::size_t i = 1; i < pool.size(); ++i) {
    if (pool[i].total_cost < pool[i - 1].total_cost) {
      throw ConfigError("solution pool must be sorted ascending by total cost");
    }
  }

  const int n = dsm_case.size();
  LabelMap label_map = make_label_map(dsm_case, spec.shuffle_seed, iteration);
  const std::vector<SolutionRecord> base =
      sample_solution_base(pool, history, spec.pool_best_p, spec.pool_random_q,
                           derive_seed(spec.shuffle_seed, "pool",
                                       static_cast<std::uint64_t>(iteration)));

  // Block 1 -------------------------------------------------------------
  std::string message = "## Block 1: DSM description\n\n";
  message += "The system has " + std::to_string(n) + " elements connected by " +
             std::to_string(dsm_case.edge_count()) + " directed dependencies.\n";
  const auto ordered = ordered_labels(dsm_case, label_map);
  if (spec.knowledge) {
    message += "Elements:\n";
    for (const auto& [label, index] : ordered) {
      const DsmNode& node = dsm_case.nodes()[static_cast<std::size_t>(index)];
      message += label + " (" + node.name + "): " + node.description + "\n";
    }
  } else {
    message += "Elements: ";
    for (std::size_t i = 0; i < ordered.size(); ++i) {
      if (i > 0) message += ", ";
      message += ordered[i].first;
    }
    message += "\n";
  }
  message += "\n" + format_intro(spec.input_format) + "\n\n";

  Rng line_rng(derive_seed(spec.shuffle_seed, "edges",
                           static_cast<std::uint64_t>(iteration)));
  if (spec.input_format == InputFormat::AdjacencyMatrix) {
    message += render_adjacency_matrix(dsm_case, label_map);
  } else {
    std::vector<std::string> lines;
    switch (spec.input_format) {
      case InputFormat::DirectedEdgeList:
        lines = directed_edge_lines(dsm_case, label_map);
        break;
      case InputFormat::UndirectedEdgeList:
        lines = undirected_edge_lines(dsm_case, label_map);
        break;
      case InputFormat::NaturalLanguage:
        lines = natural_language_lines(dsm_case, label_map, spec.knowledge);
        break;
      default:
        break;
    }
    line_rng.shuffle(lines);
    message += join_lines(lines);
  }

  // Block 2 -------------------------------------------------------------
  message += "\n## Block 2: Solution base\n\n";
  message +=
      "Previously evaluated partitions, sorted in ascending order of TotalCost (best "
      "first):\n\n";
  for (std::size_t i = 0; i < base.size(); ++i) {
    message += "Solution " + std::to_string(i + 1) + ": " +
               render_solution_mapping(dsm_case, base[i].partition, label_map) +
               " (TotalCost: " + format_cost(base[i].total_cost) + ")\n";
  }
  message += "\n";
  if (spec.include_formula) {
    message += total_cost_formula_text(n, spec.rho) + "\n\n";
  }

  // Block 3 -------------------------------------------------------------
  message += "## Block 3: Generation instruction\n\n";
  message += "Propose a new partition of all " + std::to_string(n) +
             " elements into modules with a TotalCost lower than the best solution "
             "above. Use at least 2 modules, assign every element to exactly one "
             "module, and do not copy any of the provided solutions verbatim.\n\n";
  message +=
      "Respond with a single JSON object mapping every element label to a module "
      "label, for example: {\"N01\": \"M2\", \"N02\": \"M1\", \"N03\": \"M2\"}. Module "
      "labels must be strings such as \"M1\" or \"M2\". Output only the JSON object.\n";

  RenderedPrompt rendered;
  rendered.system_message = system_message_text();
  rendered.user_message = std::move(message);
  rendered.label_map = std::move(label_map);
  std::uint64_t hash = fnv1a64(rendered.system_message);
  hash = fnv1a64(rendered.user_message, hash);
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%016llx",
                static_cast<unsigned long long>(hash));
  rendered.prompt_hash = buffer;
  return rendered;
}

}  // namespace dsmopt
