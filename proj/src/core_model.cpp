#include "dsmopt/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include "dsmopt/rng.hpp"
#include "json.hpp"

namespace dsmopt {

std::string to_string(DsmType type) {
  switch (type) {
    case DsmType::Activity: return "activity";
    case DsmType::Parameter: return "parameter";
    case DsmType::Component: return "component";
  }
  return "component";
}

DsmType dsm_type_from_string(const std::string& text) {
  if (text == "activity") return DsmType::Activity;
  if (text == "parameter") return DsmType::Parameter;
  if (text == "component") return DsmType::Component;
  throw CaseError("unknown dsm_type '" + text +
                  "' (expected activity, parameter or component)");
}

DsmCase::DsmCase(std::string name, DsmType dsm_type, std::string domain,
                 std::vector<DsmNode> nodes, std::vector<DsmEdge> edges)
    : name_(std::move(name)),
      dsm_type_(dsm_type),
      domain_(std::move(domain)),
      nodes_(std::move(nodes)),
      edges_(std::move(edges)) {
  if (nodes_.size() < 2) {
    throw CaseError("case '" + name_ + "' has " + std::to_string(nodes_.size()) +
                    " node(s); at least 2 are required");
  }
  index_.reserve(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const DsmNode& node = nodes_[i];
    if (node.id.empty()) {
      throw CaseError("node at position " + std::to_string(i) + " has an empty id");
    }
    if (!index_.emplace(node.id, i).second) {
      throw CaseError("duplicate node id '" + node.id + "'");
    }
  }
  if (edges_.empty()) {
    throw CaseError("case '" + name_ + "' has no edges; density must be positive");
  }
  std::set<std::pair<std::size_t, std::size_t>> seen;
  indexed_edges_.reserve(edges_.size());
  for (const DsmEdge& edge : edges_) {
    auto target = find_node(edge.target);
    if (!target) {
      throw CaseError("edge references unknown target node '" + edge.target + "'");
    }
    auto source = find_node(edge.source);
    if (!source) {
      throw CaseError("edge references unknown source node '" + edge.source + "'");
    }
    if (*target == *source) {
      throw CaseError("self-loop edge on node '" + edge.target + "'");
    }
    if (!(edge.weight > 0.0)) {
      throw CaseError("edge (target " + edge.target + ", source " + edge.source +
                      ") has non-positive weight");
    }
    if (!seen.emplace(*target, *source).second) {
      throw CaseError("duplicate edge for (target " + edge.target + ", source " +
                      edge.source + ")");
    }
    indexed_edges_.push_back({*target, *source, edge.weight});
    total_weight_ += edge.weight;
  }
  has_full_knowledge_ =
      std::all_of(nodes_.begin(), nodes_.end(), [](const DsmNode& node) {
        return !node.name.empty() && !node.description.empty();
      });
}

double DsmCase::density() const {
  const double n = static_cast<double>(nodes_.size());
  return static_cast<double>(edges_.size()) / (n * (n - 1.0));
}

std::optional<std::size_t> DsmCase::find_node(const NodeId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t DsmCase::node_index(const NodeId& id) const {
  auto pos = find_node(id);
  if (!pos) throw CaseError("unknown node id '" + id + "'");
  return *pos;
}

namespace {

using nlohmann::json;

json require_field(const json& object, const char* key, const char* context) {
  auto it = object.find(key);
  if (it == object.end()) {
    throw CaseError(std::string(context) + " is missing required field '" + key + "'");
  }
  return *it;
}

std::string format_weight_for_hash(double w) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", w);
  return buffer;
}

}  // namespace

DsmCase parse_case_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw CaseError(std::string("case document is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw CaseError("case document must be a JSON object");
  try {
    std::string name = require_field(doc, "name", "case document").get<std::string>();
    DsmType type = dsm_type_from_string(
        require_field(doc, "dsm_type", "case document").get<std::string>());
    std::string domain =
        require_field(doc, "domain", "case document").get<std::string>();

    std::vector<DsmNode> nodes;
    for (const json& node : require_field(doc, "nodes", "case document")) {
      nodes.push_back({require_field(node, "id", "node entry").get<std::string>(),
                       node.value("name", std::string{}),
                       node.value("description", std::string{})});
    }
    std::vector<DsmEdge> edges;
    for (const json& edge : require_field(doc, "edges", "case document")) {
      edges.push_back(
          {require_field(edge, "target", "edge entry").get<std::string>(),
           require_field(edge, "source", "edge entry").get<std::string>(),
           require_field(edge, "weight", "edge entry").get<double>()});
    }
    return DsmCase(std::move(name), type, std::move(domain), std::move(nodes),
                   std::move(edges));
  } catch (const json::exception& e) {
    throw CaseError(std::string("malformed case document: ") + e.what());
  }
}

DsmCase load_case_file(const std::filesystem::path& path) {
  std::ifstream input(path);
  if (!input) {
    throw CaseError("cannot open case file '" + path.string() + "'");
  }
  std::ostringstream buffer;
  buffer << input.rdbuf();
  return parse_case_text(buffer.str());
}

std::string case_to_json_text(const DsmCase& dsm_case) {
  json doc;
  doc["name"] = dsm_case.name();
  doc["dsm_type"] = to_string(dsm_case.dsm_type());
  doc["domain"] = dsm_case.domain();
  doc["nodes"] = json::array();
  for (const DsmNode& node : dsm_case.nodes()) {
    doc["nodes"].push_back(
        {{"id", node.id}, {"name", node.name}, {"description", node.description}});
  }
  doc["edges"] = json::array();
  for (const DsmEdge& edge : dsm_case.edges()) {
    doc["edges"].push_back(
        {{"target", edge.target}, {"source", edge.source}, {"weight", edge.weight}});
  }
  return doc.dump(2) + "\n";
}

Partition singleton_partition(const DsmCase& dsm_case) {
  Partition partition;
  partition.modules.resize(dsm_case.nodes().size());
  for (std::size_t i = 0; i < partition.modules.size(); ++i) {
    partition.modules[i] = static_cast<int>(i) + 1;
  }
  partition.module_count = dsm_case.size();
  return partition;
}

Partition canonicalize_labels(std::span<const int> raw_labels) {
  Partition partition;
  partition.modules.resize(raw_labels.size());
  std::unordered_map<int, int> renumber;
  for (std::size_t i = 0; i < raw_labels.size(); ++i) {
    auto slot = renumber.emplace(raw_labels[i], static_cast<int>(renumber.size()) + 1);
    partition.modules[i] = slot.first->second;
  }
  partition.module_count = static_cast<int>(renumber.size());
  return partition;
}

Partition canonicalize(const std::unordered_map<NodeId, std::string>& raw,
                       const DsmCase& dsm_case) {
  for (const auto& [id, label] : raw) {
    if (!dsm_case.find_node(id)) {
      throw CaseError("assignment contains unknown node '" + id + "'");
    }
  }
  Partition partition;
  partition.modules.resize(dsm_case.nodes().size());
  std::unordered_map<std::string, int> renumber;
  for (std::size_t i = 0; i < dsm_case.nodes().size(); ++i) {
    auto it = raw.find(dsm_case.nodes()[i].id);
    if (it == raw.end()) {
      throw CaseError("assignment is missing node '" + dsm_case.nodes()[i].id + "'");
    }
    auto slot = renumber.emplace(it->second, static_cast<int>(renumber.size()) + 1);
    partition.modules[i] = slot.first->second;
  }
  partition.module_count = static_cast<int>(renumber.size());
  return partition;
}

Partition random_partition(const DsmCase& dsm_case, std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  const std::size_t n = dsm_case.nodes().size();
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(rng.uniform_index(n));
  }
  Partition partition = canonicalize_labels(labels);
  if (partition.module_count == 1) {
    const std::size_t mover = rng.uniform_index(n);
    partition.modules[mover] = 2;
    partition = canonicalize_labels(partition.modules);
  }
  return partition;
}

DsmCase generate_random_case(int n, double density, int weight_lo, int weight_hi,
                             std::uint64_t rng_seed) {
  if (n < 2) throw ConfigError("generate_random_case requires n >= 2");
  if (!(density > 0.0) || density > 1.0) {
    throw ConfigError("density must lie in (0, 1]");
  }
  if (weight_lo < 1 || weight_hi < weight_lo) {
    throw ConfigError("weight range must satisfy 1 <= lo <= hi");
  }
  const long long pair_count = static_cast<long long>(n) * (n - 1);
  const long long edge_count = std::llround(density * static_cast<double>(pair_count));
  if (edge_count < 1) {
    throw ConfigError("density " + std::to_string(density) + " yields no edges for n=" +
                      std::to_string(n));
  }

  const int width = std::max<int>(2, static_cast<int>(std::to_string(n).size()));
  auto node_id = [width](int i) {
    std::string digits = std::to_string(i + 1);
    if (static_cast<int>(digits.size()) < width) {
      digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
    }
    return "N" + digits;
  };

  std::vector<DsmNode> nodes;
  nodes.reserve(n);
  for (int i = 0; i < n; ++i) {
    nodes.push_back({node_id(i), "Part " + std::to_string(i + 1),
                     "Auto-generated element " + std::to_string(i + 1) +
                         " of a synthetic case."});
  }

  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(static_cast<std::size_t>(pair_count));
  for (int target = 0; target < n; ++target) {
    for (int source = 0; source < n; ++source) {
      if (target != source) pairs.emplace_back(target, source);
    }
  }
  Rng rng(rng_seed);
  // Partial Fisher-Yates: the first edge_count entries are a uniform sample.
  for (long long i = 0; i < edge_count; ++i) {
    const std::size_t j = i + rng.uniform_index(pairs.size() - i);
    std::swap(pairs[i], pairs[j]);
  }
  std::vector<DsmEdge> edges;
  edges.reserve(static_cast<std::size_t>(edge_count));
  for (long long i = 0; i < edge_count; ++i) {
    edges.push_back({nodes[pairs[i].first].id, nodes[pairs[i].second].id,
                     static_cast<double>(rng.uniform_int(weight_lo, weight_hi))});
  }

  std::string name = "random_n" + std::to_string(n) + "_e" +
                     std::to_string(edge_count) + "_s" + std::to_string(rng_seed);
  return DsmCase(std::move(name), DsmType::Component, "synthetic", std::move(nodes),
                 std::move(edges));
}

std::unordered_map<NodeId, int> partition_to_map(const DsmCase& dsm_case,
                                                 const Partition& partition) {
  if (partition.modules.size() != dsm_case.nodes().size()) {
    throw MetricError("partition is not total over case '" + dsm_case.name() + "'");
  }
  std::unordered_map<NodeId, int> result;
  result.reserve(partition.modules.size());
  for (std::size_t i = 0; i < partition.modules.size(); ++i) {
    result.emplace(dsm_case.nodes()[i].id, partition.modules[i]);
  }
  return result;
}

Partition partition_from_map(const DsmCase& dsm_case,
                             const std::unordered_map<NodeId, int>& assignment) {
  std::unordered_map<NodeId, std::string> labels;
  labels.reserve(assignment.size());
  for (const auto& [id, module] : assignment) {
    labels.emplace(id, std::to_string(module));
  }
  return canonicalize(labels, dsm_case);
}

std::string case_content_hash(const DsmCase& dsm_case) {
  std::string blob = to_string(dsm_case.dsm_type());
  blob += '\x1f';
  for (const DsmNode& node : dsm_case.nodes()) {
    blob += node.id;
    blob += '\x1f';
  }
  for (const DsmCase::IndexedEdge& edge : dsm_case.indexed_edges()) {
    blob += std::to_string(edge.target);
    blob += '>';
    blob += std::to_string(edge.source);
    blob += ':';
    blob += format_weight_for_hash(edge.weight);
    blob += '\x1f';
  }
  char buffer[20];
  std::snprintf(buffer, sizeof(buffer), "%016llx",
                static_cast<unsigned long long>(fnv1a64(blob)));
  return buffer;
}

}  // namespace dsmopt
