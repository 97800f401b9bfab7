#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dsmopt/errors.hpp"

namespace dsmopt {

using NodeId = std::string;

enum class DsmType { Activity, Parameter, Component };

std::string to_string(DsmType type);
DsmType dsm_type_from_string(const std::string& text);

struct DsmNode {
  NodeId id;
  std::string name;         // engineering name, may be empty
  std::string description;  // one-sentence functional description, may be empty
};

// Directed dependency: `target` receives input from `source` with strength `weight`.
struct DsmEdge {
  NodeId target;
  NodeId source;
  double weight = 0.0;
};

// A validated DSM instance. Construction enforces all structural invariants
// (unique ids, declared endpoints, no self-loops, positive weights, n >= 2,
// at least one edge) and the object is immutable afterwards, so instances are
// safe to share across threads.
class DsmCase {
 public:
  struct IndexedEdge {
    std::size_t target = 0;  // node position of the receiving element
    std::size_t source = 0;  // node position of the providing element
    double weight = 0.0;
  };

  DsmCase(std::string name, DsmType dsm_type, std::string domain,
          std::vector<DsmNode> nodes, std::vector<DsmEdge> edges);

  const std::string& name() const { return name_; }
  DsmType dsm_type() const { return dsm_type_; }
  const std::string& domain() const { return domain_; }
  const std::vector<DsmNode>& nodes() const { return nodes_; }
  const std::vector<DsmEdge>& edges() const { return edges_; }
  const std::vector<IndexedEdge>& indexed_edges() const { return indexed_edges_; }

  int size() const { return static_cast<int>(nodes_.size()); }
  std::size_t edge_count() const { return edges_.size(); }
  double density() const;
  double total_weight() const { return total_weight_; }

  std::optional<std::size_t> find_node(const NodeId& id) const;
  std::size_t node_index(const NodeId& id) const;  // throws CaseError if unknown

  // True when every node carries a non-empty name and description, i.e. the
  // case supports knowledge-on prompt rendering.
  bool has_full_knowledge() const { return has_full_knowledge_; }

 private:
  std::string name_;
  DsmType dsm_type_;
  std::string domain_;
  std::vector<DsmNode> nodes_;
  std::vector<DsmEdge> edges_;
  std::vector<IndexedEdge> indexed_edges_;
  std::unordered_map<NodeId, std::size_t> index_;
  double total_weight_ = 0.0;
  bool has_full_knowledge_ = false;
};

// Canonical set partition of a case's nodes. modules[i] is the 1-based module
// index of the node at position i; indices are consecutive 1..module_count in
// order of first appearance over the case node order.
struct Partition {
  std::vector<int> modules;
  int module_count = 0;

  bool operator==(const Partition&) const = default;
};

// A partition plus its evaluated TotalCost and the iteration that produced it;
// the unit stored in solution pools and run histories.
struct SolutionRecord {
  Partition partition;
  double total_cost = 0.0;
  int iteration_found = 0;

  bool operator==(const SolutionRecord&) const = default;
};

// --- case document I/O ------------------------------------------------------

DsmCase parse_case_text(const std::string& text);
DsmCase load_case_file(const std::filesystem::path& path);
std::string case_to_json_text(const DsmCase& dsm_case);

// --- partition construction -------------------------------------------------

Partition singleton_partition(const DsmCase& dsm_case);

// Renumbers arbitrary group labels to the canonical 1..K form (first
// appearance in sequence order). Accepts K=1; feasibility is checked downstream.
Partition canonicalize_labels(std::span<const int> raw_labels);
Partition canonicalize(const std::unordered_map<NodeId, std::string>& raw,
                       const DsmCase& dsm_case);

// Uniform assignment into n tentative groups, canonicalized; a K=1 outcome is
// repaired by moving one uniformly chosen node into a fresh module.
Partition random_partition(const DsmCase& dsm_case, std::uint64_t rng_seed);

DsmCase generate_random_case(int n, double density, int weight_lo,
                             int weight_hi, std::uint64_t rng_seed);

std::unordered_map<NodeId, int> partition_to_map(const DsmCase& dsm_case,
                                                 const Partition& partition);
Partition partition_from_map(const DsmCase& dsm_case,
                             const std::unordered_map<NodeId, int>& assignment);

// Stable content digest of a case (name excluded), used to key SA reference caches.
std::string case_content_hash(const DsmCase& dsm_case);

}  // namespace dsmopt
