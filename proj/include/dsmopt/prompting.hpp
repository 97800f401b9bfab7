#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "dsmopt/core_model.hpp"
#include "dsmopt/metrics.hpp"

namespace dsmopt {

// How the DSM structure is presented inside the prompt.
enum class InputFormat {
  DirectedEdgeList,
  AdjacencyMatrix,
  UndirectedEdgeList,
  NaturalLanguage,
};

std::string to_string(InputFormat format);
InputFormat input_format_from_string(const std::string& text);

// Rendering conditions for one experiment cell. knowledge=false anonymizes the
// system (k=0); knowledge=true adds engineering names and descriptions (k=1).
struct PromptSpec {
  InputFormat input_format = InputFormat::DirectedEdgeList;
  bool knowledge = false;
  bool include_formula = true;
  int pool_best_p = 5;
  int pool_random_q = 5;
  std::uint64_t shuffle_seed = 0;
  double rho = 1.0;  // exponent quoted in the formula block; must match evaluation
};

// Throws ConfigError unless p >= 0, q >= 0 and p + q >= 1.
void validate_prompt_spec(const PromptSpec& spec);

// Bijection between case node ids and the display labels ("N01", "N02", ...)
// used for one iteration's prompt. Labels are reassigned every iteration so
// the model cannot learn positional identities across iterations.
struct LabelMap {
  std::unordered_map<NodeId, std::string> to_label;
  std::unordered_map<std::string, NodeId> to_node;
};

LabelMap make_label_map(const DsmCase& dsm_case, std::uint64_t shuffle_seed,
                        int iteration);

// Zero-padded display label for 1-based position `index` out of `n`,
// e.g. label_text(3, 12) == "N03".
std::string label_text(int index, int n);

// Weight rendering: integral weights print without a decimal point ("4"),
// everything else uses shortest-round-trip style ("2.5").
std::string format_weight(double weight);

struct RenderedPrompt {
  std::string system_message;
  std::string user_message;
  LabelMap label_map;
  std::string prompt_hash;  // FNV-1a of both messages, 16 hex digits
};

// The canonical system message sent with every query; fixed verbatim.
const std::string& system_message_text();

// Plain-text statement of the TotalCost objective, used when
// PromptSpec::include_formula is set.
std::string total_cost_formula_text(int n, double rho);

// Combines the p best records with q records sampled uniformly without
// replacement from `history` (excluding records already selected), then
// re-sorts ascending by (total_cost, iteration_found). `pool_best` must
// already be sorted ascending by cost.
std::vector<SolutionRecord> sample_solution_base(
    const std::vector<SolutionRecord>& pool_best,
    const std::vector<SolutionRecord>& history, int p, int q,
    std::uint64_t rng_seed);

// Renders the full two-message prompt for one iteration: Block 1 describes
// the DSM in spec.input_format, Block 2 lists the sampled solution base in
// ascending cost order (optionally with the objective formula), Block 3 asks
// for a strictly better partition in JSON form. Label assignment and line
// order are shuffled deterministically from (spec.shuffle_seed, iteration).
RenderedPrompt render_prompt(const DsmCase& dsm_case, const PromptSpec& spec,
                             const std::vector<SolutionRecord>& pool,
                             const std::vector<SolutionRecord>& history,
                             int iteration);

// Per-format body renderers in canonical (unshuffled) line order. These are
// the building blocks of render_prompt, exposed for direct inspection.
std::string render_directed_edge_list(const DsmCase& dsm_case,
                                      const LabelMap& label_map);
std::string render_adjacency_matrix(const DsmCase& dsm_case,
                                    const LabelMap& label_map);
std::string render_undirected_edge_list(const DsmCase& dsm_case,
                                        const LabelMap& label_map);
std::string render_natural_language(const DsmCase& dsm_case,
                                    const LabelMap& label_map,
                                    bool knowledge = false);

// One "N01: M2, N02: M1, ..." listing for a partition, ordered by display
// label ascending.
std::string render_solution_mapping(const DsmCase& dsm_case,
                                    const Partition& partition,
                                    const LabelMap& label_map);

}  // namespace dsmopt
