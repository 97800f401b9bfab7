#include <doctest.h>

#include <algorithm>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "dsmopt/core_model.hpp"
#include "dsmopt/errors.hpp"
#include "dsmopt/metrics.hpp"
#include "dsmopt/prompting.hpp"
#include "test_util.hpp"

using namespace dsmopt;

namespace {

std::vector<SolutionRecord> singleton_history(const DsmCase& dsm_case) {
  const Partition singleton = singleton_partition(dsm_case);
  return {SolutionRecord{singleton, total_cost(dsm_case, singleton), 0}};
}

RenderedPrompt render_fixture(const DsmCase& dsm_case, InputFormat format,
                              bool knowledge, bool include_formula) {
  PromptSpec spec;
  spec.input_format = format;
  spec.knowledge = knowledge;
  spec.include_formula = include_formula;
  spec.shuffle_seed = 0;
  const std::vector<SolutionRecord> history = singleton_history(dsm_case);
  return render_prompt(dsm_case, spec, history, history, 1);
}

int count_occurrences(const std::string& text, const std::string& needle) {
  int count = 0;
  for (std::size_t pos = text.find(needle); pos != std::string::npos;
       pos = text.find(needle, pos + 1)) {
    ++count;
  }
  return count;
}

const char* kFormats[] = {"directed_edge_list", "adjacency_matrix",
                          "undirected_edge_list", "natural_language"};

}  // namespace

TEST_SUITE("prompting") {

TEST_CASE("input format strings round trip") {
  for (const InputFormat format :
       {InputFormat::DirectedEdgeList, InputFormat::AdjacencyMatrix,
        InputFormat::UndirectedEdgeList, InputFormat::NaturalLanguage}) {
    CHECK(input_format_from_string(to_string(format)) == format);
  }
  CHECK_THROWS_AS(input_format_from_string("csv"), ConfigError);
}

TEST_CASE("label text is zero padded to the case width") {
  CHECK(label_text(1, 3) == "N01");
  CHECK(label_text(3, 9) == "N03");
  CHECK(label_text(10, 12) == "N10");
  CHECK(label_text(7, 100) == "N007");
  CHECK(label_text(100, 100) == "N100");
}

TEST_CASE("weights format like the paper examples") {
  CHECK(format_weight(4.0) == "4");
  CHECK(format_weight(11.0) == "11");
  CHECK(format_weight(2.5) == "2.5");
}

TEST_CASE("label map is a bijection, deterministic, iteration-shuffled") {
  const DsmCase dsm_case = generate_random_case(9, 0.4, 1, 9, 8);
  const LabelMap first = make_label_map(dsm_case, 42, 1);
  REQUIRE(first.to_label.size() == 9);
  REQUIRE(first.to_node.size() == 9);
  std::set<std::string> labels;
  for (const auto& [node, label] : first.to_label) {
    CHECK(first.to_node.at(label) == node);
    labels.insert(label);
  }
  CHECK(labels.size() == 9);
  CHECK(*labels.begin() == "N01");
  CHECK(*labels.rbegin() == "N09");

  const LabelMap again = make_label_map(dsm_case, 42, 1);
  CHECK(again.to_label == first.to_label);

  bool differs = false;
  for (int iteration = 2; iteration < 10 && !differs; ++iteration) {
    differs = !(make_label_map(dsm_case, 42, iteration).to_label == first.to_label);
  }
  CHECK(differs);
}

TEST_CASE("prompt spec validation") {
  PromptSpec spec;
  CHECK_NOTHROW(validate_prompt_spec(spec));
  spec.pool_best_p = 0;
  spec.pool_random_q = 5;
  CHECK_NOTHROW(validate_prompt_spec(spec));
  spec.pool_random_q = 0;
  CHECK_THROWS_AS(validate_prompt_spec(spec), ConfigError);
  spec.pool_best_p = -1;
  spec.pool_random_q = 5;
  CHECK_THROWS_AS(validate_prompt_spec(spec), ConfigError);
}

TEST_CASE("system message matches its golden and never varies") {
  CHECK(system_message_text() == testutil::read_file(testutil::golden_path("system_message.txt")));
}

TEST_CASE("rendered prompts match the stored goldens byte for byte") {
  const DsmCase dsm_case = load_case_file(testutil::case_path("fuel_demo.json"));
  for (const char* format_name : kFormats) {
    for (const bool knowledge : {false, true}) {
      for (const bool formula : {true, false}) {
        const RenderedPrompt prompt = render_fixture(
            dsm_case, input_format_from_string(format_name), knowledge, formula);
        const std::string golden_name =
            std::string("prompt_") + format_name + (knowledge ? "_k1_" : "_k0_") +
            (formula ? "formula" : "noformula") + ".txt";
        const std::string expected =
            testutil::read_file(testutil::golden_path(golden_name));
        CHECK_MESSAGE(prompt.user_message == expected, golden_name);
        CHECK(prompt.system_message == system_message_text());
      }
    }
  }
}

TEST_CASE("anonymized prompts leak no node names") {
  const DsmCase dsm_case = load_case_file(testutil::case_path("fuel_demo.json"));
  for (const char* format_name : kFormats) {
    const RenderedPrompt prompt =
        render_fixture(dsm_case, input_format_from_string(format_name), false, true);
    for (const DsmNode& node : dsm_case.nodes()) {
      CHECK_MESSAGE(prompt.user_message.find(node.name) == std::string::npos,
                    format_name << " leaked " << node.name);
      CHECK(prompt.user_message.find(node.description) == std::string::npos);
    }
  }
}

TEST_CASE("knowledge prompts state each name and description exactly once") {
  const DsmCase dsm_case = load_case_file(testutil::case_path("fuel_demo.json"));
  // natural_language deliberately repeats names inside sentences, so the
  // exactly-once invariant is asserted on the other three formats.
  for (const char* format_name :
       {"directed_edge_list", "adjacency_matrix", "undirected_edge_list"}) {
    const RenderedPrompt prompt =
        render_fixture(dsm_case, input_format_from_string(format_name), true, true);
    for (const DsmNode& node : dsm_case.nodes()) {
      CHECK_MESSAGE(count_occurrences(prompt.user_message, node.name) == 1,
                    format_name << " / " << node.name);
      CHECK(count_occurrences(prompt.user_message, node.description) == 1);
    }
  }
}

TEST_CASE("knowledge rendering requires full names and descriptions") {
  const DsmCase anonymous = parse_case_text(R"({
    "name": "anon", "dsm_type": "component", "domain": "test",
    "nodes": [{"id": "a"}, {"id": "b"}, {"id": "c"}],
    "edges": [{"target": "a", "source": "b", "weight": 3},
              {"target": "c", "source": "a", "weight": 1}]
  })");
  REQUIRE(!anonymous.has_full_knowledge());
  PromptSpec spec;
  spec.knowledge = true;
  const std::vector<SolutionRecord> history = singleton_history(anonymous);
  CHECK_THROWS_AS(render_prompt(anonymous, spec, history, history, 1), ConfigError);
  spec.knowledge = false;
  CHECK_NOTHROW(render_prompt(anonymous, spec, history, history, 1));
}

TEST_CASE("render_prompt rejects an unsorted pool and an empty base") {
  const DsmCase dsm_case = load_case_file(testutil::case_path("fuel_demo.json"));
  std::vector<SolutionRecord> pool;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Partition partition = random_partition(dsm_case, seed);
    pool.push_back({partition, total_cost(dsm_case, partition), static_cast<int>(seed)});
  }
  std::sort(pool.begin(), pool.end(), [](const auto& a, const auto& b) {
    return a.total_cost > b.total_cost;  // descending on purpose
  });
  PromptSpec spec;
  if (pool.front().total_cost > pool.back().total_cost) {
    CHECK_THROWS_AS(render_prompt(dsm_case, spec, pool, pool, 1), ConfigError);
  }
  CHECK_THROWS_AS(render_prompt(dsm_case, spec, {}, {}, 1), ConfigError);
}

TEST_CASE("directed edge lines match the documented format") {
  const DsmCase dsm_case = load_case_file(testutil::case_path("fuel_demo.json"));
  const RenderedPrompt prompt =
      render_fixture(dsm_case, InputFormat::DirectedEdgeList, false, true);
  CHECK(prompt.user_message.find("N03 --> N01 (weight: 4)") != std::string::npos);

  const std::regex edge_line(R"(N\d\d --> N\d\d \(weight: [0-9.]+\))");
  const std::string body = render_directed_edge_list(
      dsm_case, make_label_map(dsm_case, 0, 1));
  int lines = 0;
  for (std::sregex_iterator it(body.begin(), body.end(), edge_line), end; it != end;
       ++it) {
    ++lines;
  }
  CHECK(lines == static_cast<int>(dsm_case.edge_count()));
}

TEST_CASE("undirected rendering sums opposite directions") {
  const DsmCase dsm_case = load_case_file(testutil::case_path("fuel_demo.json"));
  const std::string body =
      render_undirected_edge_list(dsm_case, make_label_map(dsm_case, 0, 1));
  // pump<->rail carries 4 + 7 = 11
  CHECK(body.find("(weight: 11)") != std::string::npos);
  CHECK(body.find("-->") == std::string::npos);
  CHECK(count_occurrences(body, " -- ") == 2);  // three edges collapse to two pairs
}

TEST_CASE("adjacency matrix is receiver-row oriented") {
  const DsmCase dsm_case = load_case_file(testutil::case_path("fuel_demo.json"));
  const LabelMap label_map = make_label_map(dsm_case, 0, 1);
  const std::string body = render_adjacency_matrix(dsm_case, label_map);
  // every label appears once in the header row and once as a row label
  for (const auto& [node, label] : label_map.to_label) {
    CHECK(count_occurrences(body, label) == 2);
  }
  // row N03 (pump) receives 4 from N01 (rail) and 2 from N02 (tank)
  const std::size_t row_start = body.find("\nN03");
  REQUIRE(row_start != std::string::npos);
  const std::string row = body.substr(row_start + 1, body.find('\n', row_start + 1) -
                                                         row_start - 1);
  CHECK(row.find("4") != std::string::npos);
  CHECK(row.find("2") != std::string::npos);
}

TEST_CASE("natural language mentions use names only under knowledge") {
  const DsmCase dsm_case = load_case_file(testutil::case_path("fuel_demo.json"));
  const LabelMap label_map = make_label_map(dsm_case, 0, 1);
  const std::string anonymous = render_natural_language(dsm_case, label_map, false);
  CHECK(anonymous.find("Fuel Pump") == std::string::npos);
  CHECK(anonymous.find("receives input from") != std::string::npos);
  const std::string named = render_natural_language(dsm_case, label_map, true);
  CHECK(named.find("N03 (Fuel Pump)") != std::string::npos);
}

TEST_CASE("solution mappings list labels in ascending order") {
  const DsmCase dsm_case = load_case_file(testutil::case_path("fuel_demo.json"));
  const LabelMap label_map = make_label_map(dsm_case, 0, 1);
  const std::string mapping = render_solution_mapping(
      dsm_case, singleton_partition(dsm_case), label_map);
  const std::size_t p1 = mapping.find("N01");
  const std::size_t p2 = mapping.find("N02");
  const std::size_t p3 = mapping.find("N03");
  REQUIRE(p1 != std::string::npos);
  CHECK(p1 < p2);
  CHECK(p2 < p3);
  CHECK(count_occurrences(mapping, ": M") == 3);
}

TEST_CASE("block 2 lists solutions ascending by cost with one decimal") {
  const DsmCase dsm_case = generate_random_case(5, 0.5, 1, 9, 77);
  std::vector<SolutionRecord> history;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const Partition partition = random_partition(dsm_case, seed);
    history.push_back({partition, total_cost(dsm_case, partition),
                       static_cast<int>(seed)});
  }
  std::vector<SolutionRecord> pool = history;
  std::sort(pool.begin(), pool.end(), [](const auto& a, const auto& b) {
    return a.total_cost < b.total_cost;
  });
  PromptSpec spec;
  const RenderedPrompt prompt = render_prompt(dsm_case, spec, pool, history, 3);

  std::vector<double> listed;
  const std::regex cost_pattern(R"(\(TotalCost: ([0-9]+\.[0-9])\))");
  for (std::sregex_iterator it(prompt.user_message.begin(), prompt.user_message.end(),
                               cost_pattern),
       end;
       it != end; ++it) {
    listed.push_back(std::stod((*it)[1]));
  }
  REQUIRE(!listed.empty());
  CHECK(std::is_sorted(listed.begin(), listed.end()));
  // "Solution 1:", "Solution 2:", ... numbering
  CHECK(prompt.user_message.find("Solution 1: ") != std::string::npos);
}

TEST_CASE("the formula block is a pure insertion") {
  const DsmCase dsm_case = load_case_file(testutil::case_path("fuel_demo.json"));
  const RenderedPrompt with = render_fixture(dsm_case, InputFormat::DirectedEdgeList,
                                             false, true);
  const RenderedPrompt without = render_fixture(dsm_case, InputFormat::DirectedEdgeList,
                                                false, false);
  const std::string formula = total_cost_formula_text(dsm_case.size(), 1.0);
  const std::size_t at = with.user_message.find(formula);
  REQUIRE(at != std::string::npos);
  std::string stripped = with.user_message;
  stripped.erase(at, formula.size() + 2);  // formula + trailing blank line
  CHECK(stripped == without.user_message);
}

TEST_CASE("solution base sampling composes p best and q random") {
  const DsmCase dsm_case = generate_random_case(6, 0.5, 1, 9, 13);
  std::vector<SolutionRecord> history;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Partition partition = random_partition(dsm_case, seed * 31 + 1);
    history.push_back({partition, total_cost(dsm_case, partition),
                       static_cast<int>(seed)});
  }
  std::vector<SolutionRecord> best = history;
  std::stable_sort(best.begin(), best.end(), [](const auto& a, const auto& b) {
    return a.total_cost < b.total_cost;
  });
  best.resize(5);

  const std::vector<SolutionRecord> pool = sample_solution_base(best, history, 5, 5, 9);
  CHECK(pool.size() == 10);
  for (std::size_t i = 1; i < pool.size(); ++i) {
    const bool ordered =
        pool[i - 1].total_cost < pool[i].total_cost ||
        (pool[i - 1].total_cost == pool[i].total_cost &&
         pool[i - 1].iteration_found <= pool[i].iteration_found);
    CHECK(ordered);
  }
  for (const SolutionRecord& record : best) {
    CHECK(std::count_if(pool.begin(), pool.end(), [&](const SolutionRecord& r) {
            return r.partition == record.partition && r.total_cost == record.total_cost;
          }) >= 1);
  }
  // deterministic in the seed
  const std::vector<SolutionRecord> again = sample_solution_base(best, history, 5, 5, 9);
  REQUIRE(again.size() == pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    CHECK(again[i] == pool[i]);
  }

  // q larger than what remains just takes everything once
  const std::vector<SolutionRecord> all =
      sample_solution_base(best, history, 5, 100, 9);
  CHECK(all.size() == history.size());

  CHECK_THROWS_AS(sample_solution_base(best, history, -1, 5, 9), ConfigError);
}

TEST_CASE("render_prompt is deterministic and hash-stable") {
  const DsmCase dsm_case = load_case_file(testutil::case_path("turbofan_demo.json"));
  PromptSpec spec;
  spec.shuffle_seed = 4;
  const std::vector<SolutionRecord> history = singleton_history(dsm_case);
  const RenderedPrompt first = render_prompt(dsm_case, spec, history, history, 2);
  const RenderedPrompt second = render_prompt(dsm_case, spec, history, history, 2);
  CHECK(first.user_message == second.user_message);
  CHECK(first.prompt_hash == second.prompt_hash);
  CHECK(first.prompt_hash.size() == 16);
  CHECK(first.prompt_hash.find_first_not_of("0123456789abcdef") == std::string::npos);

  const RenderedPrompt other_iteration = render_prompt(dsm_case, spec, history, history, 3);
  CHECK(other_iteration.prompt_hash != first.prompt_hash);
}

}  // TEST_SUITE
