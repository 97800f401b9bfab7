#include "dsmopt/llm_gateway.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <regex>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "dsmopt/reference_solvers.hpp"
#include "dsmopt/rng.hpp"

namespace dsmopt {

namespace {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Prompt scraping shared by the heuristic mocks. The mocks read the prompt
// exactly as a model would: the best known solution from Block 2 and, for the
// oracle, the directed edge list from Block 1.

// Returns (display label, module label) pairs from the "Solution 1:" line.
std::vector<std::pair<std::string, std::string>> parse_best_mapping(
    const std::string& user_message) {
  const std::string prefix = "Solution 1: ";
  std::istringstream stream(user_message);
  std::string line;
  while (std::getline(stream, line)) {
    if (line.rfind(prefix, 0) != 0) continue;
    std::string body = line.substr(prefix.size());
    const std::size_t cost_pos = body.rfind(" (TotalCost:");
    if (cost_pos != std::string::npos) body.erase(cost_pos);
    std::vector<std::pair<std::string, std::string>> mapping;
    std::size_t start = 0;
    while (start < body.size()) {
      std::size_t end = body.find(", ", start);
      if (end == std::string::npos) end = body.size();
      const std::string entry = body.substr(start, end - start);
      const std::size_t colon = entry.find(": ");
      if (colon == std::string::npos) {
        throw GatewayError(TransportFailureKind::MalformedReply,
                           "mock backend could not parse solution entry '" + entry + "'");
      }
      mapping.emplace_back(entry.substr(0, colon), entry.substr(colon + 2));
      start = end + 2;
    }
    if (mapping.empty()) {
      throw GatewayError(TransportFailureKind::MalformedReply,
                         "mock backend found an empty solution line in the prompt");
    }
    return mapping;
  }
  throw GatewayError(TransportFailureKind::MalformedReply,
                     "mock backend found no 'Solution 1:' line in the prompt");
}

struct ParsedEdge {
  std::string target;
  std::string source;
  double weight = 0.0;
};

std::vector<ParsedEdge> parse_directed_edges(const std::string& user_message) {
  static const std::regex edge_pattern(
      R"(^(\S+) --> (\S+) \(weight: ([0-9eE.+-]+)\)$)");
  std::vector<ParsedEdge> edges;
  std::istringstream stream(user_message);
  std::string line;
  std::smatch match;
  while (std::getline(stream, line)) {
    if (std::regex_match(line, match, edge_pattern)) {
      edges.push_back({match[1].str(), match[2].str(), std::stod(match[3].str())});
    }
  }
  return edges;
}

std::string mapping_to_json(const std::vector<std::pair<std::string, std::string>>& mapping) {
  json out = json::object();
  for (const auto& [label, module] : mapping) out[label] = module;
  return out.dump();
}

// One random single-node reassignment over a label->module mapping, never
// producing a single-module result.
std::vector<std::pair<std::string, std::string>> random_move(
    std::vector<std::pair<std::string, std::string>> mapping, Rng& rng) {
  std::vector<std::string> modules;
  for (const auto& [label, module] : mapping) {
    if (std::find(modules.begin(), modules.end(), module) == modules.end()) {
      modules.push_back(module);
    }
  }
  std::sort(modules.begin(), modules.end());
  // fresh module label: M<k> for the smallest k not in use
  std::string fresh;
  for (int k = 1;; ++k) {
    fresh = "M" + std::to_string(k);
    if (std::find(modules.begin(), modules.end(), fresh) == modules.end()) break;
  }

  for (int attempt = 0; attempt < 256; ++attempt) {
    const std::size_t node = rng.uniform_index(mapping.size());
    const std::string from = mapping[node].second;
    std::vector<std::string> targets;
    for (const std::string& module : modules) {
      if (module != from) targets.push_back(module);
    }
    targets.push_back(fresh);
    const std::string to = targets[rng.uniform_index(targets.size())];
    auto candidate = mapping;
    candidate[node].second = to;
    std::set<std::string> distinct;
    for (const auto& [label, module] : candidate) distinct.insert(module);
    if (distinct.size() >= 2) return candidate;
  }
  throw GatewayError(TransportFailureKind::MalformedReply,
                     "mock backend failed to construct a valid move");
}

// ---------------------------------------------------------------------------
// Mock backends

class EchoBackend final : public ChatBackend {
 public:
  explicit EchoBackend(std::string text) : text_(std::move(text)) {}
  std::string name() const override { return "mock:echo"; }
  ChatResponse send(const ChatRequest&) override {
    ChatResponse response;
    response.text = text_;
    return response;
  }

 private:
  std::string text_;
};

class RandomMoveBackend final : public ChatBackend {
 public:
  explicit RandomMoveBackend(std::uint64_t seed) : rng_(derive_seed(seed, "mock-random-move")) {}
  std::string name() const override { return "mock:random_move"; }
  ChatResponse send(const ChatRequest& request) override {
    std::lock_guard<std::mutex> lock(mutex_);
    ChatResponse response;
    response.text = mapping_to_json(random_move(parse_best_mapping(request.user_message), rng_));
    return response;
  }

 private:
  std::mutex mutex_;
  Rng rng_;
};

class OracleOnceThenRandomBackend final : public ChatBackend {
 public:
  OracleOnceThenRandomBackend(std::uint64_t seed, int max_n)
      : rng_(derive_seed(seed, "mock-oracle")), max_n_(max_n) {}
  std::string name() const override { return "mock:oracle_once_then_random"; }

  ChatResponse send(const ChatRequest& request) override {
    std::lock_guard<std::mutex> lock(mutex_);
    ChatResponse response;
    if (answered_once_) {
      response.text =
          mapping_to_json(random_move(parse_best_mapping(request.user_message), rng_));
      return response;
    }
    answered_once_ = true;
    response.text = solve_from_prompt(request.user_message);
    return response;
  }

 private:
  // Rebuilds the case in display-label space from the prompt itself and
  // brute-forces it; the optimum maps straight back through the labels the
  // optimizer will use for parsing.
  std::string solve_from_prompt(const std::string& user_message) const {
    const auto best = parse_best_mapping(user_message);   // carries all labels
    const auto edges = parse_directed_edges(user_message);
    if (edges.empty()) {
      throw GatewayError(TransportFailureKind::MalformedReply,
                         "oracle mock found no directed edge list in the prompt");
    }
    std::vector<DsmNode> nodes;
    nodes.reserve(best.size());
    std::vector<std::pair<std::string, std::string>> sorted_best = best;
    std::sort(sorted_best.begin(), sorted_best.end());
    for (const auto& [label, module] : sorted_best) nodes.push_back({label, "", ""});
    std::vector<DsmEdge> dsm_edges;
    dsm_edges.reserve(edges.size());
    for (const ParsedEdge& edge : edges) {
      dsm_edges.push_back({edge.target, edge.source, edge.weight});
    }
    DsmCase display_case("oracle_view", DsmType::Component, "mock", std::move(nodes),
                         std::move(dsm_edges));
    const SolutionRecord optimum = brute_force_optimum(display_case, CostParams{}, max_n_);
    std::vector<std::pair<std::string, std::string>> mapping;
    mapping.reserve(sorted_best.size());
    for (int i = 0; i < display_case.size(); ++i) {
      mapping.emplace_back(display_case.nodes()[static_cast<std::size_t>(i)].id,
                           "M" + std::to_string(optimum.partition.modules[static_cast<std::size_t>(i)]));
    }
    return mapping_to_json(mapping);
  }

  std::mutex mutex_;
  mutable Rng rng_;
  int max_n_;
  bool answered_once_ = false;
};

class ReplayFileBackend final : public ChatBackend {
 public:
  explicit ReplayFileBackend(std::vector<std::string> responses)
      : responses_(std::move(responses)) {}
  std::string name() const override { return "mock:replay_file"; }
  ChatResponse send(const ChatRequest&) override {
    std::lock_guard<std::mutex> lock(mutex_);
    if (next_ >= responses_.size()) {
      throw GatewayError(TransportFailureKind::Exhausted,
                         "replay script exhausted after " + std::to_string(responses_.size()) +
                             " responses");
    }
    ChatResponse response;
    response.text = responses_[next_++];
    return response;
  }

 private:
  std::mutex mutex_;
  std::vector<std::string> responses_;
  std::size_t next_ = 0;
};

// ---------------------------------------------------------------------------
// HTTP backend

TransportFailureKind classify_status(int status) {
  if (status == 401 || status == 403) return TransportFailureKind::Auth;
  if (status == 408) return TransportFailureKind::Timeout;
  if (status == 429) return TransportFailureKind::RateLimited;
  if (status >= 500) return TransportFailureKind::ServerError;
  return TransportFailureKind::MalformedReply;  // other 4xx: bad request shape
}

class HttpChatBackend final : public ChatBackend {
 public:
  explicit HttpChatBackend(HttpBackendConfig config) : config_(std::move(config)) {
    if (config_.base_url.empty()) {
      throw ConfigError("http backend needs a base url");
    }
  }

  std::string name() const override { return "http:" + config_.base_url; }

  ChatResponse send(const ChatRequest& request) override {
    httplib::Client client(config_.base_url);
    client.set_connection_timeout(config_.timeout_seconds, 0);
    client.set_read_timeout(config_.timeout_seconds, 0);
    client.set_write_timeout(config_.timeout_seconds, 0);

    json body;
    body["model"] = request.model_name.empty() ? config_.model_name : request.model_name;
    body["messages"] = json::array({
        json{{"role", "system"}, {"content", request.system_message}},
        json{{"role", "user"}, {"content", request.user_message}},
    });
    body["temperature"] = request.temperature;
    if (request.max_output_tokens > 0) body["max_tokens"] = request.max_output_tokens;

    httplib::Headers headers;
    if (!config_.api_key.empty()) {
      headers.emplace("Authorization", "Bearer " + config_.api_key);
    }

    const auto started = std::chrono::steady_clock::now();
    httplib::Result result = client.Post(config_.path, headers, body.dump(),
                                         "application/json");
    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - started);

    if (!result) {
      const httplib::Error error = result.error();
      const TransportFailureKind kind =
          (error == httplib::Error::ConnectionTimeout || error == httplib::Error::Read ||
           error == httplib::Error::Write)
              ? TransportFailureKind::Timeout
              : TransportFailureKind::Network;
      throw GatewayError(kind, "request to " + config_.base_url + config_.path +
                                   " failed: " + httplib::to_string(error));
    }
    if (result->status != 200) {
      throw GatewayError(classify_status(result->status),
                         "endpoint " + config_.base_url + config_.path + " returned HTTP " +
                             std::to_string(result->status));
    }

    ChatResponse response;
    response.latency = elapsed;
    try {
      const json reply = json::parse(result->body);
      response.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
      if (reply.contains("usage")) {
        const json& usage = reply["usage"];
        if (usage.contains("prompt_tokens") && usage.contains("completion_tokens")) {
          response.token_usage.input = usage["prompt_tokens"].get<int>();
          response.token_usage.output = usage["completion_tokens"].get<int>();
        }
      }
    } catch (const json::exception& error) {
      throw GatewayError(TransportFailureKind::MalformedReply,
                         std::string("could not parse chat-completion envelope: ") +
                             error.what());
    }
    return response;
  }

 private:
  HttpBackendConfig config_;
};

}  // namespace

std::string to_string(TransportFailureKind kind) {
  switch (kind) {
    case TransportFailureKind::Timeout:
      return "timeout";
    case TransportFailureKind::Network:
      return "network";
    case TransportFailureKind::RateLimited:
      return "rate_limited";
    case TransportFailureKind::ServerError:
      return "server_error";
    case TransportFailureKind::Auth:
      return "auth";
    case TransportFailureKind::MalformedReply:
      return "malformed_reply";
    case TransportFailureKind::Exhausted:
      return "exhausted";
  }
  return "unknown";
}

GatewayError::GatewayError(TransportFailureKind kind, const std::string& message,
                           int attempts)
    : Error("[" + to_string(kind) + "] " + message),
      kind_(kind),
      attempts_(attempts),
      message_(message) {}

ChatResponse complete(ChatBackend& backend, const ChatRequest& request,
                      const RetryPolicy& policy) {
  if (policy.max_attempts < 1) {
    throw ConfigError("retry policy needs max_attempts >= 1");
  }
  std::function<void(std::chrono::milliseconds)> sleep_for = policy.sleeper;
  if (!sleep_for) {
    sleep_for = [](std::chrono::milliseconds wait) { std::this_thread::sleep_for(wait); };
  }
  for (int attempt = 1;; ++attempt) {
    try {
      ChatResponse response = backend.send(request);
      response.attempts = attempt;
      return response;
    } catch (const GatewayError& error) {
      const bool retryable = policy.retry_on.count(error.kind()) > 0;
      if (!retryable || attempt >= policy.max_attempts) {
        throw GatewayError(error.kind(),
                           error.message() + " (after " + std::to_string(attempt) +
                               (attempt == 1 ? " attempt)" : " attempts)"),
                           attempt);
      }
      sleep_for(policy.backoff_base * (1LL << (attempt - 1)));
    }
  }
}

HttpBackendConfig http_config_from_env(const char* base_url_var, const char* api_key_var,
                                       const char* model_var) {
  HttpBackendConfig config;
  if (const char* base_url = std::getenv(base_url_var)) config.base_url = base_url;
  if (const char* api_key = std::getenv(api_key_var)) config.api_key = api_key;
  if (const char* model = std::getenv(model_var)) config.model_name = model;
  if (config.base_url.empty()) {
    throw ConfigError(std::string("environment variable ") + base_url_var +
                      " must hold the chat-completions base url");
  }
  return config;
}

std::unique_ptr<ChatBackend> make_http_backend(const HttpBackendConfig& config) {
  return std::make_unique<HttpChatBackend>(config);
}

std::string to_string(MockMode mode) {
  switch (mode) {
    case MockMode::Echo:
      return "echo";
    case MockMode::RandomMove:
      return "random_move";
    case MockMode::OracleOnceThenRandom:
      return "oracle_once_then_random";
    case MockMode::ReplayFile:
      return "replay_file";
  }
  return "unknown";
}

MockMode mock_mode_from_string(const std::string& text) {
  if (text == "echo") return MockMode::Echo;
  if (text == "random_move") return MockMode::RandomMove;
  if (text == "oracle_once_then_random") return MockMode::OracleOnceThenRandom;
  if (text == "replay_file") return MockMode::ReplayFile;
  throw ConfigError("unknown mock mode: " + text);
}

std::unique_ptr<ChatBackend> mock_heuristic_backend(const DsmCase& dsm_case, MockMode mode,
                                                    std::uint64_t rng_seed,
                                                    const std::string& extra) {
  switch (mode) {
    case MockMode::Echo:
      return std::make_unique<EchoBackend>(extra.empty() ? "{}" : extra);
    case MockMode::RandomMove:
      return std::make_unique<RandomMoveBackend>(rng_seed);
    case MockMode::OracleOnceThenRandom: {
      constexpr int kMaxOracleNodes = 12;
      if (dsm_case.size() > kMaxOracleNodes) {
        throw ConfigError("oracle mock requires case size <= " +
                          std::to_string(kMaxOracleNodes) + ", case '" + dsm_case.name() +
                          "' has " + std::to_string(dsm_case.size()));
      }
      return std::make_unique<OracleOnceThenRandomBackend>(rng_seed, kMaxOracleNodes);
    }
    case MockMode::ReplayFile:
      return std::make_unique<ReplayFileBackend>(load_replay_file(extra));
  }
  throw ConfigError("unknown mock mode");
}

std::vector<std::string> load_replay_file(const std::string& path) {
  std::ifstream input(path);
  if (!input) {
    throw IoError("cannot open replay file: " + path);
  }
  json parsed;
  try {
    input >> parsed;
  } catch (const json::exception& error) {
    throw IoError("replay file " + path + " is not valid JSON: " + error.what());
  }
  if (!parsed.is_array()) {
    throw IoError("replay file " + path + " must hold a JSON array of strings");
  }
  std::vector<std::string> responses;
  responses.reserve(parsed.size());
  for (const json& entry : parsed) {
    if (!entry.is_string()) {
      throw IoError("replay file " + path + " must hold a JSON array of strings");
    }
    responses.push_back(entry.get<std::string>());
  }
  return responses;
}

}  // namespace dsmopt
