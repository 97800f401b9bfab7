#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "dsmopt/core_model.hpp"
#include "dsmopt/errors.hpp"

namespace dsmopt {

// Transport-level failure classes. Content validity is never judged here;
// a syntactically broken model answer is still a transport success.
enum class TransportFailureKind {
  Timeout,
  Network,
  RateLimited,
  ServerError,
  Auth,
  MalformedReply,
  Exhausted,
};

std::string to_string(TransportFailureKind kind);

class GatewayError : public Error {
 public:
  GatewayError(TransportFailureKind kind, const std::string& message, int attempts = 1);
  TransportFailureKind kind() const { return kind_; }
  int attempts() const { return attempts_; }
  // The failure text without the "[kind]" prefix that what() carries.
  const std::string& message() const { return message_; }

 private:
  TransportFailureKind kind_;
  int attempts_;
  std::string message_;
};

struct ChatRequest {
  std::string system_message;
  std::string user_message;
  double temperature = 1.0;
  std::string model_name;
  int max_output_tokens = 0;  // 0 = leave the backend default in place
};

struct TokenUsage {
  int input = -1;  // -1 = unknown
  int output = -1;
  bool known() const { return input >= 0 && output >= 0; }
};

struct ChatResponse {
  std::string text;
  std::chrono::milliseconds latency{0};
  TokenUsage token_usage;
  int attempts = 1;
};

// One chat-completion provider. send() performs a single attempt and throws
// GatewayError on transport failure; retrying is complete()'s job.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string name() const = 0;
  virtual ChatResponse send(const ChatRequest& request) = 0;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds backoff_base{250};
  std::set<TransportFailureKind> retry_on = {
      TransportFailureKind::Timeout, TransportFailureKind::Network,
      TransportFailureKind::RateLimited, TransportFailureKind::ServerError};
  // Test hook: replaces the real sleep between attempts when set.
  std::function<void(std::chrono::milliseconds)> sleeper;
};

// Sends the request, retrying retryable failures with exponential backoff
// (backoff_base * 2^(attempt-1)). Auth and malformed-envelope failures are
// surfaced immediately; exhaustion rethrows the last failure with the total
// attempt count attached.
ChatResponse complete(ChatBackend& backend, const ChatRequest& request,
                      const RetryPolicy& policy = {});

// OpenAI-compatible chat-completions endpoint over HTTP(S).
struct HttpBackendConfig {
  std::string base_url;  // scheme://host[:port], no trailing path
  std::string path = "/v1/chat/completions";
  std::string api_key;   // empty = send no Authorization header
  std::string model_name;
  int timeout_seconds = 120;
};

// Reads base url / api key / model name from the environment. Missing base
// url is an error; a missing key is allowed (local open endpoints).
HttpBackendConfig http_config_from_env(const char* base_url_var = "DSMOPT_BASE_URL",
                                       const char* api_key_var = "DSMOPT_API_KEY",
                                       const char* model_var = "DSMOPT_MODEL");

std::unique_ptr<ChatBackend> make_http_backend(const HttpBackendConfig& config);

// Deterministic offline stand-ins for a model, used by tests and the
// experiment harness. All of them work purely from the prompt text, exactly
// like a real model would.
enum class MockMode { Echo, RandomMove, OracleOnceThenRandom, ReplayFile };

std::string to_string(MockMode mode);
MockMode mock_mode_from_string(const std::string& text);

// Echo: always returns `extra` verbatim (default "{}").
// RandomMove: parses the best solution out of the prompt's Block 2 and
//   returns it with one random single-node reassignment (never collapsing to
//   a single module).
// OracleOnceThenRandom: on the first call, parses the directed edge list out
//   of Block 1, brute-forces that graph in display-label space and returns
//   the optimum; afterwards behaves like RandomMove. Requires the prompt's
//   Block 1 to use the directed edge list format and case size within the
//   brute-force bound.
// ReplayFile: returns the strings loaded from the JSON file `extra` in
//   order; one more call throws GatewayError(Exhausted).
std::unique_ptr<ChatBackend> mock_heuristic_backend(const DsmCase& dsm_case, MockMode mode,
                                                    std::uint64_t rng_seed,
                                                    const std::string& extra = "");

// Parses a ReplayFile script: a JSON array of strings.
std::vector<std::string> load_replay_file(const std::string& path);

}  // namespace dsmopt
