#pragma once

#include <json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rlvr/metrics.hpp"
#include "rlvr/prompting.hpp"

namespace rlvr {

struct DecodingDefaults {
  double temperature = 1.0;
  double top_p = 1.0;
};

// Per-model sampling defaults; unknown models fall back to 1.0 / 1.0.
DecodingDefaults decoding_defaults(const std::string& model_id);

struct GenerationRequest {
  RenderedPrompt prompt;
  std::string model;
  double temperature = 1.0;
  double top_p = 1.0;
  int max_tokens = 1024;
  // opaque pass-through parameters (e.g. reasoning effort levels)
  std::map<std::string, nlohmann::json> extra;
  std::string idempotency_key;
};

enum class FinishReason { stop, length, error };
std::string to_string(FinishReason r);
FinishReason finish_reason_from_string(const std::string& s);

struct GenerationResponse {
  std::optional<std::string> reasoning_text;
  std::string answer_text;
  int reasoning_token_count = 0;
  FinishReason finish_reason = FinishReason::stop;
  // "provider" when the usage field supplied the count, else "whitespace"
  std::string token_count_source = "whitespace";
};

struct RetryPolicy {
  int attempts = 3;
  int base_delay_ms = 100;  // doubled per retry
};

struct BackendConfig {
  std::string endpoint;  // scheme://host[:port]
  std::string credential_env = "RLVR_API_KEY";
  int timeout_s = 120;
  int max_in_flight = 8;
  RetryPolicy retry;
};

// Chat-completions request body; the wire shape is documented in
// docs/formats.md and is what the mock server speaks.
nlohmann::json build_chat_request_body(const GenerationRequest& request);

// Fixture key: hash of model, message roles/contents, and the forced
// reasoning prefix when present.
std::string prompt_fixture_hash(const GenerationRequest& request);
std::string prompt_fixture_hash(const std::string& model,
                                const std::vector<std::pair<std::string, std::string>>& messages,
                                const std::string& reasoning_prefix);

// One chat-completion round trip with retry on transient failures.
// HTTP 4xx responses are non-retryable and throw BackendError.
GenerationResponse generate(const GenerationRequest& request, const BackendConfig& config);

struct GenerationOutcome {
  std::optional<GenerationResponse> response;
  std::string error;  // non-empty on failure
  double latency_ms = 0.0;
};

// Dispatches requests through a worker pool bounded by max_in_flight;
// results are returned in request order.
std::vector<GenerationOutcome> generate_batch(const std::vector<GenerationRequest>& requests,
                                              const BackendConfig& config);

// Sends the answer-extraction prompt and returns the refined span, trimmed.
std::string extract_via_llm(const std::string& answer_text, const BackendConfig& config,
                            const std::string& model);

// Extractor backed by a remote endpoint.
Extractor llm_extractor(BackendConfig config, std::string model);

}  // namespace rlvr
