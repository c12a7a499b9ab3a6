#include "rlvr/backend.hpp"

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <thread>

#include "rlvr/common.hpp"

namespace rlvr {

using nlohmann::json;

DecodingDefaults decoding_defaults(const std::string& model_id) {
  std::string id;
  id.reserve(model_id.size());
  for (char c : model_id) id.push_back(c >= 'A' && c <= 'Z' ? char(c - 'A' + 'a') : c);
  if (id.find("r1-distill") != std::string::npos || id.find("olmo") != std::string::npos) {
    return {0.6, 0.95};
  }
  if (id.find("gpt-oss") != std::string::npos) return {1.0, 1.0};
  return {1.0, 1.0};
}

std::string to_string(FinishReason r) {
  switch (r) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
  }
  return "error";
}

FinishReason finish_reason_from_string(const std::string& s) {
  if (s == "stop") return FinishReason::stop;
  if (s == "length") return FinishReason::length;
  return FinishReason::error;
}

json build_chat_request_body(const GenerationRequest& request) {
  json body;
  body["model"] = request.model;
  body["messages"] = json::array();
  body["messages"].push_back({{"role", "system"}, {"content", request.prompt.instruction}});
  body["messages"].push_back({{"role", "user"}, {"content", request.prompt.user_question}});
  body["temperature"] = request.temperature;
  body["top_p"] = request.top_p;
  body["max_tokens"] = request.max_tokens;
  if (request.prompt.forced_prefix) {
    body["reasoning_prefix"] = *request.prompt.forced_prefix;
  }
  for (const auto& [k, v] : request.extra) body[k] = v;
  return body;
}

std::string prompt_fixture_hash(const std::string& model,
                                const std::vector<std::pair<std::string, std::string>>& messages,
                                const std::string& reasoning_prefix) {
  std::string key = model;
  for (const auto& [role, content] : messages) {
    key += '\x1f';
    key += role;
    key += '\x1e';
    key += content;
  }
  key += '\x1f';
  key += reasoning_prefix;
  return fnv1a64_hex(key);
}

std::string prompt_fixture_hash(const GenerationRequest& request) {
  return prompt_fixture_hash(
      request.model,
      {{"system", request.prompt.instruction}, {"user", request.prompt.user_question}},
      request.prompt.forced_prefix.value_or(""));
}

namespace {

GenerationResponse parse_chat_response(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw BackendError(std::string("malformed response JSON: ") + e.what());
  }
  if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
    throw BackendError("response carries no choices");
  }
  const json& choice = j["choices"][0];
  if (!choice.contains("message") || !choice["message"].contains("content")) {
    throw BackendError("response choice carries no message content");
  }
  GenerationResponse out;
  out.answer_text = choice["message"]["content"].get<std::string>();
  if (choice["message"].contains("reasoning_content") &&
      choice["message"]["reasoning_content"].is_string()) {
    out.reasoning_text = choice["message"]["reasoning_content"].get<std::string>();
  }
  if (choice.contains("finish_reason") && choice["finish_reason"].is_string()) {
    out.finish_reason = finish_reason_from_string(choice["finish_reason"].get<std::string>());
  }
  if (j.contains("usage") && j["usage"].contains("reasoning_tokens") &&
      j["usage"]["reasoning_tokens"].is_number_integer()) {
    out.reasoning_token_count = j["usage"]["reasoning_tokens"].get<int>();
    out.token_count_source = "provider";
  } else if (out.reasoning_text) {
    out.reasoning_token_count = count_whitespace_tokens(*out.reasoning_text);
    out.token_count_source = "whitespace";
  }
  return out;
}

struct ParsedEndpoint {
  std::string base;  // scheme://host[:port]
  std::string path_prefix;
};

ParsedEndpoint parse_endpoint(const std::string& endpoint) {
  if (endpoint.empty()) throw UsageError("backend endpoint is not configured");
  size_t scheme = endpoint.find("://");
  if (scheme == std::string::npos) {
    throw UsageError("endpoint must include a scheme, e.g. http://127.0.0.1:8080");
  }
  size_t path = endpoint.find('/', scheme + 3);
  ParsedEndpoint out;
  if (path == std::string::npos) {
    out.base = endpoint;
  } else {
    out.base = endpoint.substr(0, path);
    out.path_prefix = endpoint.substr(path);
    while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
  }
  return out;
}

std::string credential_from_env(const std::string& env_name) {
  if (env_name.empty()) return {};
  const char* v = std::getenv(env_name.c_str());
  return v ? std::string(v) : std::string();
}

bool is_retryable_status(int status) { return status >= 500 || status == 429; }

std::string post_chat(const json& body, const BackendConfig& config,
                      const std::string& idempotency_key) {
  ParsedEndpoint ep = parse_endpoint(config.endpoint);
  httplib::Client client(ep.base);
  client.set_connection_timeout(10, 0);
  client.set_read_timeout(config.timeout_s, 0);
  client.set_write_timeout(config.timeout_s, 0);

  httplib::Headers headers;
  std::string credential = credential_from_env(config.credential_env);
  if (!credential.empty()) headers.emplace("Authorization", "Bearer " + credential);
  if (!idempotency_key.empty()) headers.emplace("Idempotency-Key", idempotency_key);

  const std::string path = ep.path_prefix + "/v1/chat/completions";
  const std::string payload = body.dump();

  std::string last_error;
  for (int attempt = 1; attempt <= config.retry.attempts; ++attempt) {
    auto res = client.Post(path, headers, payload, "application/json");
    if (res) {
      if (res->status >= 200 && res->status < 300) return res->body;
      std::string excerpt = res->body.substr(0, 200);
      if (!is_retryable_status(res->status)) {
        throw BackendError("HTTP " + std::to_string(res->status) + " from backend: " + excerpt);
      }
      last_error = "HTTP " + std::to_string(res->status) + ": " + excerpt;
    } else {
      last_error = "transport error: " + httplib::to_string(res.error());
    }
    if (attempt < config.retry.attempts) {
      int delay = config.retry.base_delay_ms << (attempt - 1);
      std::this_thread::sleep_for(std::chrono::milliseconds(delay));
    }
  }
  throw BackendError("retries exhausted (" + std::to_string(config.retry.attempts) +
                     " attempts): " + last_error);
}

}  // namespace

GenerationResponse generate(const GenerationRequest& request, const BackendConfig& config) {
  json body = build_chat_request_body(request);
  std::string response = post_chat(body, config, request.idempotency_key);
  return parse_chat_response(response);
}

std::vector<GenerationOutcome> generate_batch(const std::vector<GenerationRequest>& requests,
                                              const BackendConfig& config) {
  std::vector<GenerationOutcome> outcomes(requests.size());
  if (requests.empty()) return outcomes;
  const int workers = std::max(1, std::min<int>(config.max_in_flight,
                                                static_cast<int>(requests.size())));
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      while (true) {
        size_t i = next.fetch_add(1);
        if (i >= requests.size()) return;
        double start = now_ms();
        try {
          outcomes[i].response = generate(requests[i], config);
        } catch (const std::exception& e) {
          outcomes[i].error = e.what();
        }
        outcomes[i].latency_ms = now_ms() - start;
      }
    });
  }
  for (auto& t : pool) t.join();
  return outcomes;
}

std::string extract_via_llm(const std::string& answer_text, const BackendConfig& config,
                            const std::string& model) {
  GenerationRequest req;
  req.model = model;
  req.prompt.instruction = "";
  req.prompt.user_question = render_extraction_prompt(answer_text);
  DecodingDefaults d = decoding_defaults(model);
  req.temperature = d.temperature;
  req.top_p = d.top_p;
  req.max_tokens = 256;
  req.idempotency_key = fnv1a64_hex("extract:" + answer_text);

  json body = build_chat_request_body(req);
  // extraction prompts are a single user turn
  body["messages"] = json::array();
  body["messages"].push_back({{"role", "user"}, {"content", req.prompt.user_question}});
  std::string response = post_chat(body, config, req.idempotency_key);
  GenerationResponse parsed = parse_chat_response(response);

  std::string text = trim(parsed.answer_text);
  const std::string label = "Refined Answer:";
  if (text.rfind(label, 0) == 0) text = trim(text.substr(label.size()));
  return text;
}

Extractor llm_extractor(BackendConfig config, std::string model) {
  return [config = std::move(config), model = std::move(model)](const std::string& text) {
    return extract_via_llm(text, config, model);
  };
}

}  // namespace rlvr
