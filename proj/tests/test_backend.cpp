#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "rlvr/backend.hpp"
#include "rlvr/common.hpp"
#include "rlvr/mock_server.hpp"
#include "rlvr/prompting.hpp"

using namespace rlvr;

namespace {

GenerationRequest request_for(const std::string& question, bool reasoning = true) {
  QAExample ex{"id-1", question, {"x"}, Dataset::triviaqa, Split::test};
  GenerationRequest req;
  req.prompt = render_prompt(ex, make_prompt_mode(false, reasoning, AnswerFormat::tags));
  req.model = "mock-model";
  req.max_tokens = 128;
  req.idempotency_key = fnv1a64_hex("test:" + question);
  return req;
}

BackendConfig config_for(const MockServer& server) {
  BackendConfig c;
  c.endpoint = server.endpoint();
  c.credential_env = "RLVR_TEST_KEY_UNSET";
  c.timeout_s = 10;
  c.max_in_flight = 8;
  c.retry.attempts = 3;
  c.retry.base_delay_ms = 1;
  return c;
}

}  // namespace

TEST_CASE("decoding defaults follow the model family") {
  CHECK(decoding_defaults("gpt-oss-20b").temperature == 1.0);
  CHECK(decoding_defaults("gpt-oss-20b").top_p == 1.0);
  CHECK(decoding_defaults("R1-Distill-Qwen-1.5B").temperature == 0.6);
  CHECK(decoding_defaults("R1-Distill-Qwen-1.5B").top_p == 0.95);
  CHECK(decoding_defaults("Olmo-3-7B-Think").temperature == 0.6);
  CHECK(decoding_defaults("unknown-model").temperature == 1.0);
}

TEST_CASE("request bodies carry the chat-completion fields") {
  GenerationRequest req = request_for("Who?", false);
  req.extra["reasoning_effort"] = "medium";
  auto body = build_chat_request_body(req);
  CHECK(body["model"] == "mock-model");
  CHECK(body["messages"].size() == 2);
  CHECK(body["messages"][0]["role"] == "system");
  CHECK(body["messages"][1]["role"] == "user");
  CHECK(body["messages"][1]["content"] == "Who?");
  CHECK(body["reasoning_prefix"] == kEmptyThinkPrefix);
  CHECK(body["reasoning_effort"] == "medium");

  GenerationRequest plain = request_for("Who?", true);
  CHECK_FALSE(build_chat_request_body(plain).contains("reasoning_prefix"));
}

TEST_CASE("the mock server answers fixtures deterministically") {
  MockServer server;
  GenerationRequest req = request_for("In which country was the first permanent bungee jumping site situated?");
  server.add_fixture(prompt_fixture_hash(req),
                     {"<answer>New Zealand</answer>", "thinking about it", "stop", 0, true});
  server.start();
  BackendConfig cfg = config_for(server);

  GenerationResponse a = generate(req, cfg);
  GenerationResponse b = generate(req, cfg);
  CHECK(a.answer_text == "<answer>New Zealand</answer>");
  CHECK(a.answer_text == b.answer_text);
  REQUIRE(a.reasoning_text.has_value());
  CHECK(*a.reasoning_text == "thinking about it");
  CHECK(a.reasoning_token_count == 3);
  CHECK(a.token_count_source == "provider");
  CHECK(a.finish_reason == FinishReason::stop);
  CHECK(server.request_count() == 2);
}

TEST_CASE("token counts fall back to whitespace when usage is absent") {
  MockServer server;
  GenerationRequest req = request_for("Count me");
  MockFixture fixture;
  fixture.answer_text = "<answer>x</answer>";
  fixture.reasoning_text = "one two three four";
  fixture.include_usage = false;
  server.add_fixture(prompt_fixture_hash(req), fixture);
  server.start();

  GenerationResponse resp = generate(req, config_for(server));
  CHECK(resp.reasoning_token_count == 4);
  CHECK(resp.token_count_source == "whitespace");
}

TEST_CASE("unknown prompts return 404 with the hash in the body") {
  MockServer server;
  server.start();
  GenerationRequest req = request_for("Nobody configured me");
  try {
    generate(req, config_for(server));
    FAIL("expected BackendError");
  } catch (const BackendError& e) {
    std::string msg = e.what();
    CHECK(msg.find("404") != std::string::npos);
    CHECK(msg.find(prompt_fixture_hash(req)) != std::string::npos);
  }
  // 4xx is non-retryable: exactly one request reached the server
  CHECK(server.request_count() == 1);
}

TEST_CASE("transient failures are retried with the same idempotency key") {
  MockServer server;
  GenerationRequest req = request_for("Flaky?");
  MockFixture fixture;
  fixture.answer_text = "<answer>ok</answer>";
  fixture.fail_first = 2;
  server.add_fixture(prompt_fixture_hash(req), fixture);
  server.start();

  GenerationResponse resp = generate(req, config_for(server));
  CHECK(resp.answer_text == "<answer>ok</answer>");
  auto log = server.request_log();
  REQUIRE(log.size() == 3);
  CHECK(log[0].idempotency_key == log[1].idempotency_key);
  CHECK(log[1].idempotency_key == log[2].idempotency_key);
}

TEST_CASE("retries are exhausted after the configured attempts") {
  MockServer server;
  GenerationRequest req = request_for("Always down");
  MockFixture fixture;
  fixture.answer_text = "<answer>never</answer>";
  fixture.fail_first = 99;
  server.add_fixture(prompt_fixture_hash(req), fixture);
  server.start();

  CHECK_THROWS_AS(generate(req, config_for(server)), BackendError);
  CHECK(server.request_count() == 3);
}

TEST_CASE("an unreachable endpoint fails after retries") {
  BackendConfig cfg;
  cfg.endpoint = "http://127.0.0.1:9";  // discard port, nothing listens
  cfg.retry.attempts = 2;
  cfg.retry.base_delay_ms = 1;
  cfg.timeout_s = 1;
  CHECK_THROWS_AS(generate(request_for("hello"), cfg), BackendError);
}

TEST_CASE("batched generation respects the in-flight cap") {
  MockServer server;
  server.set_latency_ms(15);
  std::vector<GenerationRequest> requests;
  for (int i = 0; i < 100; ++i) {
    GenerationRequest req = request_for("q" + std::to_string(i));
    server.add_fixture(prompt_fixture_hash(req),
                       {"<answer>a" + std::to_string(i) + "</answer>", "", "stop", 0, true});
    requests.push_back(std::move(req));
  }
  server.start();
  BackendConfig cfg = config_for(server);
  cfg.max_in_flight = 8;

  auto outcomes = generate_batch(requests, cfg);
  REQUIRE(outcomes.size() == 100);
  for (int i = 0; i < 100; ++i) {
    REQUIRE(outcomes[static_cast<size_t>(i)].response.has_value());
    CHECK(outcomes[static_cast<size_t>(i)].response->answer_text ==
          "<answer>a" + std::to_string(i) + "</answer>");
  }
  CHECK(server.request_count() == 100);
  CHECK(server.concurrency_high_water() <= 8);
  CHECK(server.concurrency_high_water() >= 2);  // the pool actually overlapped
}

TEST_CASE("the reasoning prefix travels with no-reasoning requests") {
  MockServer server;
  GenerationRequest req = request_for("Direct answer?", false);
  server.add_fixture(prompt_fixture_hash(req), {"<answer>direct</answer>", "", "stop", 0, true});
  server.start();
  generate(req, config_for(server));
  auto log = server.request_log();
  REQUIRE(log.size() == 1);
  CHECK(log[0].has_reasoning_prefix);
  CHECK(log[0].reasoning_prefix == kEmptyThinkPrefix);
}

TEST_CASE("llm extraction renders the template and trims the refined answer") {
  MockServer server;
  const std::string answer = "While some might think Saturn, the largest planet is Jupiter.";
  std::string prompt = render_extraction_prompt(answer);
  server.add_fixture(prompt_fixture_hash("extract-model", {{"user", prompt}}, ""),
                     {"  Jupiter \n", "", "stop", 0, true});

  const std::string passthrough = "Leonardo da Vinci painted the Mona Lisa.";
  std::string prompt2 = render_extraction_prompt(passthrough);
  server.add_fixture(prompt_fixture_hash("extract-model", {{"user", prompt2}}, ""),
                     {"Refined Answer: " + passthrough, "", "stop", 0, true});
  server.start();

  BackendConfig cfg = config_for(server);
  CHECK(extract_via_llm(answer, cfg, "extract-model") == "Jupiter");
  // a label echoed by the model is stripped; single answers pass through as-is
  CHECK(extract_via_llm(passthrough, cfg, "extract-model") == passthrough);

  Extractor ex = llm_extractor(cfg, "extract-model");
  CHECK(ex(answer) == "Jupiter");
}

TEST_CASE("extraction failures surface as backend errors") {
  MockServer server;
  server.start();
  BackendConfig cfg = config_for(server);
  CHECK_THROWS_AS(extract_via_llm("unfixtured text", cfg, "extract-model"), BackendError);
}

TEST_CASE("distinct prompts map to distinct fixture hashes") {
  std::set<std::string> hashes;
  for (int i = 0; i < 200; ++i) {
    CHECK(hashes.insert(prompt_fixture_hash(request_for("q" + std::to_string(i)))).second);
  }
  // the forced prefix participates in the key
  CHECK(prompt_fixture_hash(request_for("same", true)) !=
        prompt_fixture_hash(request_for("same", false)));
}
