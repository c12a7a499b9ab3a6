#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

namespace rlvr {

// Canned chat-completion response, keyed by prompt hash.
struct MockFixture {
  std::string answer_text;
  std::string reasoning_text;
  std::string finish_reason = "stop";
  int fail_first = 0;       // serve this many HTTP 500s before succeeding
  bool include_usage = true;
};

struct MockRequestLogEntry {
  std::string prompt_hash;
  std::string idempotency_key;
  bool has_reasoning_prefix = false;
  std::string reasoning_prefix;
};

// Deterministic in-process chat-completions server for tests and offline
// runs. Tracks request count and the concurrency high-water mark.
class MockServer {
 public:
  MockServer();
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  void add_fixture(const std::string& prompt_hash, MockFixture fixture);
  void set_latency_ms(int ms);

  // Binds 127.0.0.1 on a free port (or the given one) and serves on a
  // background thread. Returns the bound port.
  int start(int port = 0);
  void stop();

  int port() const;
  std::string endpoint() const;  // http://127.0.0.1:<port>

  long long request_count() const;
  int concurrency_high_water() const;
  std::vector<MockRequestLogEntry> request_log() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Blocking variant for the mock-serve CLI subcommand; fixtures come from a
// JSON file {"<prompt_hash>": {"answer_text": ..., "reasoning_text": ...}}.
int run_mock_server_from_file(const std::string& fixture_path, int port);

}  // namespace rlvr
