#include "rlvr/mock_server.hpp"

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "rlvr/backend.hpp"
#include "rlvr/common.hpp"

namespace rlvr {

using nlohmann::json;

struct MockServer::Impl {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  int latency_ms = 0;

  std::mutex mu;
  std::map<std::string, MockFixture> fixtures;
  std::map<std::string, int> failures_served;
  std::vector<MockRequestLogEntry> log;

  std::atomic<long long> requests{0};
  std::atomic<int> active{0};
  std::atomic<int> high_water{0};

  void handle(const httplib::Request& req, httplib::Response& res) {
    int cur = active.fetch_add(1) + 1;
    int seen = high_water.load();
    while (cur > seen && !high_water.compare_exchange_weak(seen, cur)) {
    }
    requests.fetch_add(1);
    if (latency_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(latency_ms));

    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::parse_error&) {
      res.status = 400;
      res.set_content("{\"error\":\"malformed JSON body\"}", "application/json");
      active.fetch_sub(1);
      return;
    }

    std::string model = body.value("model", "");
    std::string prefix = body.value("reasoning_prefix", "");
    std::vector<std::pair<std::string, std::string>> messages;
    if (body.contains("messages") && body["messages"].is_array()) {
      for (const auto& m : body["messages"]) {
        messages.emplace_back(m.value("role", ""), m.value("content", ""));
      }
    }
    std::string hash = prompt_fixture_hash(model, messages, prefix);

    std::string idem;
    if (req.has_header("Idempotency-Key")) idem = req.get_header_value("Idempotency-Key");
    if (!idem.empty()) res.set_header("Idempotency-Key", idem);

    MockFixture fixture;
    bool known = false;
    bool fail_now = false;
    {
      std::lock_guard<std::mutex> lock(mu);
      log.push_back({hash, idem, !prefix.empty(), prefix});
      auto it = fixtures.find(hash);
      if (it != fixtures.end()) {
        known = true;
        fixture = it->second;
        int& served = failures_served[hash];
        if (served < fixture.fail_first) {
          ++served;
          fail_now = true;
        }
      }
    }

    if (!known) {
      res.status = 404;
      json err;
      err["error"] = "no fixture for prompt hash";
      err["prompt_hash"] = hash;
      res.set_content(err.dump(), "application/json");
      active.fetch_sub(1);
      return;
    }
    if (fail_now) {
      res.status = 500;
      res.set_content("{\"error\":\"injected transient failure\"}", "application/json");
      active.fetch_sub(1);
      return;
    }

    json out;
    out["id"] = "mock-" + hash;
    out["object"] = "chat.completion";
    out["model"] = model;
    json message;
    message["role"] = "assistant";
    message["content"] = fixture.answer_text;
    if (!fixture.reasoning_text.empty()) message["reasoning_content"] = fixture.reasoning_text;
    json choice;
    choice["index"] = 0;
    choice["message"] = message;
    choice["finish_reason"] = fixture.finish_reason;
    out["choices"] = json::array({choice});
    if (fixture.include_usage) {
      json usage;
      usage["completion_tokens"] = count_whitespace_tokens(fixture.answer_text);
      usage["reasoning_tokens"] = count_whitespace_tokens(fixture.reasoning_text);
      out["usage"] = usage;
    }
    res.status = 200;
    res.set_content(out.dump(), "application/json");
    active.fetch_sub(1);
  }
};

MockServer::MockServer() : impl_(std::make_unique<Impl>()) {
  impl_->server.new_task_queue = [] { return new httplib::ThreadPool(32); };
  impl_->server.Post("/v1/chat/completions",
                     [this](const httplib::Request& req, httplib::Response& res) {
                       impl_->handle(req, res);
                     });
  impl_->server.Get("/__stats", [this](const httplib::Request&, httplib::Response& res) {
    json s;
    s["request_count"] = impl_->requests.load();
    s["concurrency_high_water"] = impl_->high_water.load();
    res.set_content(s.dump(), "application/json");
  });
}

MockServer::~MockServer() { stop(); }

void MockServer::add_fixture(const std::string& prompt_hash, MockFixture fixture) {
  std::lock_guard<std::mutex> lock(impl_->mu);
  impl_->fixtures[prompt_hash] = std::move(fixture);
}

void MockServer::set_latency_ms(int ms) { impl_->latency_ms = ms; }

int MockServer::start(int port) {
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port("127.0.0.1");
  } else {
    if (!impl_->server.bind_to_port("127.0.0.1", port)) {
      throw BackendError("cannot bind mock server to port " + std::to_string(port));
    }
    impl_->port = port;
  }
  impl_->thread = std::thread([this]() { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->port;
}

void MockServer::stop() {
  if (impl_->thread.joinable()) {
    impl_->server.stop();
    impl_->thread.join();
  }
}

int MockServer::port() const { return impl_->port; }

std::string MockServer::endpoint() const {
  return "http://127.0.0.1:" + std::to_string(impl_->port);
}

long long MockServer::request_count() const { return impl_->requests.load(); }

int MockServer::concurrency_high_water() const { return impl_->high_water.load(); }

std::vector<MockRequestLogEntry> MockServer::request_log() const {
  std::lock_guard<std::mutex> lock(impl_->mu);
  return impl_->log;
}

int run_mock_server_from_file(const std::string& fixture_path, int port) {
  std::ifstream in(fixture_path);
  if (!in) throw DataError("cannot open fixture file: " + fixture_path);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw DataError(std::string("malformed fixture file: ") + e.what());
  }
  if (!doc.is_object()) throw DataError("fixture file must be a JSON object keyed by prompt hash");

  MockServer server;
  for (const auto& [hash, spec] : doc.items()) {
    MockFixture f;
    f.answer_text = spec.value("answer_text", "");
    f.reasoning_text = spec.value("reasoning_text", "");
    f.finish_reason = spec.value("finish_reason", "stop");
    f.fail_first = spec.value("fail_first", 0);
    f.include_usage = spec.value("include_usage", true);
    server.add_fixture(hash, std::move(f));
  }
  int bound = server.start(port);
  std::cout << "mock server listening on http://127.0.0.1:" << bound << " with "
            << doc.size() << " fixture(s)" << std::endl;
  // Serve until interrupted.
  while (true) std::this_thread::sleep_for(std::chrono::seconds(1));
  return bound;
}

}  // namespace rlvr
