#pragma once

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

#include "rlvr/corpus.hpp"
#include "rlvr/metrics.hpp"
#include "rlvr/prompting.hpp"
#include "rlvr/reward.hpp"

namespace rlvr {

// One scored prediction as persisted to the JSONL eval log.
struct EvalRecord {
  std::string run_id;
  std::string config_hash;
  std::string example_id;
  Dataset dataset = Dataset::triviaqa;
  PromptMode mode{};
  std::string model;
  std::string raw_text;
  std::optional<std::string> reasoning_text;
  std::string answer_span;
  std::optional<std::string> extracted_span;
  ScoreFlags flags{};
  RewardBreakdown reward{};
  int reasoning_token_count = 0;
  std::string token_count_source;
  bool budget_forced = false;
  double latency_ms = 0.0;
  std::optional<std::string> ex_recall_error;  // set when the extractor failed
};

nlohmann::json to_json(const EvalRecord& record);
EvalRecord eval_record_from_json(const nlohmann::json& j);

void append_record(std::ostream& out, const EvalRecord& record);
std::vector<EvalRecord> load_eval_log(const std::string& path);

}  // namespace rlvr
