#include "rlvr/eval_records.hpp"

#include <fstream>

#include "rlvr/common.hpp"

namespace rlvr {

using nlohmann::json;

json to_json(const EvalRecord& r) {
  json j;
  j["run_id"] = r.run_id;
  j["config_hash"] = r.config_hash;
  j["example_id"] = r.example_id;
  j["dataset"] = to_string(r.dataset);
  j["mode"] = {{"cue", r.mode.cue},
               {"reasoning", r.mode.reasoning},
               {"answer_format", to_string(r.mode.answer_format)}};
  j["model"] = r.model;
  j["raw_text"] = r.raw_text;
  if (r.reasoning_text) j["reasoning_text"] = *r.reasoning_text;
  j["answer_span"] = r.answer_span;
  if (r.extracted_span) j["extracted_span"] = *r.extracted_span;
  j["em"] = r.flags.em;
  j["recall"] = r.flags.recall;
  if (r.flags.ex_recall) j["ex_recall"] = *r.flags.ex_recall;
  j["format_ok"] = r.flags.format_ok;
  j["reward"] = {{"answer_reward", r.reward.answer_reward},
                 {"format_flag", r.reward.format_flag},
                 {"total", r.reward.total}};
  j["reasoning_token_count"] = r.reasoning_token_count;
  j["token_count_source"] = r.token_count_source;
  j["budget_forced"] = r.budget_forced;
  j["latency_ms"] = r.latency_ms;
  if (r.ex_recall_error) j["ex_recall_error"] = *r.ex_recall_error;
  return j;
}

EvalRecord eval_record_from_json(const json& j) {
  EvalRecord r;
  r.run_id = j.value("run_id", "");
  r.config_hash = j.value("config_hash", "");
  r.example_id = j.at("example_id").get<std::string>();
  r.dataset = dataset_from_string(j.value("dataset", "triviaqa"));
  if (j.contains("mode")) {
    r.mode.cue = j["mode"].value("cue", false);
    r.mode.reasoning = j["mode"].value("reasoning", true);
    r.mode.answer_format = answer_format_from_string(j["mode"].value("answer_format", "tags"));
  }
  r.model = j.value("model", "");
  r.raw_text = j.value("raw_text", "");
  if (j.contains("reasoning_text")) r.reasoning_text = j["reasoning_text"].get<std::string>();
  r.answer_span = j.value("answer_span", "");
  if (j.contains("extracted_span")) r.extracted_span = j["extracted_span"].get<std::string>();
  r.flags.em = j.value("em", false);
  r.flags.recall = j.value("recall", false);
  if (j.contains("ex_recall")) r.flags.ex_recall = j["ex_recall"].get<bool>();
  r.flags.format_ok = j.value("format_ok", false);
  if (j.contains("reward")) {
    r.reward.answer_reward = j["reward"].value("answer_reward", 0.0);
    r.reward.format_flag = j["reward"].value("format_flag", 0);
    r.reward.total = j["reward"].value("total", 0.0);
  }
  r.reasoning_token_count = j.value("reasoning_token_count", 0);
  r.token_count_source = j.value("token_count_source", "");
  r.budget_forced = j.value("budget_forced", false);
  r.latency_ms = j.value("latency_ms", 0.0);
  if (j.contains("ex_recall_error")) r.ex_recall_error = j["ex_recall_error"].get<std::string>();
  return r;
}

void append_record(std::ostream& out, const EvalRecord& record) {
  out << to_json(record).dump() << "\n";
}

std::vector<EvalRecord> load_eval_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open eval log: " + path);
  std::vector<EvalRecord> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(eval_record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": bad eval record: " + e.what());
    }
  }
  if (out.empty()) throw DataError("eval log is empty: " + path);
  return out;
}

}  // namespace rlvr
