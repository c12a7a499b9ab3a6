#pragma once

#include <json.hpp>

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "rlvr/backend.hpp"
#include "rlvr/corpus.hpp"
#include "rlvr/prompting.hpp"
#include "rlvr/stats.hpp"
#include "rlvr/trainer.hpp"

namespace rlvr {

enum class ExtractorKind { none, identity, llm };

struct EvalConfig {
  std::string dataset_path;
  Dataset dataset = Dataset::triviaqa;
  Split split = Split::test;
  PromptMode mode{};
  int budget = 0;  // required; reasoning-token budget before forcing
  std::string budget_suffix = kDefaultBudgetSuffix;
  BackendConfig backend;
  std::string model;
  int max_tokens = 1024;
  std::optional<double> temperature;  // model defaults when unset
  std::optional<double> top_p;
  ExtractorKind extractor = ExtractorKind::identity;
  std::string extractor_endpoint;
  std::string extractor_model = "extractor";
  int sample_cap = -1;  // <0: full file
  std::uint64_t seed = 0;
  std::string out_dir;
  bool force = false;
};

nlohmann::json eval_config_json(const EvalConfig& config);  // canonical, no secrets
std::string config_hash(const nlohmann::json& canonical_config);
std::string run_id_for(const std::string& config_hash, std::uint64_t seed);

struct EvalSummary {
  std::string run_id;
  std::string config_hash;
  std::string log_path;
  int n_records = 0;
  int em_count = 0;
  int recall_count = 0;
  int ex_recall_count = 0;
  int ex_recall_scored = 0;
  int unscored = 0;
  bool complete = false;
  double em_pct = 0.0;
  std::optional<double> ex_recall_pct;
};

EvalSummary cmd_eval(const EvalConfig& config, std::ostream& console);

struct TrainToyConfig {
  int num_facts = 50;
  int answer_vocab = 20;
  int reasoning_vocab = 4;
  double train_fraction = 0.8;
  std::string baseline = "rlvr";  // rlvr | reasoning-sft | sft
  TrainConfig train;
  std::uint64_t seed = 0;
  std::string out_dir;
  bool force = false;
};

nlohmann::json train_config_json(const TrainToyConfig& config);

struct TrainSummary {
  std::string run_id;
  std::string config_hash;
  std::string log_path;
  std::string checkpoint_path;
  int steps = 0;
  double initial_em = 0.0;
  double final_train_em = 0.0;
  std::optional<double> final_val_em;
};

TrainSummary cmd_train_toy(const TrainToyConfig& config, std::ostream& console);

struct StatsConfig {
  std::string log_a;
  std::string log_b;
  std::optional<std::string> json_out;
};

struct MetricComparison {
  std::string metric;
  PairedOutcomes counts;
  double p_exact = 1.0;
  std::optional<double> p_chi2_cc;
  bool significant = false;
  long long excluded_pairs = 0;  // pairs where a run left the metric unscored
};

struct StatsReport {
  std::vector<MetricComparison> metrics;
};

StatsReport cmd_stats(const StatsConfig& config, std::ostream& console);

struct ReportConfig {
  std::vector<std::string> log_paths;
  std::optional<std::string> json_out;
};

struct ReportRow {
  std::string run_id;
  Dataset dataset = Dataset::triviaqa;
  long long n = 0;
  double em_pct = 0.0;
  std::optional<double> ex_recall_pct;
  double avg_len = 0.0;
  std::optional<double> avg_len_recalled;
  std::optional<double> avg_len_non_recalled;
};

std::vector<ReportRow> cmd_report(const ReportConfig& config, std::ostream& console);

nlohmann::json report_rows_json(const std::vector<ReportRow>& rows);
nlohmann::json stats_report_json(const StatsReport& report);

}  // namespace rlvr
