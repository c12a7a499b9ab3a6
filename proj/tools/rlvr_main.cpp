#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "rlvr/commands.hpp"
#include "rlvr/common.hpp"
#include "rlvr/mock_server.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitBackend = 2;
constexpr int kExitData = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-book QA evaluation and reward-driven toy training"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Key-value config file; command-line flags take precedence");

  // ---- eval ----------------------------------------------------------
  rlvr::EvalConfig eval;
  std::string eval_dataset = "triviaqa";
  std::string eval_split = "test";
  std::string eval_format = "tags";
  std::string eval_extractor = "identity";
  bool no_cue = false;
  bool no_reasoning = false;
  auto* eval_cmd = app.add_subcommand("eval", "Score a dataset against an inference endpoint");
  eval_cmd->add_option("--dataset-path", eval.dataset_path, "JSONL dataset file")->required();
  eval_cmd->add_option("--dataset", eval_dataset, "Dataset tag (triviaqa, nq, ...)");
  eval_cmd->add_option("--split", eval_split, "Split tag recorded on loaded examples");
  eval_cmd->add_flag("--cue", eval.mode.cue, "Add the think step-by-step cue");
  eval_cmd->add_flag("--no-cue", no_cue, "Drop the cue (default)");
  eval_cmd->add_flag("--no-reasoning", no_reasoning, "Force an empty reasoning span");
  eval_cmd->add_option("--answer-format", eval_format, "tags or boxed");
  eval_cmd->add_option("--budget", eval.budget, "Reasoning-token budget before forcing")
      ->required();
  eval_cmd->add_option("--budget-suffix", eval.budget_suffix, "Suffix cueing a final answer");
  eval_cmd->add_option("--endpoint", eval.backend.endpoint, "Chat-completions endpoint")
      ->required();
  eval_cmd->add_option("--model", eval.model, "Model identifier")->required();
  eval_cmd->add_option("--credential-env", eval.backend.credential_env,
                       "Environment variable holding the API key");
  eval_cmd->add_option("--timeout-s", eval.backend.timeout_s, "Per-request timeout");
  eval_cmd->add_option("--max-in-flight", eval.backend.max_in_flight,
                       "Concurrent request cap");
  eval_cmd->add_option("--max-tokens", eval.max_tokens, "Completion token limit");
  double temperature = -1.0, top_p = -1.0;
  eval_cmd->add_option("--temperature", temperature, "Override the model default");
  eval_cmd->add_option("--top-p", top_p, "Override the model default");
  eval_cmd->add_option("--extractor", eval_extractor, "none, identity, or llm");
  eval_cmd->add_option("--extractor-endpoint", eval.extractor_endpoint,
                       "Endpoint for llm extraction");
  eval_cmd->add_option("--extractor-model", eval.extractor_model, "Extraction model identifier");
  eval_cmd->add_option("--sample", eval.sample_cap, "Cap on examples (default: full file)");
  eval_cmd->add_option("--seed", eval.seed, "Run seed");
  eval_cmd->add_option("--out", eval.out_dir, "Output directory")->required();
  eval_cmd->add_flag("--force", eval.force, "Overwrite an existing run with this config hash");

  // ---- train-toy -----------------------------------------------------
  rlvr::TrainToyConfig train;
  bool train_no_reasoning = false;
  auto* train_cmd =
      app.add_subcommand("train-toy", "Reward-driven training on the synthetic world");
  train_cmd->add_option("--num-facts", train.num_facts, "World size");
  train_cmd->add_option("--answer-vocab", train.answer_vocab, "Answer token vocabulary");
  train_cmd->add_option("--reasoning-vocab", train.reasoning_vocab, "Reasoning token vocabulary");
  train_cmd->add_option("--train-fraction", train.train_fraction, "Reporting split fraction");
  train_cmd->add_option("--baseline", train.baseline, "rlvr, reasoning-sft, or sft");
  train_cmd->add_option("--group-size", train.train.group_size, "Trajectories per group");
  train_cmd->add_option("--groups-per-batch", train.train.groups_per_batch, "Groups per step");
  train_cmd->add_option("--lr", train.train.learning_rate, "Learning rate");
  train_cmd->add_option("--kl", train.train.kl_coefficient, "KL penalty coefficient");
  train_cmd->add_option("--steps", train.train.max_steps, "Training steps");
  train_cmd->add_option("--eval-every", train.train.eval_every, "Exact-EM reporting interval");
  double ratio_clip = -1.0;
  train_cmd->add_option("--ratio-clip", ratio_clip,
                        "Clamp importance weights to [1-c, 1+c] (off by default)");
  train_cmd->add_flag("--no-reasoning", train_no_reasoning,
                      "Train under the no-reasoning condition");
  train_cmd->add_option("--rsft-budget", train.train.rsft_sample_budget,
                        "Trajectory sample budget for reasoning-sft");
  train_cmd->add_option("--rsft-threshold", train.train.rsft_filter_threshold,
                        "Answer-reward filter threshold");
  train_cmd->add_option("--rsft-epochs", train.train.rsft_epochs, "Likelihood-ascent epochs");
  train_cmd->add_option("--rsft-lr", train.train.rsft_learning_rate, "Reasoning-sft learning rate");
  train_cmd->add_option("--sft-steps", train.train.sft_steps, "Supervised steps");
  train_cmd->add_option("--sft-lr", train.train.sft_learning_rate, "Supervised learning rate");
  train_cmd->add_option("--seed", train.seed, "Run seed");
  train_cmd->add_option("--out", train.out_dir, "Output directory")->required();
  train_cmd->add_flag("--force", train.force, "Overwrite an existing run with this config hash");

  // ---- stats ---------------------------------------------------------
  rlvr::StatsConfig stats;
  std::string stats_json;
  auto* stats_cmd = app.add_subcommand("stats", "Paired significance test between two eval logs");
  stats_cmd->add_option("run_a", stats.log_a, "First eval log")->required();
  stats_cmd->add_option("run_b", stats.log_b, "Second eval log")->required();
  stats_cmd->add_option("--json", stats_json, "Write the machine-readable summary here");

  // ---- report --------------------------------------------------------
  rlvr::ReportConfig report;
  std::string report_json;
  auto* report_cmd = app.add_subcommand("report", "Per-dataset metric and length tables");
  report_cmd->add_option("logs", report.log_paths, "Eval logs")->required();
  report_cmd->add_option("--json", report_json, "Write the machine-readable table here");

  // ---- mock-serve ----------------------------------------------------
  std::string fixtures_path;
  int mock_port = 8077;
  auto* mock_cmd = app.add_subcommand("mock-serve", "Serve canned chat completions from fixtures");
  mock_cmd->add_option("--fixtures", fixtures_path, "JSON fixture file")->required();
  mock_cmd->add_option("--port", mock_port, "Port to bind");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (eval_cmd->parsed()) {
      eval.dataset = rlvr::dataset_from_string(eval_dataset);
      eval.split = rlvr::split_from_string(eval_split);
      eval.mode.reasoning = !no_reasoning;
      eval.mode.answer_format = rlvr::answer_format_from_string(eval_format);
      eval.mode = rlvr::make_prompt_mode(eval.mode.cue, eval.mode.reasoning,
                                         eval.mode.answer_format);
      if (temperature >= 0.0) eval.temperature = temperature;
      if (top_p > 0.0) eval.top_p = top_p;
      if (eval_extractor == "none") eval.extractor = rlvr::ExtractorKind::none;
      else if (eval_extractor == "identity") eval.extractor = rlvr::ExtractorKind::identity;
      else if (eval_extractor == "llm") eval.extractor = rlvr::ExtractorKind::llm;
      else throw rlvr::UsageError("unknown extractor kind: " + eval_extractor);
      rlvr::cmd_eval(eval, std::cout);
    } else if (train_cmd->parsed()) {
      if (ratio_clip >= 0.0) train.train.ratio_clip = ratio_clip;
      train.train.mode = rlvr::make_prompt_mode(false, !train_no_reasoning,
                                                rlvr::AnswerFormat::tags);
      rlvr::cmd_train_toy(train, std::cout);
    } else if (stats_cmd->parsed()) {
      if (!stats_json.empty()) stats.json_out = stats_json;
      rlvr::cmd_stats(stats, std::cout);
    } else if (report_cmd->parsed()) {
      if (!report_json.empty()) report.json_out = report_json;
      rlvr::cmd_report(report, std::cout);
    } else if (mock_cmd->parsed()) {
      rlvr::run_mock_server_from_file(fixtures_path, mock_port);
    }
  } catch (const rlvr::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const rlvr::BackendError& e) {
    std::cerr << "backend error: " << e.what() << "\n";
    return kExitBackend;
  } catch (const rlvr::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}
