#include "rlvr/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "rlvr/common.hpp"
#include "rlvr/eval_records.hpp"
#include "rlvr/stats.hpp"

namespace rlvr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double round1(double v) { return std::round(v * 10.0) / 10.0; }
double round2(double v) { return std::round(v * 100.0) / 100.0; }

std::string pct1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return std::string(buf);
}

std::string len2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return std::string(buf);
}

void ensure_out_dir(const std::string& out_dir) {
  if (out_dir.empty()) throw UsageError("output directory is required");
  fs::create_directories(out_dir);
}

void write_manifest(const std::string& path, const json& manifest) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest: " + path);
  out << manifest.dump(2) << "\n";
}

}  // namespace

std::string config_hash(const json& canonical_config) {
  return fnv1a64_hex(canonical_config.dump());
}

std::string run_id_for(const std::string& hash, std::uint64_t seed) {
  return fnv1a64_hex(hash + "-" + std::to_string(seed));
}

json eval_config_json(const EvalConfig& c) {
  json j;
  j["command"] = "eval";
  j["dataset_path"] = c.dataset_path;
  j["dataset"] = to_string(c.dataset);
  j["split"] = to_string(c.split);
  j["mode"] = {{"cue", c.mode.cue},
               {"reasoning", c.mode.reasoning},
               {"answer_format", to_string(c.mode.answer_format)}};
  j["budget"] = c.budget;
  j["budget_suffix"] = c.budget_suffix;
  j["endpoint"] = c.backend.endpoint;
  j["credential_env"] = c.backend.credential_env;  // name only, never the value
  j["timeout_s"] = c.backend.timeout_s;
  j["max_in_flight"] = c.backend.max_in_flight;
  j["model"] = c.model;
  j["max_tokens"] = c.max_tokens;
  if (c.temperature) j["temperature"] = *c.temperature;
  if (c.top_p) j["top_p"] = *c.top_p;
  j["extractor"] = c.extractor == ExtractorKind::none
                       ? "none"
                       : (c.extractor == ExtractorKind::identity ? "identity" : "llm");
  j["extractor_endpoint"] = c.extractor_endpoint;
  j["extractor_model"] = c.extractor_model;
  j["sample_cap"] = c.sample_cap;
  j["seed"] = c.seed;
  return j;
}

EvalSummary cmd_eval(const EvalConfig& config, std::ostream& console) {
  if (!is_valid(config.mode)) {
    throw UsageError("invalid prompt mode: cue without reasoning is not an evaluated condition");
  }
  if (config.budget < 1) throw UsageError("--budget is required and must be at least 1");
  if (config.extractor == ExtractorKind::llm && config.extractor_endpoint.empty()) {
    throw UsageError("--extractor llm requires --extractor-endpoint");
  }
  ensure_out_dir(config.out_dir);

  const json cfg_json = eval_config_json(config);
  EvalSummary summary;
  summary.config_hash = config_hash(cfg_json);
  summary.run_id = run_id_for(summary.config_hash, config.seed);

  fs::path log_path = fs::path(config.out_dir) / ("eval-" + summary.run_id + ".jsonl");
  fs::path manifest_path = fs::path(config.out_dir) / ("run-" + summary.run_id + ".json");
  summary.log_path = log_path.string();
  if (fs::exists(log_path) && !config.force) {
    throw UsageError("eval log for this config hash already exists (" + log_path.string() +
                     "); pass --force to overwrite");
  }

  std::vector<QAExample> examples = load_dataset(config.dataset_path, config.dataset, config.split);
  if (config.sample_cap > 0 && examples.size() > static_cast<size_t>(config.sample_cap)) {
    examples.resize(static_cast<size_t>(config.sample_cap));
  }

  DecodingDefaults defaults = decoding_defaults(config.model);
  std::vector<GenerationRequest> requests;
  requests.reserve(examples.size());
  for (size_t i = 0; i < examples.size(); ++i) {
    GenerationRequest req;
    req.prompt = render_prompt(examples[i], config.mode);
    req.model = config.model;
    req.temperature = config.temperature.value_or(defaults.temperature);
    req.top_p = config.top_p.value_or(defaults.top_p);
    req.max_tokens = config.max_tokens;
    req.idempotency_key =
        fnv1a64_hex(summary.run_id + ":" + examples[i].id + ":" + std::to_string(i));
    requests.push_back(std::move(req));
  }

  console << "dispatching " << requests.size() << " request(s) to " << config.backend.endpoint
          << " (in-flight cap " << config.backend.max_in_flight << ")\n";
  std::vector<GenerationOutcome> outcomes = generate_batch(requests, config.backend);

  Extractor extractor;
  if (config.extractor == ExtractorKind::identity) {
    extractor = identity_extractor();
  } else if (config.extractor == ExtractorKind::llm) {
    BackendConfig ex_backend = config.backend;
    ex_backend.endpoint = config.extractor_endpoint;
    extractor = llm_extractor(ex_backend, config.extractor_model);
  }

  std::ofstream log_out(log_path);
  if (!log_out) throw DataError("cannot open eval log for writing: " + log_path.string());

  std::string first_error;
  for (size_t i = 0; i < examples.size(); ++i) {
    if (!outcomes[i].response) {
      if (first_error.empty()) first_error = outcomes[i].error;
      continue;
    }
    const GenerationResponse& resp = *outcomes[i].response;
    EvalRecord rec;
    rec.run_id = summary.run_id;
    rec.config_hash = summary.config_hash;
    rec.example_id = examples[i].id;
    rec.dataset = examples[i].dataset;
    rec.mode = config.mode;
    rec.model = config.model;
    rec.raw_text = resp.answer_text;
    rec.reasoning_text = resp.reasoning_text;
    rec.reasoning_token_count = resp.reasoning_token_count;
    rec.token_count_source = resp.token_count_source;
    rec.latency_ms = outcomes[i].latency_ms;

    if (resp.reasoning_text && rec.reasoning_token_count > config.budget) {
      BudgetForceResult forced =
          apply_budget_forcing_text(*resp.reasoning_text, config.budget, config.budget_suffix);
      rec.reasoning_text = forced.text;
      rec.reasoning_token_count = forced.token_count;
      rec.budget_forced = forced.forced;
    }

    if (config.mode.answer_format == AnswerFormat::tags) {
      Prediction pred = make_prediction(rec.raw_text);
      pred.reasoning_text = rec.reasoning_text;
      pred.reasoning_token_count = rec.reasoning_token_count;
      try {
        rec.flags = score_prediction(pred, examples[i].answers,
                                     extractor ? &extractor : nullptr);
      } catch (const std::exception& e) {
        // extractor failure: keep the record, mark Ex-Recall unscored
        rec.flags = score_prediction(pred, examples[i].answers, nullptr);
        rec.ex_recall_error = e.what();
      }
      rec.answer_span = pred.answer_span;
      rec.extracted_span = pred.extracted_span;
      rec.reward = total_reward(pred, examples[i].answers);
    } else {
      auto boxed = last_boxed_group(rec.raw_text);
      rec.answer_span = boxed.value_or("");
      rec.flags.format_ok = boxed.has_value();
      bool correct = false;
      for (const auto& ref : examples[i].answers) {
        if (boxed_accuracy(rec.raw_text, ref)) {
          correct = true;
          break;
        }
      }
      rec.flags.em = correct;
      rec.flags.recall = correct;
      rec.reward = reward_from_parts(correct ? 1.0 : 0.0, rec.flags.format_ok);
    }

    append_record(log_out, rec);
    ++summary.n_records;
    if (rec.flags.em) ++summary.em_count;
    if (rec.flags.recall) ++summary.recall_count;
    if (rec.flags.ex_recall) {
      ++summary.ex_recall_scored;
      if (*rec.flags.ex_recall) ++summary.ex_recall_count;
    } else if (rec.ex_recall_error) {
      ++summary.unscored;
    }
  }
  log_out.flush();

  summary.complete = first_error.empty();
  if (summary.n_records > 0) {
    summary.em_pct = 100.0 * summary.em_count / summary.n_records;
  }
  if (summary.ex_recall_scored > 0) {
    summary.ex_recall_pct = 100.0 * summary.ex_recall_count / summary.ex_recall_scored;
  }

  json manifest;
  manifest["command"] = "eval";
  manifest["config"] = cfg_json;
  manifest["config_hash"] = summary.config_hash;
  manifest["run_id"] = summary.run_id;
  manifest["seed"] = config.seed;
  manifest["status"] = summary.complete ? "complete" : "incomplete";
  manifest["n_records"] = summary.n_records;
  manifest["em_pct"] = round1(summary.em_pct);
  if (summary.ex_recall_pct) manifest["ex_recall_pct"] = round1(*summary.ex_recall_pct);
  manifest["unscored_ex_recall"] = summary.unscored;
  write_manifest(manifest_path.string(), manifest);

  console << "run " << summary.run_id << ": " << summary.n_records << " record(s)\n";
  console << "EM " << pct1(summary.em_pct);
  if (summary.ex_recall_pct) console << "  Ex-Recall " << pct1(*summary.ex_recall_pct);
  if (summary.unscored > 0) console << "  (" << summary.unscored << " unscored)";
  console << "\n";

  if (!summary.complete) {
    throw BackendError("generation failed for at least one example; partial log flushed to " +
                       log_path.string() + " and marked incomplete (first error: " + first_error +
                       ")");
  }
  return summary;
}

json train_config_json(const TrainToyConfig& c) {
  json j;
  j["command"] = "train-toy";
  j["num_facts"] = c.num_facts;
  j["answer_vocab"] = c.answer_vocab;
  j["reasoning_vocab"] = c.reasoning_vocab;
  j["train_fraction"] = c.train_fraction;
  j["baseline"] = c.baseline;
  j["group_size"] = c.train.group_size;
  j["groups_per_batch"] = c.train.groups_per_batch;
  j["learning_rate"] = c.train.learning_rate;
  j["kl_coefficient"] = c.train.kl_coefficient;
  j["max_steps"] = c.train.max_steps;
  j["eval_every"] = c.train.eval_every;
  j["mode"] = {{"cue", c.train.mode.cue},
               {"reasoning", c.train.mode.reasoning},
               {"answer_format", to_string(c.train.mode.answer_format)}};
  if (c.train.ratio_clip) j["ratio_clip"] = *c.train.ratio_clip;
  j["rsft_sample_budget"] = c.train.rsft_sample_budget;
  j["rsft_filter_threshold"] = c.train.rsft_filter_threshold;
  j["rsft_epochs"] = c.train.rsft_epochs;
  j["rsft_minibatch"] = c.train.rsft_minibatch;
  j["rsft_learning_rate"] = c.train.rsft_learning_rate;
  j["sft_steps"] = c.train.sft_steps;
  j["sft_learning_rate"] = c.train.sft_learning_rate;
  j["seed"] = c.seed;
  return j;
}

TrainSummary cmd_train_toy(const TrainToyConfig& config, std::ostream& console) {
  if (config.baseline != "rlvr" && config.baseline != "reasoning-sft" &&
      config.baseline != "sft") {
    throw UsageError("unknown baseline: " + config.baseline);
  }
  ensure_out_dir(config.out_dir);

  TrainConfig train = config.train;
  train.seed = config.seed;
  train.validate();

  const json cfg_json = train_config_json(config);
  TrainSummary summary;
  summary.config_hash = config_hash(cfg_json);
  summary.run_id = run_id_for(summary.config_hash, config.seed);

  fs::path out(config.out_dir);
  fs::path log_path = out / ("train-" + summary.run_id + ".jsonl");
  fs::path final_ckpt = out / ("policy-" + summary.run_id + "-final.ckpt");
  fs::path last_ckpt = out / ("policy-" + summary.run_id + "-last.ckpt");
  fs::path dataset_path = out / "world.jsonl";
  summary.log_path = log_path.string();
  summary.checkpoint_path = final_ckpt.string();
  if (fs::exists(log_path) && !config.force) {
    throw UsageError("training log for this config hash already exists (" + log_path.string() +
                     "); pass --force to overwrite");
  }

  auto [world, examples] = generate_synthetic_world(config.num_facts, config.answer_vocab,
                                                    config.reasoning_vocab, config.seed);
  write_dataset(dataset_path.string(), examples);
  write_world_manifest((out / "world_manifest.json").string(), world, dataset_path.string());

  // reporting split mirroring the train/validation protocol
  auto [train_split, val_split] = split_train_val(examples, config.seed, config.train_fraction);
  auto indices_of = [&](const std::vector<QAExample>& subset) {
    std::vector<int> idx;
    idx.reserve(subset.size());
    for (const auto& ex : subset) {
      auto it = std::find(world.questions.begin(), world.questions.end(), ex.id);
      idx.push_back(static_cast<int>(it - world.questions.begin()));
    }
    std::sort(idx.begin(), idx.end());
    return idx;
  };

  ToyPolicyParams params = ToyPolicyParams::init_random(
      config.num_facts, config.reasoning_vocab, config.answer_vocab, config.seed);

  RlvrOptions options;
  options.train_report = indices_of(train_split);
  options.val_report = indices_of(val_split);
  // The tabular policy cannot generalize across questions, so every question
  // is sampled during training; the split above is a reporting partition.
  options.question_pool.resize(static_cast<size_t>(world.num_facts));
  for (int i = 0; i < world.num_facts; ++i) options.question_pool[static_cast<size_t>(i)] = i;
  options.on_eval = [&](int, const ToyPolicyParams& p, const StepStats&) {
    save_checkpoint(last_ckpt.string(), p);
  };

  summary.initial_em = exact_expected_em(params, world, options.question_pool, train.mode);
  console << "initial exact EM " << pct1(100.0 * summary.initial_em) << " over "
          << world.num_facts << " question(s)\n";

  TrajectoryScorer scorer = tag_format_scorer();
  TrainingLog log;
  std::string status = "complete";
  try {
    if (config.baseline == "rlvr") {
      log = run_rlvr(train, world, params, scorer, options);
    } else if (config.baseline == "reasoning-sft") {
      RsftResult rsft = run_reasoning_sft(train, world, params, scorer, options.question_pool);
      log = std::move(rsft.log);
      console << "kept " << rsft.kept << " of " << rsft.sampled
              << " sampled trajectory(ies); selected epoch " << rsft.selected_epoch << "\n";
    } else {
      log = run_sft(train, world, params, options.question_pool);
    }
  } catch (const DataError& e) {
    // divergence: flush the log so far and keep the last periodic checkpoint
    std::ofstream log_out(log_path);
    log.append_jsonl(log_out);
    json manifest;
    manifest["command"] = "train-toy";
    manifest["config"] = cfg_json;
    manifest["config_hash"] = summary.config_hash;
    manifest["run_id"] = summary.run_id;
    manifest["status"] = std::string("diverged: ") + e.what();
    write_manifest((out / ("run-" + summary.run_id + ".json")).string(), manifest);
    throw;
  }

  std::ofstream log_out(log_path);
  if (!log_out) throw DataError("cannot open training log for writing: " + log_path.string());
  log.append_jsonl(log_out);
  save_checkpoint(final_ckpt.string(), params);

  const PromptMode report_mode =
      config.baseline == "sft" ? make_prompt_mode(false, false, AnswerFormat::tags) : train.mode;
  summary.steps = static_cast<int>(log.steps.size());
  summary.final_train_em = exact_expected_em(params, world, options.train_report, report_mode);
  if (!options.val_report.empty()) {
    summary.final_val_em = exact_expected_em(params, world, options.val_report, report_mode);
  }

  json manifest;
  manifest["command"] = "train-toy";
  manifest["config"] = cfg_json;
  manifest["config_hash"] = summary.config_hash;
  manifest["run_id"] = summary.run_id;
  manifest["seed"] = config.seed;
  manifest["status"] = status;
  manifest["steps"] = summary.steps;
  manifest["initial_em"] = summary.initial_em;
  manifest["final_train_em"] = summary.final_train_em;
  if (summary.final_val_em) manifest["final_val_em"] = *summary.final_val_em;
  manifest["checkpoint"] = summary.checkpoint_path;
  write_manifest((out / ("run-" + summary.run_id + ".json")).string(), manifest);

  console << "finished " << summary.steps << " step(s): train EM "
          << pct1(100.0 * summary.final_train_em);
  if (summary.final_val_em) console << ", val EM " << pct1(100.0 * *summary.final_val_em);
  console << "\ncheckpoint: " << summary.checkpoint_path << "\n";
  return summary;
}

namespace {

struct MetricPairing {
  std::vector<std::pair<std::string, bool>> a;
  std::vector<std::pair<std::string, bool>> b;
  long long excluded = 0;
};

// Builds aligned outcome lists for one metric. Callers verify the id sets
// match beforehand; pairs where either run left the metric unscored are
// dropped and counted, never treated as incorrect.
MetricPairing collect_metric(const std::vector<EvalRecord>& run_a,
                             const std::vector<EvalRecord>& run_b, const std::string& metric) {
  auto value_of = [&](const EvalRecord& r) -> std::optional<bool> {
    if (metric == "em") return r.flags.em;
    if (metric == "recall") return r.flags.recall;
    return r.flags.ex_recall;
  };
  std::map<std::string, std::optional<bool>> b_by_id;
  for (const auto& r : run_b) b_by_id[r.example_id] = value_of(r);

  MetricPairing out;
  for (const auto& r : run_a) {
    auto va = value_of(r);
    auto it = b_by_id.find(r.example_id);
    if (it == b_by_id.end()) continue;
    if (!va || !it->second) {
      ++out.excluded;
      continue;
    }
    out.a.emplace_back(r.example_id, *va);
    out.b.emplace_back(r.example_id, *it->second);
  }
  return out;
}

}  // namespace

StatsReport cmd_stats(const StatsConfig& config, std::ostream& console) {
  std::vector<EvalRecord> run_a = load_eval_log(config.log_a);
  std::vector<EvalRecord> run_b = load_eval_log(config.log_b);

  // id sets must match exactly before any metric filtering
  {
    std::vector<std::pair<std::string, bool>> ids_a, ids_b;
    for (const auto& r : run_a) ids_a.emplace_back(r.example_id, true);
    for (const auto& r : run_b) ids_b.emplace_back(r.example_id, true);
    pair_outcomes(ids_a, ids_b);
  }

  StatsReport report;
  for (const std::string& metric : {std::string("em"), std::string("ex_recall")}) {
    MetricPairing pairing = collect_metric(run_a, run_b, metric);
    if (pairing.a.empty() || pairing.a.size() != pairing.b.size()) {
      if (metric == "em") throw DataError("no scorable em pairs between the two runs");
      continue;  // ex_recall absent from one run entirely
    }
    MetricComparison cmp;
    cmp.metric = metric;
    cmp.counts = pair_outcomes(pairing.a, pairing.b);
    cmp.excluded_pairs = pairing.excluded;
    cmp.p_exact = mcnemar_test(cmp.counts, McNemarMethod::exact);
    if (cmp.counts.b + cmp.counts.c >= 1) {
      cmp.p_chi2_cc = mcnemar_test(cmp.counts, McNemarMethod::chi2_cc);
    }
    cmp.significant = cmp.p_exact < kSignificanceLevel;
    report.metrics.push_back(cmp);
  }

  char line[256];
  console << "metric      n      a      b      c      d    p_exact    p_chi2_cc  sig\n";
  for (const auto& m : report.metrics) {
    std::string chi2 = m.p_chi2_cc ? len2(*m.p_chi2_cc) : std::string("--");
    std::snprintf(line, sizeof(line), "%-10s %5lld %6lld %6lld %6lld %6lld  %9.6f  %9s  %s\n",
                  m.metric.c_str(), m.counts.total(), m.counts.a, m.counts.b, m.counts.c,
                  m.counts.d, m.p_exact, chi2.c_str(), m.significant ? "*" : "");
    console << line;
    if (m.excluded_pairs > 0) {
      console << "  (" << m.excluded_pairs << " pair(s) excluded: unscored on one side)\n";
    }
  }

  if (config.json_out) {
    std::ofstream out(*config.json_out);
    if (!out) throw DataError("cannot write stats JSON: " + *config.json_out);
    out << stats_report_json(report).dump(2) << "\n";
  }
  return report;
}

json stats_report_json(const StatsReport& report) {
  json j;
  j["metrics"] = json::array();
  for (const auto& m : report.metrics) {
    json e;
    e["metric"] = m.metric;
    e["n"] = m.counts.total();
    e["a"] = m.counts.a;
    e["b"] = m.counts.b;
    e["c"] = m.counts.c;
    e["d"] = m.counts.d;
    e["p_exact"] = m.p_exact;
    if (m.p_chi2_cc) e["p_chi2_cc"] = *m.p_chi2_cc;
    e["significant"] = m.significant;
    e["excluded_pairs"] = m.excluded_pairs;
    j["metrics"].push_back(e);
  }
  return j;
}

std::vector<ReportRow> cmd_report(const ReportConfig& config, std::ostream& console) {
  if (config.log_paths.empty()) throw UsageError("report needs at least one eval log");

  std::vector<ReportRow> rows;
  for (const auto& path : config.log_paths) {
    std::vector<EvalRecord> records = load_eval_log(path);
    std::map<Dataset, std::vector<const EvalRecord*>> by_dataset;
    for (const auto& r : records) by_dataset[r.dataset].push_back(&r);

    for (const auto& [dataset, group] : by_dataset) {
      ReportRow row;
      row.run_id = group.front()->run_id.empty() ? fs::path(path).stem().string()
                                                 : group.front()->run_id;
      row.dataset = dataset;
      row.n = static_cast<long long>(group.size());
      long long em = 0, exr = 0, exr_scored = 0;
      std::vector<LengthObs> lengths;
      for (const auto* r : group) {
        if (r->flags.em) ++em;
        if (r->flags.ex_recall) {
          ++exr_scored;
          if (*r->flags.ex_recall) ++exr;
        }
        lengths.push_back({r->reasoning_token_count, r->flags.recall});
      }
      row.em_pct = round1(100.0 * static_cast<double>(em) / static_cast<double>(row.n));
      if (exr_scored > 0) {
        row.ex_recall_pct =
            round1(100.0 * static_cast<double>(exr) / static_cast<double>(exr_scored));
      }
      LengthStats ls = length_stats(lengths);
      row.avg_len = round2(ls.avg);
      if (ls.avg_recalled) row.avg_len_recalled = round2(*ls.avg_recalled);
      if (ls.avg_non_recalled) row.avg_len_non_recalled = round2(*ls.avg_non_recalled);
      rows.push_back(std::move(row));
    }
  }
  if (rows.empty()) throw DataError("no scorable records in the given logs");

  char line[320];
  console << "run               dataset        n     em  ex_recall       avg  recalled  "
             "non_recalled\n";
  for (const auto& row : rows) {
    std::string exr = row.ex_recall_pct ? pct1(*row.ex_recall_pct) : std::string("--");
    std::string rec = row.avg_len_recalled ? len2(*row.avg_len_recalled) : std::string("--");
    std::string non =
        row.avg_len_non_recalled ? len2(*row.avg_len_non_recalled) : std::string("--");
    std::snprintf(line, sizeof(line), "%-16s  %-10s %5lld  %5s  %9s  %8s  %8s  %12s\n",
                  row.run_id.c_str(), to_string(row.dataset).c_str(), row.n,
                  pct1(row.em_pct).c_str(), exr.c_str(), len2(row.avg_len).c_str(), rec.c_str(),
                  non.c_str());
    console << line;
  }

  if (config.json_out) {
    std::ofstream out(*config.json_out);
    if (!out) throw DataError("cannot write report JSON: " + *config.json_out);
    out << report_rows_json(rows).dump(2) << "\n";
  }
  return rows;
}

json report_rows_json(const std::vector<ReportRow>& rows) {
  json j;
  j["rows"] = json::array();
  for (const auto& row : rows) {
    json e;
    e["run_id"] = row.run_id;
    e["dataset"] = to_string(row.dataset);
    e["n"] = row.n;
    e["em_pct"] = row.em_pct;
    if (row.ex_recall_pct) e["ex_recall_pct"] = *row.ex_recall_pct;
    e["avg_len"] = row.avg_len;
    if (row.avg_len_recalled) e["avg_len_recalled"] = *row.avg_len_recalled;
    if (row.avg_len_non_recalled) e["avg_len_non_recalled"] = *row.avg_len_non_recalled;
    j["rows"].push_back(e);
  }
  return j;
}

}  // namespace rlvr
