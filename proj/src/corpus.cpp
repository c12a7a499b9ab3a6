#include "rlvr/corpus.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "rlvr/common.hpp"

namespace rlvr {

using nlohmann::json;

std::string to_string(Dataset d) {
  switch (d) {
    case Dataset::triviaqa: return "triviaqa";
    case Dataset::nq: return "nq";
    case Dataset::hotpotqa: return "hotpotqa";
    case Dataset::simpleqa: return "simpleqa";
    case Dataset::strategyqa: return "strategyqa";
    case Dataset::math: return "math";
    case Dataset::synthetic: return "synthetic";
  }
  return "unknown";
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "unknown";
}

Dataset dataset_from_string(const std::string& s) {
  for (Dataset d : {Dataset::triviaqa, Dataset::nq, Dataset::hotpotqa,
                    Dataset::simpleqa, Dataset::strategyqa, Dataset::math,
                    Dataset::synthetic}) {
    if (to_string(d) == s) return d;
  }
  throw DataError("unknown dataset tag: " + s);
}

Split split_from_string(const std::string& s) {
  for (Split sp : {Split::train, Split::val, Split::test}) {
    if (to_string(sp) == s) return sp;
  }
  throw DataError("unknown split tag: " + s);
}

namespace {

[[noreturn]] void line_error(const std::string& path, size_t line, const std::string& what) {
  std::ostringstream os;
  os << path << ":" << line << ": " << what;
  throw DataError(os.str());
}

std::string answer_from_json(const json& v, Dataset dataset, const std::string& path,
                             size_t line) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) {
    if (dataset != Dataset::strategyqa) {
      line_error(path, line, "boolean answer outside strategyqa");
    }
    return v.get<bool>() ? "yes" : "no";
  }
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number()) return format_double(v.get<double>());
  line_error(path, line, "answer entry is not a string");
}

}  // namespace

std::vector<QAExample> load_dataset(const std::string& path, Dataset dataset, Split split) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path);

  std::vector<QAExample> out;
  std::set<std::string> seen_ids;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      line_error(path, lineno, std::string("malformed JSON: ") + e.what());
    }
    if (!rec.is_object()) line_error(path, lineno, "record is not an object");
    if (!rec.contains("question") || !rec["question"].is_string()) {
      line_error(path, lineno, "missing question field");
    }
    QAExample ex;
    ex.dataset = dataset;
    ex.split = split;
    ex.question = rec["question"].get<std::string>();
    if (trim(ex.question).empty()) line_error(path, lineno, "empty question");

    if (rec.contains("dataset")) {
      if (!rec["dataset"].is_string()) line_error(path, lineno, "dataset field is not a string");
      Dataset tagged = dataset_from_string(rec["dataset"].get<std::string>());
      if (tagged != dataset) {
        line_error(path, lineno, "record dataset '" + to_string(tagged) +
                                     "' does not match requested '" + to_string(dataset) + "'");
      }
    }

    if (!rec.contains("answers") || !rec["answers"].is_array() || rec["answers"].empty()) {
      line_error(path, lineno, "answers must be a non-empty array");
    }
    for (const auto& a : rec["answers"]) {
      std::string s = answer_from_json(a, dataset, path, lineno);
      if (trim(s).empty()) line_error(path, lineno, "empty answer string");
      ex.answers.push_back(std::move(s));
    }

    if (rec.contains("id") && rec["id"].is_string() && !rec["id"].get<std::string>().empty()) {
      ex.id = rec["id"].get<std::string>();
    } else {
      ex.id = to_string(dataset) + "-" + std::to_string(lineno);
    }
    if (!seen_ids.insert(ex.id).second) {
      line_error(path, lineno, "duplicate example id: " + ex.id);
    }
    out.push_back(std::move(ex));
  }
  if (out.empty()) throw DataError("dataset file is empty: " + path);
  return out;
}

void write_dataset(const std::string& path, const std::vector<QAExample>& examples) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  for (const auto& ex : examples) {
    json rec;
    rec["id"] = ex.id;
    rec["question"] = ex.question;
    rec["answers"] = ex.answers;
    rec["dataset"] = to_string(ex.dataset);
    out << rec.dump() << "\n";
  }
}

std::pair<std::vector<QAExample>, std::vector<QAExample>> split_train_val(
    const std::vector<QAExample>& examples, std::uint64_t seed, double train_fraction) {
  if (examples.size() < 2) throw DataError("need at least 2 examples to split");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw UsageError("train_fraction must be in (0, 1)");
  }
  const size_t n = examples.size();
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(derive_seed(seed, 1));
  for (size_t i = n - 1; i > 0; --i) {
    size_t j = static_cast<size_t>(rng() % (i + 1));
    std::swap(order[i], order[j]);
  }
  const size_t n_train = static_cast<size_t>(std::floor(static_cast<double>(n) * train_fraction));
  std::vector<QAExample> train, val;
  train.reserve(n_train);
  val.reserve(n - n_train);
  for (size_t i = 0; i < n; ++i) {
    QAExample ex = examples[order[i]];
    if (i < n_train) {
      ex.split = Split::train;
      train.push_back(std::move(ex));
    } else {
      ex.split = Split::val;
      val.push_back(std::move(ex));
    }
  }
  return {std::move(train), std::move(val)};
}

std::string canonical_answer_string(int token, int answer_vocab_size) {
  int width = 1;
  for (int v = answer_vocab_size - 1; v >= 10; v /= 10) ++width;
  std::string digits = std::to_string(token);
  std::string out = "ans";
  out.append(static_cast<size_t>(width) - digits.size(), '0');
  out += digits;
  return out;
}

std::pair<SyntheticWorld, std::vector<QAExample>> generate_synthetic_world(
    int num_facts, int answer_vocab, int reasoning_vocab, std::uint64_t seed) {
  if (num_facts <= 0) throw UsageError("num_facts must be positive");
  if (answer_vocab < 2) throw UsageError("answer_vocab must be at least 2");
  if (reasoning_vocab <= 0) throw UsageError("reasoning_vocab must be positive");

  SyntheticWorld world;
  world.num_facts = num_facts;
  world.answer_vocab_size = answer_vocab;
  world.reasoning_vocab_size = reasoning_vocab;
  world.seed = seed;

  std::mt19937_64 rng(derive_seed(seed, 2));
  // The first min(num_facts, answer_vocab) facts take distinct tokens (a
  // seeded permutation); the remainder are uniform draws. Guarantees the
  // gold answers cover the vocabulary as far as the fact count allows.
  std::vector<int> perm(static_cast<size_t>(answer_vocab));
  for (int i = 0; i < answer_vocab; ++i) perm[static_cast<size_t>(i)] = i;
  for (size_t i = perm.size() - 1; i > 0; --i) {
    size_t j = static_cast<size_t>(rng() % (i + 1));
    std::swap(perm[i], perm[j]);
  }

  std::vector<QAExample> examples;
  examples.reserve(static_cast<size_t>(num_facts));
  for (int i = 0; i < num_facts; ++i) {
    int gold = (i < answer_vocab) ? perm[static_cast<size_t>(i)]
                                  : static_cast<int>(rng() % static_cast<std::uint64_t>(answer_vocab));
    std::string id = "synthetic-" + std::to_string(i);
    world.questions.push_back(id);
    world.gold_answer[id] = gold;

    QAExample ex;
    ex.id = id;
    ex.question = "What is the stored answer for synthetic fact " + std::to_string(i) + "?";
    ex.answers = {canonical_answer_string(gold, answer_vocab)};
    ex.dataset = Dataset::synthetic;
    ex.split = Split::train;
    examples.push_back(std::move(ex));
  }
  return {std::move(world), std::move(examples)};
}

void write_world_manifest(const std::string& path, const SyntheticWorld& world,
                          const std::string& dataset_path) {
  json m;
  m["seed"] = world.seed;
  m["num_facts"] = world.num_facts;
  m["answer_vocab_size"] = world.answer_vocab_size;
  m["reasoning_vocab_size"] = world.reasoning_vocab_size;
  m["num_examples"] = world.questions.size();
  m["dataset_path"] = dataset_path;
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << m.dump(2) << "\n";
}

}  // namespace rlvr
