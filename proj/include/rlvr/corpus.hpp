#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace rlvr {

enum class Dataset { triviaqa, nq, hotpotqa, simpleqa, strategyqa, math, synthetic };
enum class Split { train, val, test };

std::string to_string(Dataset d);
std::string to_string(Split s);
Dataset dataset_from_string(const std::string& s);  // throws DataError
Split split_from_string(const std::string& s);      // throws DataError

// One closed-book question with its reference answer set.
struct QAExample {
  std::string id;
  std::string question;
  std::vector<std::string> answers;  // non-empty; entries non-empty after trim
  Dataset dataset = Dataset::triviaqa;
  Split split = Split::test;
};

// Reads a JSONL dataset (one record per line: {id, question, answers, dataset}).
// Booleans in the answers array are accepted for strategyqa only and map to
// "yes"/"no". Missing ids are synthesized as "<dataset>-<line>".
std::vector<QAExample> load_dataset(const std::string& path, Dataset dataset,
                                    Split split = Split::test);

void write_dataset(const std::string& path, const std::vector<QAExample>& examples);

// Deterministic seeded 80/20-style partition. Train side gets
// floor(n * train_fraction) examples.
std::pair<std::vector<QAExample>, std::vector<QAExample>> split_train_val(
    const std::vector<QAExample>& examples, std::uint64_t seed, double train_fraction);

// Desk-scale stand-in for a trivia corpus: num_facts questions, each with a
// single gold answer token drawn from a fixed answer vocabulary.
struct SyntheticWorld {
  int num_facts = 0;
  std::vector<std::string> questions;       // question ids, index-aligned
  std::map<std::string, int> gold_answer;   // question id -> answer token
  int answer_vocab_size = 0;
  int reasoning_vocab_size = 0;
  std::uint64_t seed = 0;

  const std::string& question_id(int index) const { return questions.at(index); }
  int gold_token(int index) const { return gold_answer.at(questions.at(index)); }
};

// Canonical surface string for an answer token; fixed-width so distinct
// tokens are never substrings of each other after normalization.
std::string canonical_answer_string(int token, int answer_vocab_size);

std::pair<SyntheticWorld, std::vector<QAExample>> generate_synthetic_world(
    int num_facts, int answer_vocab, int reasoning_vocab, std::uint64_t seed);

// Reproducibility manifest written beside a generated dataset.
void write_world_manifest(const std::string& path, const SyntheticWorld& world,
                          const std::string& dataset_path);

}  // namespace rlvr
