#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace rlvr {

// One scored model output. answer_span is non-empty exactly when a
// well-formed, non-empty <answer></answer> pair was found (format_ok).
struct Prediction {
  std::string raw_text;
  std::string answer_span;
  std::optional<std::string> extracted_span;
  std::optional<std::string> reasoning_text;
  int reasoning_token_count = 0;
  bool format_ok = false;
};

// Returns the trimmed content of the last well-formed <answer>...</answer>
// pair and whether one was found. Pairs whose content trims to empty do not
// count as well-formed.
std::pair<std::string, bool> parse_answer_tags(const std::string& raw_text);

Prediction make_prediction(const std::string& raw_text);

// Open-domain QA normalization: lowercase (ASCII), strip ASCII punctuation,
// drop the articles a/an/the as whole words, collapse whitespace. Total and
// idempotent on arbitrary byte strings; multi-byte UTF-8 passes through.
std::string normalize_answer(const std::string& text);

// True iff the normalized span equals some normalized reference (both
// non-empty after normalization).
bool exact_match(const std::string& pred_span, const std::vector<std::string>& references);

// True iff some normalized reference occurs as a contiguous substring of the
// normalized prediction text. References that normalize to empty are skipped.
bool contains_recall(const std::string& pred_text, const std::vector<std::string>& references);

using Extractor = std::function<std::string(const std::string&)>;

// Rule-based fallback: returns its input unchanged.
Extractor identity_extractor();

// Runs the extractor over the answer span (or the raw text when parsing
// failed), stores the extracted span on the prediction, and checks recall
// against it. Extractor failures propagate; the caller marks the record
// unscored.
bool ex_recall(Prediction& pred, const std::vector<std::string>& references,
               const Extractor& extractor);

// Compares the last brace-balanced \boxed{...} group against the reference
// after stripping whitespace, surrounding '$', and a leading '+'.
bool boxed_accuracy(const std::string& raw_text, const std::string& reference);

// Extraction used by boxed_accuracy, exposed for answer-span logging.
std::optional<std::string> last_boxed_group(const std::string& raw_text);
std::string normalize_math(const std::string& text);

struct ScoreFlags {
  bool em = false;
  bool recall = false;           // em implies recall
  std::optional<bool> ex_recall; // absent when no extractor ran
  bool format_ok = false;
};

// Full tag-format scoring path: EM against the parsed span, recall against
// the raw text, Ex-Recall via the extractor when one is supplied.
ScoreFlags score_prediction(Prediction& pred, const std::vector<std::string>& references,
                            const Extractor* extractor = nullptr);

}  // namespace rlvr
