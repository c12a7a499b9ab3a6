#include "rlvr/metrics.hpp"

#include <array>

#include "rlvr/common.hpp"

namespace rlvr {

namespace {

constexpr const char* kOpenTag = "<answer>";
constexpr const char* kCloseTag = "</answer>";

bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_ascii_punct(char c) {
  unsigned char u = static_cast<unsigned char>(c);
  return (u >= '!' && u <= '/') || (u >= ':' && u <= '@') || (u >= '[' && u <= '`') ||
         (u >= '{' && u <= '~');
}

char lower_ascii(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

bool is_article(std::string_view w) { return w == "a" || w == "an" || w == "the"; }

}  // namespace

std::pair<std::string, bool> parse_answer_tags(const std::string& raw_text) {
  const size_t open_len = 8;
  const size_t close_len = 9;
  std::string last;
  bool found = false;
  size_t pos = 0;
  while (true) {
    size_t open = raw_text.find(kOpenTag, pos);
    if (open == std::string::npos) break;
    size_t close = raw_text.find(kCloseTag, open + open_len);
    if (close == std::string::npos) break;
    // take the innermost open before this close
    size_t inner = raw_text.find(kOpenTag, open + open_len);
    while (inner != std::string::npos && inner < close) {
      open = inner;
      inner = raw_text.find(kOpenTag, open + open_len);
    }
    std::string content = trim(raw_text.substr(open + open_len, close - open - open_len));
    if (!content.empty()) {
      last = std::move(content);
      found = true;
    }
    pos = close + close_len;
  }
  if (!found) return {std::string(), false};
  return {std::move(last), true};
}

Prediction make_prediction(const std::string& raw_text) {
  Prediction p;
  p.raw_text = raw_text;
  auto [span, ok] = parse_answer_tags(raw_text);
  p.answer_span = std::move(span);
  p.format_ok = ok;
  return p;
}

std::string normalize_answer(const std::string& text) {
  std::string depunct;
  depunct.reserve(text.size());
  for (char c : text) {
    if (is_ascii_punct(c)) continue;
    depunct.push_back(lower_ascii(c));
  }
  std::string out;
  out.reserve(depunct.size());
  size_t i = 0;
  while (i < depunct.size()) {
    while (i < depunct.size() && is_ascii_space(depunct[i])) ++i;
    size_t j = i;
    while (j < depunct.size() && !is_ascii_space(depunct[j])) ++j;
    if (j > i) {
      std::string_view word(depunct.data() + i, j - i);
      if (!is_article(word)) {
        if (!out.empty()) out.push_back(' ');
        out.append(word);
      }
    }
    i = j;
  }
  return out;
}

bool exact_match(const std::string& pred_span, const std::vector<std::string>& references) {
  if (references.empty()) throw DataError("exact_match: empty reference list");
  std::string p = normalize_answer(pred_span);
  if (p.empty()) return false;
  for (const auto& r : references) {
    if (p == normalize_answer(r)) return true;
  }
  return false;
}

bool contains_recall(const std::string& pred_text, const std::vector<std::string>& references) {
  if (references.empty()) throw DataError("contains_recall: empty reference list");
  std::string p = normalize_answer(pred_text);
  for (const auto& r : references) {
    std::string ref = normalize_answer(r);
    if (ref.empty()) continue;
    if (p.find(ref) != std::string::npos) return true;
  }
  return false;
}

Extractor identity_extractor() {
  return [](const std::string& text) { return text; };
}

bool ex_recall(Prediction& pred, const std::vector<std::string>& references,
               const Extractor& extractor) {
  if (!extractor) throw DataError("ex_recall: no extractor configured");
  const std::string& input = pred.format_ok ? pred.answer_span : pred.raw_text;
  pred.extracted_span = trim(extractor(input));
  return contains_recall(*pred.extracted_span, references);
}

std::optional<std::string> last_boxed_group(const std::string& raw_text) {
  const std::string marker = "\\boxed{";
  size_t search_end = raw_text.size();
  while (true) {
    size_t pos = raw_text.rfind(marker, search_end == 0 ? 0 : search_end - 1);
    if (pos == std::string::npos) return std::nullopt;
    size_t i = pos + marker.size();
    int depth = 1;
    std::string content;
    for (; i < raw_text.size(); ++i) {
      char c = raw_text[i];
      if (c == '{') ++depth;
      if (c == '}') {
        --depth;
        if (depth == 0) return content;
      }
      content.push_back(c);
    }
    // unbalanced; try an earlier occurrence
    if (pos == 0) return std::nullopt;
    search_end = pos;
  }
}

std::string normalize_math(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    if (is_ascii_space(c)) continue;
    out.push_back(c);
  }
  size_t b = 0;
  size_t e = out.size();
  while (b < e && out[b] == '$') ++b;
  while (e > b && out[e - 1] == '$') --e;
  if (b < e && out[b] == '+') ++b;
  return out.substr(b, e - b);
}

bool boxed_accuracy(const std::string& raw_text, const std::string& reference) {
  auto boxed = last_boxed_group(raw_text);
  if (!boxed) return false;
  std::string got = normalize_math(*boxed);
  std::string want = normalize_math(reference);
  if (got.empty() || want.empty()) return false;
  return got == want;
}

ScoreFlags score_prediction(Prediction& pred, const std::vector<std::string>& references,
                            const Extractor* extractor) {
  ScoreFlags flags;
  flags.format_ok = pred.format_ok;
  flags.em = exact_match(pred.answer_span, references);
  flags.recall = flags.em || contains_recall(pred.raw_text, references);
  if (extractor != nullptr && *extractor) {
    flags.ex_recall = ex_recall(pred, references, *extractor);
  }
  return flags;
}

}  // namespace rlvr
