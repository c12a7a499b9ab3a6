#include "rlvr/prompting.hpp"

#include "rlvr/common.hpp"
#include "rlvr/prompt_assets.hpp"

namespace rlvr {

std::string to_string(AnswerFormat f) {
  return f == AnswerFormat::tags ? "tags" : "boxed";
}

AnswerFormat answer_format_from_string(const std::string& s) {
  if (s == "tags") return AnswerFormat::tags;
  if (s == "boxed") return AnswerFormat::boxed;
  throw UsageError("unknown answer format: " + s);
}

bool is_valid(const PromptMode& mode) { return !(mode.cue && !mode.reasoning); }

PromptMode make_prompt_mode(bool cue, bool reasoning, AnswerFormat format) {
  PromptMode mode{cue, reasoning, format};
  if (!is_valid(mode)) {
    throw UsageError("invalid prompt mode: cue without reasoning is not an evaluated condition");
  }
  return mode;
}

const std::string& prompt_template(bool cue, AnswerFormat format) {
  static const std::string qa_base = assets::kQaTagsBase;
  static const std::string qa_cue = assets::kQaTagsCue;
  static const std::string math_base = assets::kMathBoxedBase;
  static const std::string math_cue = assets::kMathBoxedCue;
  if (format == AnswerFormat::tags) return cue ? qa_cue : qa_base;
  return cue ? math_cue : math_base;
}

const std::string& extraction_template() {
  static const std::string t = assets::kExtraction;
  return t;
}

std::string render_extraction_prompt(const std::string& answer) {
  std::string out = extraction_template();
  const std::string placeholder = "{answer}";
  size_t pos = out.find(placeholder);
  if (pos == std::string::npos) {
    throw DataError("extraction template is missing the {answer} placeholder");
  }
  out.replace(pos, placeholder.size(), answer);
  return out;
}

RenderedPrompt render_prompt(const QAExample& example, const PromptMode& mode) {
  if (!is_valid(mode)) {
    throw UsageError("invalid prompt mode: cue without reasoning is not an evaluated condition");
  }
  RenderedPrompt p;
  p.instruction = prompt_template(mode.cue, mode.answer_format);
  p.user_question = example.question;
  if (!mode.reasoning) p.forced_prefix = kEmptyThinkPrefix;
  return p;
}

RenderedPrompt force_empty_reasoning(RenderedPrompt prompt) {
  prompt.forced_prefix = kEmptyThinkPrefix;
  return prompt;
}

std::vector<std::string> apply_budget_forcing(std::vector<std::string> trace, int budget,
                                              const std::string& forced_suffix) {
  if (budget < 1) throw UsageError("budget must be at least 1");
  if (trace.size() <= static_cast<size_t>(budget)) return trace;
  trace.resize(static_cast<size_t>(budget));
  for (auto& tok : split_whitespace(forced_suffix)) trace.push_back(std::move(tok));
  return trace;
}

BudgetForceResult apply_budget_forcing_text(const std::string& reasoning_text, int budget,
                                            const std::string& forced_suffix) {
  std::vector<std::string> tokens = split_whitespace(reasoning_text);
  BudgetForceResult res;
  if (tokens.size() <= static_cast<size_t>(budget)) {
    res.text = reasoning_text;
    res.token_count = static_cast<int>(tokens.size());
    res.forced = false;
    return res;
  }
  std::vector<std::string> out = apply_budget_forcing(std::move(tokens), budget, forced_suffix);
  res.text = join(out, " ");
  res.token_count = budget;  // trace tokens only; the suffix is an answer cue
  res.forced = true;
  return res;
}

}  // namespace rlvr
