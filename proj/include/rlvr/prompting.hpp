#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rlvr/corpus.hpp"

namespace rlvr {

enum class AnswerFormat { tags, boxed };

std::string to_string(AnswerFormat f);
AnswerFormat answer_format_from_string(const std::string& s);

// Experimental condition triple. The (cue, no-reasoning) cell does not
// exist; constructing it is an error.
struct PromptMode {
  bool cue = false;
  bool reasoning = true;
  AnswerFormat answer_format = AnswerFormat::tags;
};

bool is_valid(const PromptMode& mode);
PromptMode make_prompt_mode(bool cue, bool reasoning, AnswerFormat format);

struct RenderedPrompt {
  std::string instruction;
  std::string user_question;
  // Non-empty exactly when the reasoning channel is forced empty.
  std::optional<std::string> forced_prefix;
};

// Prefix injected into the model's reasoning channel to force a direct
// answer. Backend adapters may translate this into model-specific syntax.
inline constexpr const char* kEmptyThinkPrefix = "<think>\n\n</think>";

// Suffix appended after truncating an over-long reasoning trace.
inline constexpr const char* kDefaultBudgetSuffix = "Final answer:";

// Verbatim instruction template for a (cue, answer format) cell. These are
// loaded from the text assets under assets/prompts/ at build time.
const std::string& prompt_template(bool cue, AnswerFormat format);

const std::string& extraction_template();
std::string render_extraction_prompt(const std::string& answer);

RenderedPrompt render_prompt(const QAExample& example, const PromptMode& mode);

// Attaches the empty-reasoning prefix. Idempotent.
RenderedPrompt force_empty_reasoning(RenderedPrompt prompt);

// Truncates a trace to `budget` tokens and appends the suffix tokens when
// over budget; traces within budget pass through unchanged.
std::vector<std::string> apply_budget_forcing(std::vector<std::string> trace, int budget,
                                              const std::string& forced_suffix);

struct BudgetForceResult {
  std::string text;
  int token_count = 0;  // trace tokens only, never above the budget
  bool forced = false;
};

// Whitespace-token variant for free-text reasoning traces.
BudgetForceResult apply_budget_forcing_text(const std::string& reasoning_text, int budget,
                                            const std::string& forced_suffix);

}  // namespace rlvr
