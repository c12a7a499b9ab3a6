#include "rlvr/reward.hpp"

#include "rlvr/common.hpp"

namespace rlvr {

RewardBreakdown reward_from_parts(double answer, bool format_ok) {
  RewardBreakdown b;
  b.answer_reward = answer;
  b.format_flag = format_ok ? 1 : 0;
  b.total = answer + 0.1 * (b.format_flag - 1);
  return b;
}

double answer_reward(const Prediction& pred, const std::vector<std::string>& references) {
  if (references.empty()) throw DataError("answer_reward: empty reference list");
  if (exact_match(pred.answer_span, references)) return 1.0;
  if (contains_recall(pred.raw_text, references)) return 0.5;
  return 0.0;
}

RewardBreakdown total_reward(const Prediction& pred, const std::vector<std::string>& references) {
  return reward_from_parts(answer_reward(pred, references), pred.format_ok);
}

}  // namespace rlvr
