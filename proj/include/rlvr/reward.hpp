#pragma once

#include <string>
#include <vector>

#include "rlvr/metrics.hpp"

namespace rlvr {

// Verifiable reward decomposition: total = answer_reward + 0.1*(format - 1).
struct RewardBreakdown {
  double answer_reward = 0.0;  // 1.0 exact match, 0.5 recall, 0 otherwise
  int format_flag = 0;         // 1 when the output uses <answer></answer> tags
  double total = 0.0;          // in [-0.1, 1.0]
};

RewardBreakdown reward_from_parts(double answer_reward, bool format_ok);

// Graded answer correctness; independent of the format flag.
double answer_reward(const Prediction& pred, const std::vector<std::string>& references);

RewardBreakdown total_reward(const Prediction& pred, const std::vector<std::string>& references);

}  // namespace rlvr
