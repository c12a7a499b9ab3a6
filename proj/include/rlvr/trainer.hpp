#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "rlvr/corpus.hpp"
#include "rlvr/reward.hpp"
#include "rlvr/toy_policy.hpp"

namespace rlvr {

enum class RsftSelect { loss, em };

struct TrainConfig {
  int group_size = 8;        // trajectories per input
  int groups_per_batch = 32;
  // The estimator is averaged over the batch's groups, so the step size is
  // per-batch; 2.0 converges on the default desk-scale world in ~300 steps.
  double learning_rate = 2.0;
  double kl_coefficient = 0.01;
  int max_steps = 500;
  int eval_every = 25;
  std::uint64_t seed = 0;
  PromptMode mode{};                 // condition used when sampling
  // Off by default (the loop is on-policy). When set, a token is dropped
  // from the estimator once its ratio leaves [1-c, 1+c] against the sign of
  // the advantage, the usual pessimistic-clip rule.
  std::optional<double> ratio_clip;

  // supervised baseline settings
  int rsft_sample_budget = -1;  // <0: max_steps * groups_per_batch draws
  double rsft_filter_threshold = 1.0;
  int rsft_epochs = 8;
  int rsft_minibatch = 32;
  double rsft_learning_rate = 0.1;
  double rsft_val_fraction = 0.1;
  RsftSelect rsft_select = RsftSelect::loss;
  int sft_steps = 2000;
  double sft_learning_rate = 0.1;

  void validate() const;  // throws UsageError
};

// K trajectories for one input with their rewards and group-relative
// advantages A_k = r_k - mean(r).
struct TrajectoryGroup {
  int question_index = 0;
  std::vector<Trajectory> trajectories;
  std::vector<double> rewards;
  std::vector<double> advantages;
};

std::vector<double> compute_advantages(const std::vector<double>& rewards);

// Importance-sampled policy gradient over sampled groups: per token,
// weight = pi_current / pi_sampling, applied to the log-prob gradient and
// scaled by the trajectory's advantage; mean over groups.
PolicyGradient grpo_gradient(const std::vector<TrajectoryGroup>& groups,
                             const ToyPolicyParams& current, const ToyPolicyParams& old,
                             std::optional<double> ratio_clip = std::nullopt);

// Exact joint KL between the two-stage distributions, averaged over inputs.
double kl_value(const ToyPolicyParams& current, const ToyPolicyParams& reference,
                const std::vector<int>& question_indices);

// Gradient of beta * KL (same averaging), computed analytically.
PolicyGradient kl_penalty_gradient(const ToyPolicyParams& current,
                                   const ToyPolicyParams& reference,
                                   const std::vector<int>& question_indices, double beta);

struct ScoredText {
  RewardBreakdown reward;
  ScoreFlags flags;
};

// Scores one rendered trajectory text against the reference answers.
using TrajectoryScorer =
    std::function<ScoredText(const std::string& text, const std::vector<std::string>& refs)>;

TrajectoryScorer tag_format_scorer();

// Surface form of a toy trajectory: the canonical answer string in tags.
std::string render_trajectory_text(const SyntheticWorld& world, const Trajectory& t);
std::vector<std::string> reference_answers(const SyntheticWorld& world, int question_index);

struct StepStats {
  int step = 0;
  double mean_reward = 0.0;
  double em = 0.0;   // sampled-trajectory exact-match rate for the step
  double mean_trace_len = 0.0;
  double kl = 0.0;
  std::optional<double> train_em;  // exact policy EM on the reporting splits
  std::optional<double> val_em;
};

struct TrainingLog {
  std::vector<StepStats> steps;
  void append_jsonl(std::ostream& out) const;
  std::string to_jsonl() const;
};

// Exact per-question probability of an exact-match answer, enumerated over
// the full outcome space, averaged over `questions`.
double exact_expected_em(const ToyPolicyParams& params, const SyntheticWorld& world,
                         const std::vector<int>& questions, const PromptMode& mode);
double exact_expected_reward(const ToyPolicyParams& params, const SyntheticWorld& world,
                             const std::vector<int>& questions, const PromptMode& mode,
                             const TrajectoryScorer& scorer);

struct RlvrOptions {
  // Inputs sampled during training. Defaults to every world question; the
  // tabular policy has no cross-question sharing, so any question left out
  // of the pool keeps its initial parameters.
  std::vector<int> question_pool;
  std::vector<int> train_report;  // exact-EM reporting split
  std::vector<int> val_report;    // exact-EM reporting split
  // Invoked on eval steps after the parameters passed the finite check.
  std::function<void(int step, const ToyPolicyParams&, const StepStats&)> on_eval;
};

// Reward-maximizing loop: snapshot the sampling policy, draw grouped
// trajectories, score them, and ascend the importance-sampled gradient minus
// the KL penalty toward the frozen initial policy.
TrainingLog run_rlvr(const TrainConfig& config, const SyntheticWorld& world,
                     ToyPolicyParams& params, const TrajectoryScorer& scorer,
                     const RlvrOptions& options = {});

struct RsftResult {
  TrainingLog log;
  int sampled = 0;
  int kept = 0;
  int selected_epoch = 0;
};

// Offline baseline: sample from the frozen initial policy, keep trajectories
// whose answer reward clears the threshold, and maximize their likelihood.
RsftResult run_reasoning_sft(const TrainConfig& config, const SyntheticWorld& world,
                             ToyPolicyParams& params, const TrajectoryScorer& scorer,
                             const std::vector<int>& question_pool = {});

// Supervised baseline: maximize log-likelihood of the gold answer with the
// reasoning token pinned to the null index; reasoning logits receive no
// gradient.
TrainingLog run_sft(const TrainConfig& config, const SyntheticWorld& world,
                    ToyPolicyParams& params, const std::vector<int>& question_pool = {});

}  // namespace rlvr
