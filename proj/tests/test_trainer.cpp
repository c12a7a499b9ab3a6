#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "rlvr/common.hpp"
#include "rlvr/trainer.hpp"

using namespace rlvr;
using test_oracles::max_relative_error;
using test_oracles::numeric_gradient;
using test_oracles::surrogate_value;

namespace {

PromptMode with_reasoning() { return make_prompt_mode(false, true, AnswerFormat::tags); }

TrainConfig small_config() {
  TrainConfig c;
  c.group_size = 4;
  c.groups_per_batch = 4;
  c.learning_rate = 0.1;
  c.kl_coefficient = 0.01;
  c.max_steps = 20;
  c.eval_every = 5;
  c.seed = 1;
  c.mode = with_reasoning();
  return c;
}

}  // namespace

TEST_CASE("advantages subtract the group mean") {
  auto adv = compute_advantages({1.0, 0.0, 0.0, 1.0});
  CHECK(adv == std::vector<double>{0.5, -0.5, -0.5, 0.5});

  auto flat = compute_advantages({0.4, 0.4, 0.4});
  for (double a : flat) CHECK(a == 0.0);

  CHECK_THROWS_AS(compute_advantages({1.0}), UsageError);
}

TEST_CASE("advantages sum to zero over ten thousand random groups") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10000; ++trial) {
    size_t k = 2 + rng() % 15;
    std::vector<double> rewards(k);
    for (auto& r : rewards) {
      static const double cells[] = {1.0, 0.9, 0.5, 0.4, 0.0, -0.1};
      r = cells[rng() % 6];
    }
    auto adv = compute_advantages(rewards);
    double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) /
                  static_cast<double>(k);
    double sum = 0.0;
    for (size_t i = 0; i < k; ++i) {
      CHECK(adv[i] == rewards[i] - mean);  // exact formula
      sum += adv[i];
    }
    CHECK(std::fabs(sum) <= 1e-12);
  }
}

TEST_CASE("on-policy importance ratios are exactly one") {
  auto [world, examples] = generate_synthetic_world(3, 4, 3, 5);
  ToyPolicyParams params = ToyPolicyParams::init_random(3, 3, 4, 5);
  std::mt19937_64 rng(6);
  for (int i = 0; i < 200; ++i) {
    Trajectory t = sample_trajectory(params, static_cast<int>(rng() % 3), with_reasoning(), rng);
    auto lp_cur = per_token_logprobs(params, t);
    auto lp_old = per_token_logprobs(params, t);
    for (size_t j = 0; j < lp_cur.size(); ++j) {
      CHECK(std::exp(lp_cur[j] - lp_old[j]) == 1.0);
    }
  }
}

TEST_CASE("with equal policies the estimator reduces to advantage-weighted REINFORCE") {
  auto [world, examples] = generate_synthetic_world(2, 3, 2, 9);
  ToyPolicyParams params = ToyPolicyParams::init_random(2, 2, 3, 9);
  std::mt19937_64 rng(10);
  TrajectoryScorer scorer = tag_format_scorer();

  std::vector<TrajectoryGroup> groups;
  for (int g = 0; g < 3; ++g) {
    TrajectoryGroup group;
    group.question_index = g % 2;
    for (int k = 0; k < 4; ++k) {
      Trajectory t = sample_trajectory(params, group.question_index, with_reasoning(), rng);
      auto scored = scorer(render_trajectory_text(world, t),
                           reference_answers(world, group.question_index));
      group.rewards.push_back(scored.reward.total);
      group.trajectories.push_back(std::move(t));
    }
    group.advantages = compute_advantages(group.rewards);
    groups.push_back(std::move(group));
  }

  PolicyGradient got = grpo_gradient(groups, params, params);
  PolicyGradient manual = PolicyGradient::zeros_like(params);
  for (const auto& g : groups) {
    for (size_t k = 0; k < g.trajectories.size(); ++k) {
      manual.add_scaled(grad_logprob(params, g.trajectories[k]), g.advantages[k]);
    }
  }
  manual.scale(1.0 / 3.0);
  auto close = [&](const std::vector<double>& a, const std::vector<double>& b) {
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  };
  close(got.reasoning, manual.reasoning);
  close(got.answer, manual.answer);
}

TEST_CASE("zero advantages give a zero gradient") {
  auto [world, examples] = generate_synthetic_world(2, 2, 2, 4);
  ToyPolicyParams params = ToyPolicyParams::init_random(2, 2, 2, 4);
  TrajectoryGroup group;
  group.question_index = 0;
  std::mt19937_64 rng(8);
  for (int k = 0; k < 4; ++k) {
    group.trajectories.push_back(sample_trajectory(params, 0, with_reasoning(), rng));
    group.rewards.push_back(0.5);
  }
  group.advantages = compute_advantages(group.rewards);
  PolicyGradient g = grpo_gradient({group}, params, params);
  CHECK(g.max_abs() == 0.0);
}

TEST_CASE("estimator matches finite differences of the surrogate off-policy") {
  auto [world, examples] = generate_synthetic_world(2, 2, 2, 21);
  ToyPolicyParams old_params = ToyPolicyParams::init_random(2, 2, 2, 21, 0.5);
  TrajectoryScorer scorer = tag_format_scorer();

  // one group per question enumerating the entire outcome space
  std::vector<TrajectoryGroup> groups;
  for (int q = 0; q < 2; ++q) {
    TrajectoryGroup group;
    group.question_index = q;
    auto refs = reference_answers(world, q);
    for (int c = 0; c < 2; ++c) {
      for (int y = 0; y < 2; ++y) {
        Trajectory t;
        t.question_index = q;
        t.reasoning_token = c;
        t.answer_token = y;
        t.has_reasoning = true;
        t.logp_old = per_token_logprobs(old_params, t);
        group.rewards.push_back(scorer(render_trajectory_text(world, t), refs).reward.total);
        group.trajectories.push_back(std::move(t));
      }
    }
    group.advantages = compute_advantages(group.rewards);
    groups.push_back(std::move(group));
  }

  // evaluate the gradient away from the sampling policy
  ToyPolicyParams current = old_params;
  std::mt19937_64 rng(22);
  for (auto& v : current.reasoning_logits) v += normal_draw(rng, 0.0, 0.3);
  for (auto& v : current.answer_logits) v += normal_draw(rng, 0.0, 0.3);

  PolicyGradient analytic = grpo_gradient(groups, current, old_params);
  PolicyGradient numeric = numeric_gradient(
      [&](const ToyPolicyParams& p) { return surrogate_value(groups, p, old_params); }, current,
      1e-5);
  CHECK(max_relative_error(analytic, numeric) <= 1e-4);
}

TEST_CASE("ratio clipping bounds the weights") {
  auto [world, examples] = generate_synthetic_world(1, 2, 2, 30);
  ToyPolicyParams old_params = ToyPolicyParams::init_random(1, 2, 2, 30);
  ToyPolicyParams current = old_params;
  current.answer_logits[0] += 5.0;  // force a large ratio

  TrajectoryGroup group;
  group.question_index = 0;
  for (int k = 0; k < 2; ++k) {
    Trajectory t;
    t.question_index = 0;
    t.reasoning_token = 0;
    t.answer_token = k;
    t.has_reasoning = true;
    t.logp_old = per_token_logprobs(old_params, t);
    group.trajectories.push_back(std::move(t));
  }
  group.rewards = {1.0, 0.0};
  group.advantages = compute_advantages(group.rewards);

  PolicyGradient unclipped = grpo_gradient({group}, current, old_params);
  PolicyGradient clipped = grpo_gradient({group}, current, old_params, 0.2);
  CHECK(clipped.max_abs() < unclipped.max_abs());
}

TEST_CASE("KL of a policy against itself is zero with a zero gradient") {
  ToyPolicyParams p = ToyPolicyParams::init_random(3, 3, 4, 14, 1.0);
  std::vector<int> qs = {0, 1, 2};
  CHECK(kl_value(p, p, qs) == doctest::Approx(0.0).epsilon(1e-15));
  PolicyGradient g = kl_penalty_gradient(p, p, qs, 0.7);
  CHECK(g.max_abs() <= 1e-12);
}

TEST_CASE("KL is non-negative on random parameter pairs") {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 200; ++trial) {
    ToyPolicyParams a = ToyPolicyParams::init_random(2, 3, 4, rng(), 1.5);
    ToyPolicyParams b = ToyPolicyParams::init_random(2, 3, 4, rng(), 1.5);
    CHECK(kl_value(a, b, {0, 1}) >= 0.0);
  }
}

TEST_CASE("KL gradient matches finite differences of the KL value") {
  std::mt19937_64 rng(16);
  double worst = 0.0;
  for (int trial = 0; trial < 25; ++trial) {
    ToyPolicyParams cur = ToyPolicyParams::init_random(2, 2, 3, rng(), 0.8);
    ToyPolicyParams ref = ToyPolicyParams::init_random(2, 2, 3, rng(), 0.8);
    std::vector<int> qs = {0, 1};
    const double beta = 0.37;
    PolicyGradient analytic = kl_penalty_gradient(cur, ref, qs, beta);
    PolicyGradient numeric = numeric_gradient(
        [&](const ToyPolicyParams& p) { return beta * kl_value(p, ref, qs); }, cur, 1e-5);
    worst = std::max(worst, max_relative_error(analytic, numeric));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("zero learning rate and zero KL leave parameters bit-identical") {
  auto [world, examples] = generate_synthetic_world(4, 5, 3, 19);
  ToyPolicyParams params = ToyPolicyParams::init_random(4, 3, 5, 19);
  ToyPolicyParams before = params;
  TrainConfig config = small_config();
  config.learning_rate = 0.0;
  config.kl_coefficient = 0.0;
  config.max_steps = 7;
  run_rlvr(config, world, params, tag_format_scorer());
  CHECK(params.reasoning_logits == before.reasoning_logits);
  CHECK(params.answer_logits == before.answer_logits);
}

TEST_CASE("training twice with one seed reproduces the log byte for byte") {
  auto [world, examples] = generate_synthetic_world(6, 5, 3, 23);
  TrainConfig config = small_config();
  config.seed = 23;

  ToyPolicyParams p1 = ToyPolicyParams::init_random(6, 3, 5, 23);
  ToyPolicyParams p2 = p1;
  TrainingLog log1 = run_rlvr(config, world, p1, tag_format_scorer());
  TrainingLog log2 = run_rlvr(config, world, p2, tag_format_scorer());
  CHECK(log1.to_jsonl() == log2.to_jsonl());
  CHECK(p1.reasoning_logits == p2.reasoning_logits);
  CHECK(p1.answer_logits == p2.answer_logits);

  config.seed = 24;
  ToyPolicyParams p3 = ToyPolicyParams::init_random(6, 3, 5, 23);
  TrainingLog log3 = run_rlvr(config, world, p3, tag_format_scorer());
  CHECK(log1.to_jsonl() != log3.to_jsonl());
}

TEST_CASE("a stronger KL coefficient keeps the policy closer to the reference") {
  auto [world, examples] = generate_synthetic_world(5, 6, 3, 27);
  TrainConfig config = small_config();
  config.max_steps = 60;
  config.seed = 27;

  ToyPolicyParams reference = ToyPolicyParams::init_random(5, 3, 6, 27);
  ToyPolicyParams free_params = reference;
  ToyPolicyParams anchored_params = reference;

  config.kl_coefficient = 0.0;
  run_rlvr(config, world, free_params, tag_format_scorer());
  config.kl_coefficient = 1.0;
  run_rlvr(config, world, anchored_params, tag_format_scorer());

  std::vector<int> qs(5);
  std::iota(qs.begin(), qs.end(), 0);
  CHECK(kl_value(anchored_params, reference, qs) < kl_value(free_params, reference, qs));
}

TEST_CASE("monte-carlo mean reward agrees with exhaustive enumeration") {
  auto [world, examples] = generate_synthetic_world(3, 4, 3, 31);
  ToyPolicyParams params = ToyPolicyParams::init_random(3, 3, 4, 31, 0.6);
  TrajectoryScorer scorer = tag_format_scorer();
  std::vector<int> qs = {0, 1, 2};
  const PromptMode mode = with_reasoning();

  double exact = exact_expected_reward(params, world, qs, mode, scorer);

  std::mt19937_64 rng(32);
  const int draws = 20000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < draws; ++i) {
    int q = qs[static_cast<size_t>(rng() % qs.size())];
    Trajectory t = sample_trajectory(params, q, mode, rng);
    double r = scorer(render_trajectory_text(world, t), reference_answers(world, q)).reward.total;
    sum += r;
    sum_sq += r * r;
  }
  double mean = sum / draws;
  double var = std::max(0.0, sum_sq / draws - mean * mean);
  double se = std::sqrt(var / draws);
  CHECK(std::fabs(mean - exact) <= 3.0 * se + 1e-12);
}

TEST_CASE("non-finite parameters abort with a diagnostic") {
  auto [world, examples] = generate_synthetic_world(2, 3, 2, 40);
  ToyPolicyParams params = ToyPolicyParams::init_random(2, 2, 3, 40);
  params.answer_logits[0] = std::numeric_limits<double>::quiet_NaN();
  TrainConfig config = small_config();
  config.max_steps = 3;
  CHECK_THROWS_AS(run_rlvr(config, world, params, tag_format_scorer()), DataError);
}

TEST_CASE("reward-driven training learns a small world") {
  auto [world, examples] = generate_synthetic_world(8, 6, 3, 51);
  ToyPolicyParams params = ToyPolicyParams::init_random(8, 3, 6, 51);
  TrainConfig config;
  config.group_size = 8;
  config.groups_per_batch = 16;
  config.kl_coefficient = 0.01;
  config.max_steps = 220;
  config.eval_every = 20;
  config.seed = 51;
  config.mode = with_reasoning();

  std::vector<int> qs(8);
  std::iota(qs.begin(), qs.end(), 0);
  double initial = exact_expected_em(params, world, qs, config.mode);
  TrainingLog log = run_rlvr(config, world, params, tag_format_scorer());
  double final_em = exact_expected_em(params, world, qs, config.mode);
  CHECK(initial < 0.35);
  CHECK(final_em > 0.7);
  CHECK(final_em > initial);
  REQUIRE(!log.steps.empty());
  CHECK(log.steps.back().mean_reward > log.steps.front().mean_reward);
}

TEST_CASE("reasoning-sft keeps only filtered trajectories and improves the policy") {
  auto [world, examples] = generate_synthetic_world(6, 5, 3, 61);
  TrainConfig config = small_config();
  config.seed = 61;
  config.rsft_sample_budget = 4000;
  config.rsft_epochs = 6;
  config.rsft_learning_rate = 0.05;

  double mean_initial = 0.0, mean_final = 0.0;
  std::vector<int> qs(6);
  std::iota(qs.begin(), qs.end(), 0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    config.seed = 100 + seed;
    ToyPolicyParams params = ToyPolicyParams::init_random(6, 3, 5, 200 + seed);
    mean_initial += exact_expected_em(params, world, qs, config.mode);
    RsftResult result = run_reasoning_sft(config, world, params, tag_format_scorer());
    CHECK(result.kept > 0);
    CHECK(result.kept < result.sampled);
    mean_final += exact_expected_em(params, world, qs, config.mode);
  }
  CHECK(mean_final / 5.0 >= mean_initial / 5.0);
}

TEST_CASE("the filter threshold separates exact-match from recall trajectories") {
  auto [world, examples] = generate_synthetic_world(4, 6, 3, 71);
  // scorer with a graded middle outcome: neighbouring tokens count as recall
  TrajectoryScorer graded = [&world](const std::string& text,
                                     const std::vector<std::string>& refs) {
    TrajectoryScorer base = tag_format_scorer();
    ScoredText scored = base(text, refs);
    if (scored.reward.answer_reward == 0.0) {
      // treat an adjacent token as a partial (containment-like) hit
      for (int tok = 0; tok < world.answer_vocab_size; ++tok) {
        std::string canon = canonical_answer_string(tok, world.answer_vocab_size);
        if (text.find(canon) != std::string::npos &&
            refs[0] != canon) {
          int gold = -1;
          for (int g = 0; g < world.answer_vocab_size; ++g) {
            if (canonical_answer_string(g, world.answer_vocab_size) == refs[0]) gold = g;
          }
          if (gold >= 0 && std::abs(tok - gold) == 1) {
            scored.reward = reward_from_parts(0.5, true);
            scored.flags.recall = true;
          }
          break;
        }
      }
    }
    return scored;
  };

  TrainConfig config = small_config();
  config.seed = 71;
  config.rsft_sample_budget = 3000;
  config.rsft_epochs = 1;

  config.rsft_filter_threshold = 1.0;
  ToyPolicyParams strict_params = ToyPolicyParams::init_random(4, 3, 6, 71);
  RsftResult strict = run_reasoning_sft(config, world, strict_params, graded);

  config.rsft_filter_threshold = 0.5;
  ToyPolicyParams loose_params = ToyPolicyParams::init_random(4, 3, 6, 71);
  RsftResult loose = run_reasoning_sft(config, world, loose_params, graded);

  CHECK(loose.kept > strict.kept);
}

TEST_CASE("an already-correct policy is a fixed point of reasoning-sft") {
  auto [world, examples] = generate_synthetic_world(3, 4, 3, 81);
  ToyPolicyParams params = ToyPolicyParams::init_random(3, 3, 4, 81, 0.01);
  // saturate both stages so the policy is deterministic and correct
  for (int q = 0; q < 3; ++q) {
    params.reasoning_row(q)[1] = 30.0;
    for (int c = 0; c < 3; ++c) {
      params.answer_row(q, c)[world.gold_token(q)] = 30.0;
    }
  }
  TrainConfig config = small_config();
  config.seed = 81;
  config.rsft_sample_budget = 500;
  config.rsft_epochs = 2;
  ToyPolicyParams before = params;
  RsftResult result = run_reasoning_sft(config, world, params, tag_format_scorer());
  CHECK(result.kept == result.sampled);  // filtering keeps everything
  REQUIRE(!result.log.steps.empty());
  // likelihood loss starts (and stays) near zero
  CHECK(result.log.steps.front().mean_reward == doctest::Approx(0.0).epsilon(1e-6));
  double before_em = exact_expected_em(before, world, {0, 1, 2}, config.mode);
  double after_em = exact_expected_em(params, world, {0, 1, 2}, config.mode);
  CHECK(after_em == doctest::Approx(before_em).epsilon(1e-9));
}

TEST_CASE("an impossible filter threshold is an error advising a larger budget") {
  auto [world, examples] = generate_synthetic_world(3, 4, 3, 91);
  ToyPolicyParams params = ToyPolicyParams::init_random(3, 3, 4, 91);
  TrainConfig config = small_config();
  config.rsft_sample_budget = 50;
  config.rsft_filter_threshold = 2.0;  // unreachable
  CHECK_THROWS_AS(run_reasoning_sft(config, world, params, tag_format_scorer()), DataError);
}

TEST_CASE("supervised tuning never touches the reasoning logits") {
  auto [world, examples] = generate_synthetic_world(5, 4, 3, 95);
  ToyPolicyParams params = ToyPolicyParams::init_random(5, 3, 4, 95);
  std::vector<double> reasoning_before = params.reasoning_logits;
  TrainConfig config = small_config();
  config.sft_steps = 100;
  config.sft_learning_rate = 0.1;
  run_sft(config, world, params);
  CHECK(params.reasoning_logits == reasoning_before);
  CHECK(params.answer_logits != ToyPolicyParams::init_random(5, 3, 4, 95).answer_logits);
}

TEST_CASE("supervised tuning drives a single question to the gold answer") {
  auto [world, examples] = generate_synthetic_world(1, 4, 2, 97);
  ToyPolicyParams params = ToyPolicyParams::init_random(1, 2, 4, 97);
  TrainConfig config = small_config();
  config.sft_steps = 2000;
  config.sft_learning_rate = 0.1;
  run_sft(config, world, params);
  auto p = softmax(params.answer_row(0, params.null_reasoning_index));
  CHECK(p[static_cast<size_t>(world.gold_token(0))] >= 0.99);
}

TEST_CASE("full-batch supervised loss is non-increasing") {
  auto [world, examples] = generate_synthetic_world(5, 6, 3, 101);
  ToyPolicyParams params = ToyPolicyParams::init_random(5, 3, 6, 101);
  TrainConfig config = small_config();
  config.sft_steps = 300;
  config.sft_learning_rate = 0.1;
  TrainingLog log = run_sft(config, world, params);
  REQUIRE(log.steps.size() == 300);
  for (size_t i = 1; i < log.steps.size(); ++i) {
    // mean_reward logs the mean log-likelihood before each step
    CHECK(log.steps[i].mean_reward >= log.steps[i - 1].mean_reward - 1e-12);
  }
}

TEST_CASE("supervised tuning rejects a world outside the vocabulary") {
  auto [world, examples] = generate_synthetic_world(3, 6, 3, 103);
  ToyPolicyParams params = ToyPolicyParams::init_random(3, 3, 4, 103);  // vocab 4 < 6
  TrainConfig config = small_config();
  bool gold_out_of_range = false;
  for (int q = 0; q < 3; ++q) gold_out_of_range |= world.gold_token(q) >= 4;
  if (gold_out_of_range) {
    CHECK_THROWS_AS(run_sft(config, world, params), DataError);
  }
}

TEST_CASE("training log lines carry the step fields") {
  auto [world, examples] = generate_synthetic_world(3, 4, 2, 107);
  ToyPolicyParams params = ToyPolicyParams::init_random(3, 2, 4, 107);
  TrainConfig config = small_config();
  config.max_steps = 4;
  config.eval_every = 2;
  RlvrOptions options;
  options.train_report = {0, 1};
  options.val_report = {2};
  TrainingLog log = run_rlvr(config, world, params, tag_format_scorer(), options);
  std::string jsonl = log.to_jsonl();
  CHECK(jsonl.find("\"step\":0") != std::string::npos);
  CHECK(jsonl.find("\"mean_reward\"") != std::string::npos);
  CHECK(jsonl.find("\"em\"") != std::string::npos);
  CHECK(jsonl.find("\"mean_trace_len\"") != std::string::npos);
  CHECK(jsonl.find("\"kl\"") != std::string::npos);
  CHECK(jsonl.find("\"train_em\"") != std::string::npos);
  CHECK(jsonl.find("\"val_em\"") != std::string::npos);
}
