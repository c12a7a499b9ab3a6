#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rlvr/prompting.hpp"

namespace rlvr {

// Two-stage tabular policy: a reasoning token is sampled per question, then
// an answer token conditioned on it. Index 0 of the reasoning vocabulary is
// the designated token for the no-reasoning condition.
struct ToyPolicyParams {
  int num_questions = 0;
  int reasoning_vocab = 0;
  int answer_vocab = 0;
  int null_reasoning_index = 0;
  std::vector<double> reasoning_logits;  // [num_questions * reasoning_vocab]
  std::vector<double> answer_logits;     // [num_questions * reasoning_vocab * answer_vocab]

  static ToyPolicyParams init_random(int num_questions, int reasoning_vocab, int answer_vocab,
                                     std::uint64_t seed, double stddev = 0.1);

  std::span<const double> reasoning_row(int q) const;
  std::span<double> reasoning_row(int q);
  std::span<const double> answer_row(int q, int c) const;
  std::span<double> answer_row(int q, int c);

  bool finite() const;
  bool same_shape(const ToyPolicyParams& other) const;
};

// Gradient accumulator shaped like the parameters.
struct PolicyGradient {
  std::vector<double> reasoning;
  std::vector<double> answer;

  static PolicyGradient zeros_like(const ToyPolicyParams& p);
  void add_scaled(const PolicyGradient& g, double scale);
  void scale(double s);
  double max_abs() const;
};

void apply_update(ToyPolicyParams& params, const PolicyGradient& direction, double step_size);

// One sampled (reasoning token, answer token) pair. Log-probs under the
// sampling-time policy are stored per token; log-probs under the current
// policy are recomputed via logprob()/per_token_logprobs().
struct Trajectory {
  int question_index = 0;
  int reasoning_token = 0;
  int answer_token = 0;
  bool has_reasoning = true;        // false under the no-reasoning condition
  std::vector<double> logp_old;     // per-token, <= 0, length 2 or 1

  int token_count() const { return has_reasoning ? 2 : 1; }
};

std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);

// Draws a trajectory. Under the no-reasoning condition the reasoning token
// is pinned to the null index and contributes no log-prob term.
Trajectory sample_trajectory(const ToyPolicyParams& params, int question_index,
                             const PromptMode& mode, std::mt19937_64& rng);
Trajectory sample_trajectory_seeded(const ToyPolicyParams& params, int question_index,
                                    const PromptMode& mode, std::uint64_t rng_seed);

std::vector<double> per_token_logprobs(const ToyPolicyParams& params, const Trajectory& t);
double logprob(const ToyPolicyParams& params, const Trajectory& t);

// Analytic log-prob gradient: (one-hot(token) - softmax(row)) on each
// touched row, zero elsewhere.
PolicyGradient grad_logprob(const ToyPolicyParams& params, const Trajectory& t);

// Central-difference oracle over the rows the trajectory touches.
PolicyGradient finite_diff_grad(const ToyPolicyParams& params, const Trajectory& t, double h);

// Flat text checkpoint with a version header; see docs/formats.md.
void save_checkpoint(const std::string& path, const ToyPolicyParams& params);
ToyPolicyParams load_checkpoint(const std::string& path);

}  // namespace rlvr
