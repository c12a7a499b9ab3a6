#include "rlvr/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "rlvr/common.hpp"
#include "rlvr/metrics.hpp"

namespace rlvr {

using nlohmann::json;

void TrainConfig::validate() const {
  if (group_size < 2) throw UsageError("group_size must be at least 2");
  if (groups_per_batch < 1) throw UsageError("groups_per_batch must be positive");
  if (!(learning_rate >= 0.0)) throw UsageError("learning_rate must be non-negative");
  if (!(kl_coefficient >= 0.0)) throw UsageError("kl_coefficient must be non-negative");
  if (max_steps < 0) throw UsageError("max_steps must be non-negative");
  if (eval_every < 1) throw UsageError("eval_every must be positive");
  if (!is_valid(mode)) throw UsageError("invalid prompt mode in train config");
  if (!(rsft_filter_threshold >= 0.0)) throw UsageError("rsft_filter_threshold must be >= 0");
  if (rsft_epochs < 1) throw UsageError("rsft_epochs must be positive");
  if (rsft_minibatch < 1) throw UsageError("rsft_minibatch must be positive");
  if (sft_steps < 0) throw UsageError("sft_steps must be non-negative");
}

std::vector<double> compute_advantages(const std::vector<double>& rewards) {
  if (rewards.size() < 2) throw UsageError("advantage baseline needs a group of at least 2");
  bool all_equal = std::all_of(rewards.begin(), rewards.end(),
                               [&](double r) { return r == rewards.front(); });
  if (all_equal) return std::vector<double>(rewards.size(), 0.0);
  double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) /
                static_cast<double>(rewards.size());
  std::vector<double> adv(rewards.size());
  for (size_t i = 0; i < rewards.size(); ++i) adv[i] = rewards[i] - mean;
  return adv;
}

PolicyGradient grpo_gradient(const std::vector<TrajectoryGroup>& groups,
                             const ToyPolicyParams& current, const ToyPolicyParams& old,
                             std::optional<double> ratio_clip) {
  if (!current.same_shape(old)) throw DataError("policy shape mismatch in gradient");
  PolicyGradient total = PolicyGradient::zeros_like(current);
  if (groups.empty()) return total;

  for (size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& group = groups[gi];
    for (size_t k = 0; k < group.trajectories.size(); ++k) {
      const Trajectory& t = group.trajectories[k];
      const double adv = group.advantages.at(k);
      if (adv == 0.0) continue;
      std::vector<double> lp_cur = per_token_logprobs(current, t);
      std::vector<double> lp_old = per_token_logprobs(old, t);
      const int q = t.question_index;

      // per-token importance weights, computed in log space; with clipping
      // enabled, tokens whose clipped objective binds contribute nothing
      std::vector<double> w(lp_cur.size());
      for (size_t i = 0; i < w.size(); ++i) {
        w[i] = std::exp(lp_cur[i] - lp_old[i]);
        if (!std::isfinite(w[i])) {
          std::ostringstream os;
          os << "non-finite importance ratio in group " << gi << ", trajectory " << k
             << " (question " << q << ", token " << i << ")";
          throw DataError(os.str());
        }
        if (ratio_clip) {
          bool clipped_out = (adv > 0.0 && w[i] > 1.0 + *ratio_clip) ||
                             (adv < 0.0 && w[i] < 1.0 - *ratio_clip);
          if (clipped_out) w[i] = 0.0;
        }
      }

      size_t token = 0;
      if (t.has_reasoning) {
        auto p = softmax(current.reasoning_row(q));
        size_t base = static_cast<size_t>(q) * current.reasoning_vocab;
        double c = adv * w[token];
        for (int i = 0; i < current.reasoning_vocab; ++i) {
          total.reasoning[base + i] -= c * p[static_cast<size_t>(i)];
        }
        total.reasoning[base + static_cast<size_t>(t.reasoning_token)] += c;
        ++token;
      }
      auto pa = softmax(current.answer_row(q, t.reasoning_token));
      size_t abase = (static_cast<size_t>(q) * current.reasoning_vocab + t.reasoning_token) *
                     current.answer_vocab;
      double c = adv * w[token];
      for (int i = 0; i < current.answer_vocab; ++i) {
        total.answer[abase + i] -= c * pa[static_cast<size_t>(i)];
      }
      total.answer[abase + static_cast<size_t>(t.answer_token)] += c;
    }
  }
  total.scale(1.0 / static_cast<double>(groups.size()));
  return total;
}

namespace {

// KL of one categorical pair plus its logit-space gradient factor d = log p - log q.
struct RowKl {
  double value = 0.0;
  std::vector<double> p;  // current probabilities
  std::vector<double> d;  // log p - log q per index
};

RowKl row_kl(std::span<const double> cur_logits, std::span<const double> ref_logits) {
  RowKl out;
  auto lp = log_softmax(cur_logits);
  auto lq = log_softmax(ref_logits);
  out.p.resize(lp.size());
  out.d.resize(lp.size());
  for (size_t i = 0; i < lp.size(); ++i) {
    out.p[i] = std::exp(lp[i]);
    out.d[i] = lp[i] - lq[i];
    out.value += out.p[i] * out.d[i];
  }
  return out;
}

}  // namespace

double kl_value(const ToyPolicyParams& current, const ToyPolicyParams& reference,
                const std::vector<int>& question_indices) {
  if (!current.same_shape(reference)) throw DataError("policy shape mismatch in KL");
  if (question_indices.empty()) return 0.0;
  double total = 0.0;
  for (int q : question_indices) {
    RowKl r = row_kl(current.reasoning_row(q), reference.reasoning_row(q));
    double value = r.value;
    for (int c = 0; c < current.reasoning_vocab; ++c) {
      RowKl a = row_kl(current.answer_row(q, c), reference.answer_row(q, c));
      value += r.p[static_cast<size_t>(c)] * a.value;
    }
    total += value;
  }
  return total / static_cast<double>(question_indices.size());
}

PolicyGradient kl_penalty_gradient(const ToyPolicyParams& current,
                                   const ToyPolicyParams& reference,
                                   const std::vector<int>& question_indices, double beta) {
  if (!current.same_shape(reference)) throw DataError("policy shape mismatch in KL gradient");
  PolicyGradient g = PolicyGradient::zeros_like(current);
  if (question_indices.empty() || beta == 0.0) return g;
  const double scale = beta / static_cast<double>(question_indices.size());

  for (int q : question_indices) {
    RowKl r = row_kl(current.reasoning_row(q), reference.reasoning_row(q));
    std::vector<double> answer_kl(static_cast<size_t>(current.reasoning_vocab));
    double expected_answer_kl = 0.0;
    for (int c = 0; c < current.reasoning_vocab; ++c) {
      RowKl a = row_kl(current.answer_row(q, c), reference.answer_row(q, c));
      answer_kl[static_cast<size_t>(c)] = a.value;
      expected_answer_kl += r.p[static_cast<size_t>(c)] * a.value;

      // d/d answer_logit[y] of p(c) * KL_a(c) = p(c) * p_a(y) * (d_a(y) - KL_a(c))
      size_t abase = (static_cast<size_t>(q) * current.reasoning_vocab + c) *
                     current.answer_vocab;
      double pc = r.p[static_cast<size_t>(c)];
      for (int y = 0; y < current.answer_vocab; ++y) {
        g.answer[abase + y] += scale * pc * a.p[static_cast<size_t>(y)] *
                               (a.d[static_cast<size_t>(y)] - a.value);
      }
    }
    // d/d reasoning_logit[c] of [KL_r + E_c KL_a] =
    //   p(c) * ((d_r(c) - KL_r) + (KL_a(c) - E KL_a))
    size_t base = static_cast<size_t>(q) * current.reasoning_vocab;
    for (int c = 0; c < current.reasoning_vocab; ++c) {
      g.reasoning[base + c] += scale * r.p[static_cast<size_t>(c)] *
                               ((r.d[static_cast<size_t>(c)] - r.value) +
                                (answer_kl[static_cast<size_t>(c)] - expected_answer_kl));
    }
  }
  return g;
}

TrajectoryScorer tag_format_scorer() {
  return [](const std::string& text, const std::vector<std::string>& refs) {
    Prediction pred = make_prediction(text);
    ScoredText scored;
    scored.flags = score_prediction(pred, refs);
    scored.reward = total_reward(pred, refs);
    return scored;
  };
}

std::string render_trajectory_text(const SyntheticWorld& world, const Trajectory& t) {
  return "<answer>" + canonical_answer_string(t.answer_token, world.answer_vocab_size) +
         "</answer>";
}

std::vector<std::string> reference_answers(const SyntheticWorld& world, int question_index) {
  return {canonical_answer_string(world.gold_token(question_index), world.answer_vocab_size)};
}

void TrainingLog::append_jsonl(std::ostream& out) const {
  for (const auto& s : steps) {
    json rec;
    rec["step"] = s.step;
    rec["mean_reward"] = s.mean_reward;
    rec["em"] = s.em;
    rec["mean_trace_len"] = s.mean_trace_len;
    rec["kl"] = s.kl;
    if (s.train_em) rec["train_em"] = *s.train_em;
    if (s.val_em) rec["val_em"] = *s.val_em;
    out << rec.dump() << "\n";
  }
}

std::string TrainingLog::to_jsonl() const {
  std::ostringstream os;
  append_jsonl(os);
  return os.str();
}

double exact_expected_em(const ToyPolicyParams& params, const SyntheticWorld& world,
                         const std::vector<int>& questions, const PromptMode& mode) {
  if (questions.empty()) return 0.0;
  double total = 0.0;
  for (int q : questions) {
    const int gold = world.gold_token(q);
    if (mode.reasoning) {
      auto pr = softmax(params.reasoning_row(q));
      double p_em = 0.0;
      for (int c = 0; c < params.reasoning_vocab; ++c) {
        auto pa = softmax(params.answer_row(q, c));
        p_em += pr[static_cast<size_t>(c)] * pa[static_cast<size_t>(gold)];
      }
      total += p_em;
    } else {
      auto pa = softmax(params.answer_row(q, params.null_reasoning_index));
      total += pa[static_cast<size_t>(gold)];
    }
  }
  return total / static_cast<double>(questions.size());
}

double exact_expected_reward(const ToyPolicyParams& params, const SyntheticWorld& world,
                             const std::vector<int>& questions, const PromptMode& mode,
                             const TrajectoryScorer& scorer) {
  if (questions.empty()) return 0.0;
  double total = 0.0;
  for (int q : questions) {
    auto refs = reference_answers(world, q);
    double expected = 0.0;
    auto answer_term = [&](int c, double pc) {
      auto pa = softmax(params.answer_row(q, c));
      Trajectory t;
      t.question_index = q;
      t.reasoning_token = c;
      for (int y = 0; y < params.answer_vocab; ++y) {
        t.answer_token = y;
        ScoredText s = scorer(render_trajectory_text(world, t), refs);
        expected += pc * pa[static_cast<size_t>(y)] * s.reward.total;
      }
    };
    if (mode.reasoning) {
      auto pr = softmax(params.reasoning_row(q));
      for (int c = 0; c < params.reasoning_vocab; ++c) {
        answer_term(c, pr[static_cast<size_t>(c)]);
      }
    } else {
      answer_term(params.null_reasoning_index, 1.0);
    }
    total += expected;
  }
  return total / static_cast<double>(questions.size());
}

namespace {

std::vector<int> all_questions(const SyntheticWorld& world) {
  std::vector<int> qs(static_cast<size_t>(world.num_facts));
  std::iota(qs.begin(), qs.end(), 0);
  return qs;
}

TrajectoryGroup sample_group(const ToyPolicyParams& sampling_params, const SyntheticWorld& world,
                             int q, int group_size, const PromptMode& mode,
                             const TrajectoryScorer& scorer, std::mt19937_64& rng,
                             double* em_hits, double* trace_tokens) {
  TrajectoryGroup group;
  group.question_index = q;
  auto refs = reference_answers(world, q);
  for (int k = 0; k < group_size; ++k) {
    Trajectory t = sample_trajectory(sampling_params, q, mode, rng);
    ScoredText scored = scorer(render_trajectory_text(world, t), refs);
    group.rewards.push_back(scored.reward.total);
    if (em_hits && scored.flags.em) *em_hits += 1.0;
    if (trace_tokens) *trace_tokens += t.token_count();
    group.trajectories.push_back(std::move(t));
  }
  group.advantages = compute_advantages(group.rewards);
  return group;
}

}  // namespace

TrainingLog run_rlvr(const TrainConfig& config, const SyntheticWorld& world,
                     ToyPolicyParams& params, const TrajectoryScorer& scorer,
                     const RlvrOptions& options) {
  config.validate();
  if (params.num_questions != world.num_facts ||
      params.answer_vocab != world.answer_vocab_size ||
      params.reasoning_vocab != world.reasoning_vocab_size) {
    throw DataError("policy shape does not match the world");
  }

  std::vector<int> pool = options.question_pool.empty() ? all_questions(world)
                                                        : options.question_pool;
  const ToyPolicyParams reference = params;  // KL anchor: frozen initial policy
  std::mt19937_64 rng(derive_seed(config.seed, 4));
  TrainingLog log;

  const int trajectories_per_step = config.groups_per_batch * config.group_size;
  for (int step = 0; step < config.max_steps; ++step) {
    const ToyPolicyParams old_params = params;  // sampling snapshot

    double em_hits = 0.0;
    double trace_tokens = 0.0;
    double reward_sum = 0.0;
    std::vector<TrajectoryGroup> groups;
    std::vector<int> batch_questions;
    groups.reserve(static_cast<size_t>(config.groups_per_batch));
    for (int g = 0; g < config.groups_per_batch; ++g) {
      int q = pool[static_cast<size_t>(rng() % pool.size())];
      batch_questions.push_back(q);
      groups.push_back(sample_group(old_params, world, q, config.group_size, config.mode,
                                    scorer, rng, &em_hits, &trace_tokens));
      for (double r : groups.back().rewards) reward_sum += r;
    }

    PolicyGradient direction = grpo_gradient(groups, params, old_params, config.ratio_clip);
    if (config.kl_coefficient > 0.0) {
      PolicyGradient kl_grad =
          kl_penalty_gradient(params, reference, batch_questions, config.kl_coefficient);
      direction.add_scaled(kl_grad, -1.0);
    }
    apply_update(params, direction, config.learning_rate);
    if (!params.finite()) {
      throw DataError("non-finite parameters after update at step " + std::to_string(step));
    }

    StepStats stats;
    stats.step = step;
    stats.mean_reward = reward_sum / trajectories_per_step;
    stats.em = em_hits / trajectories_per_step;
    stats.mean_trace_len = trace_tokens / trajectories_per_step;
    stats.kl = kl_value(params, reference, pool);
    const bool eval_step =
        (step % config.eval_every == 0) || (step + 1 == config.max_steps);
    if (eval_step) {
      if (!options.train_report.empty()) {
        stats.train_em = exact_expected_em(params, world, options.train_report, config.mode);
      }
      if (!options.val_report.empty()) {
        stats.val_em = exact_expected_em(params, world, options.val_report, config.mode);
      }
      if (options.on_eval) options.on_eval(step, params, stats);
    }
    log.steps.push_back(stats);
  }
  return log;
}

RsftResult run_reasoning_sft(const TrainConfig& config, const SyntheticWorld& world,
                             ToyPolicyParams& params, const TrajectoryScorer& scorer,
                             const std::vector<int>& question_pool) {
  config.validate();
  std::vector<int> pool = question_pool.empty() ? all_questions(world) : question_pool;
  const ToyPolicyParams initial = params;  // trajectories come from the frozen start policy
  std::mt19937_64 rng(derive_seed(config.seed, 5));

  const int budget = config.rsft_sample_budget > 0
                         ? config.rsft_sample_budget
                         : config.max_steps * config.groups_per_batch;
  std::vector<Trajectory> kept;
  for (int i = 0; i < budget; ++i) {
    int q = pool[static_cast<size_t>(rng() % pool.size())];
    Trajectory t = sample_trajectory(initial, q, config.mode, rng);
    ScoredText scored = scorer(render_trajectory_text(world, t),
                               reference_answers(world, t.question_index));
    if (scored.reward.answer_reward >= config.rsft_filter_threshold) {
      kept.push_back(std::move(t));
    }
  }
  if (kept.empty()) {
    throw DataError("no trajectories passed the correctness filter; increase the sample budget");
  }

  // held-out slice of the kept traces for checkpoint selection
  size_t n_val = static_cast<size_t>(std::floor(config.rsft_val_fraction *
                                                static_cast<double>(kept.size())));
  std::vector<Trajectory> val(kept.end() - static_cast<long>(n_val), kept.end());
  kept.resize(kept.size() - n_val);
  if (kept.empty()) {
    kept = std::move(val);
    val.clear();
  }

  auto mean_nll = [&](const std::vector<Trajectory>& set) {
    if (set.empty()) return 0.0;
    double s = 0.0;
    for (const auto& t : set) s -= logprob(params, t);
    return s / static_cast<double>(set.size());
  };

  RsftResult result;
  result.sampled = budget;
  result.kept = static_cast<int>(kept.size() + val.size());

  ToyPolicyParams best = params;
  double best_score = val.empty() ? std::numeric_limits<double>::infinity() : mean_nll(val);
  if (config.rsft_select == RsftSelect::em) {
    best_score = -exact_expected_em(params, world, pool, config.mode);
  }
  result.selected_epoch = 0;

  std::vector<size_t> order(kept.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= config.rsft_epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<size_t>(rng() % i)]);
    }
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(config.rsft_minibatch)) {
      size_t end = std::min(order.size(), start + static_cast<size_t>(config.rsft_minibatch));
      PolicyGradient grad = PolicyGradient::zeros_like(params);
      for (size_t i = start; i < end; ++i) {
        grad.add_scaled(grad_logprob(params, kept[order[i]]), 1.0);
      }
      grad.scale(1.0 / static_cast<double>(end - start));
      apply_update(params, grad, config.rsft_learning_rate);
    }
    if (!params.finite()) {
      throw DataError("non-finite parameters after epoch " + std::to_string(epoch));
    }

    double score = 0.0;
    if (config.rsft_select == RsftSelect::loss) {
      score = val.empty() ? mean_nll(kept) : mean_nll(val);
    } else {
      score = -exact_expected_em(params, world, pool, config.mode);
    }
    StepStats stats;
    stats.step = epoch;
    stats.mean_reward = -mean_nll(kept);
    stats.em = exact_expected_em(params, world, pool, config.mode);
    stats.mean_trace_len = config.mode.reasoning ? 2.0 : 1.0;
    stats.kl = kl_value(params, initial, pool);
    result.log.steps.push_back(stats);
    if (score < best_score) {
      best_score = score;
      best = params;
      result.selected_epoch = epoch;
    }
  }
  params = best;
  return result;
}

TrainingLog run_sft(const TrainConfig& config, const SyntheticWorld& world,
                    ToyPolicyParams& params, const std::vector<int>& question_pool) {
  config.validate();
  std::vector<int> pool = question_pool.empty() ? all_questions(world) : question_pool;
  for (int q : pool) {
    if (world.gold_token(q) >= params.answer_vocab) {
      throw DataError("gold answer token outside the policy vocabulary for question " +
                      std::to_string(q));
    }
  }
  const ToyPolicyParams initial = params;
  const PromptMode eval_mode = make_prompt_mode(false, false, AnswerFormat::tags);

  TrainingLog log;
  for (int step = 0; step < config.sft_steps; ++step) {
    // full-batch gradient of mean log p(gold | question, null reasoning);
    // the reasoning stage is a constant filler and receives no gradient
    PolicyGradient grad = PolicyGradient::zeros_like(params);
    double nll = 0.0;
    for (int q : pool) {
      const int gold = world.gold_token(q);
      auto lp = log_softmax(params.answer_row(q, params.null_reasoning_index));
      nll -= lp[static_cast<size_t>(gold)];
      auto pa = softmax(params.answer_row(q, params.null_reasoning_index));
      size_t abase = (static_cast<size_t>(q) * params.reasoning_vocab +
                      static_cast<size_t>(params.null_reasoning_index)) *
                     params.answer_vocab;
      for (int y = 0; y < params.answer_vocab; ++y) {
        grad.answer[abase + static_cast<size_t>(y)] -= pa[static_cast<size_t>(y)];
      }
      grad.answer[abase + static_cast<size_t>(gold)] += 1.0;
    }
    grad.scale(1.0 / static_cast<double>(pool.size()));
    apply_update(params, grad, config.sft_learning_rate);
    if (!params.finite()) {
      throw DataError("non-finite parameters after update at step " + std::to_string(step));
    }

    StepStats stats;
    stats.step = step;
    stats.mean_reward = -nll / static_cast<double>(pool.size());
    stats.em = exact_expected_em(params, world, pool, eval_mode);
    stats.mean_trace_len = 1.0;
    stats.kl = kl_value(params, initial, pool);
    log.steps.push_back(stats);
  }
  return log;
}

}  // namespace rlvr
