#include "rlvr/toy_policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rlvr/common.hpp"

namespace rlvr {

ToyPolicyParams ToyPolicyParams::init_random(int num_questions, int reasoning_vocab,
                                             int answer_vocab, std::uint64_t seed,
                                             double stddev) {
  if (num_questions <= 0 || reasoning_vocab <= 0 || answer_vocab <= 0) {
    throw UsageError("policy dimensions must be positive");
  }
  ToyPolicyParams p;
  p.num_questions = num_questions;
  p.reasoning_vocab = reasoning_vocab;
  p.answer_vocab = answer_vocab;
  p.null_reasoning_index = 0;
  p.reasoning_logits.resize(static_cast<size_t>(num_questions) * reasoning_vocab);
  p.answer_logits.resize(static_cast<size_t>(num_questions) * reasoning_vocab * answer_vocab);
  std::mt19937_64 rng(derive_seed(seed, 3));
  for (auto& v : p.reasoning_logits) v = normal_draw(rng, 0.0, stddev);
  for (auto& v : p.answer_logits) v = normal_draw(rng, 0.0, stddev);
  return p;
}

std::span<const double> ToyPolicyParams::reasoning_row(int q) const {
  return {reasoning_logits.data() + static_cast<size_t>(q) * reasoning_vocab,
          static_cast<size_t>(reasoning_vocab)};
}
std::span<double> ToyPolicyParams::reasoning_row(int q) {
  return {reasoning_logits.data() + static_cast<size_t>(q) * reasoning_vocab,
          static_cast<size_t>(reasoning_vocab)};
}
std::span<const double> ToyPolicyParams::answer_row(int q, int c) const {
  return {answer_logits.data() +
              (static_cast<size_t>(q) * reasoning_vocab + c) * answer_vocab,
          static_cast<size_t>(answer_vocab)};
}
std::span<double> ToyPolicyParams::answer_row(int q, int c) {
  return {answer_logits.data() +
              (static_cast<size_t>(q) * reasoning_vocab + c) * answer_vocab,
          static_cast<size_t>(answer_vocab)};
}

bool ToyPolicyParams::finite() const {
  auto ok = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  return ok(reasoning_logits) && ok(answer_logits);
}

bool ToyPolicyParams::same_shape(const ToyPolicyParams& o) const {
  return num_questions == o.num_questions && reasoning_vocab == o.reasoning_vocab &&
         answer_vocab == o.answer_vocab && null_reasoning_index == o.null_reasoning_index;
}

PolicyGradient PolicyGradient::zeros_like(const ToyPolicyParams& p) {
  PolicyGradient g;
  g.reasoning.assign(p.reasoning_logits.size(), 0.0);
  g.answer.assign(p.answer_logits.size(), 0.0);
  return g;
}

void PolicyGradient::add_scaled(const PolicyGradient& g, double scale) {
  for (size_t i = 0; i < reasoning.size(); ++i) reasoning[i] += scale * g.reasoning[i];
  for (size_t i = 0; i < answer.size(); ++i) answer[i] += scale * g.answer[i];
}

void PolicyGradient::scale(double s) {
  for (auto& v : reasoning) v *= s;
  for (auto& v : answer) v *= s;
}

double PolicyGradient::max_abs() const {
  double m = 0.0;
  for (double v : reasoning) m = std::max(m, std::fabs(v));
  for (double v : answer) m = std::max(m, std::fabs(v));
  return m;
}

void apply_update(ToyPolicyParams& params, const PolicyGradient& direction, double step_size) {
  for (size_t i = 0; i < params.reasoning_logits.size(); ++i) {
    params.reasoning_logits[i] += step_size * direction.reasoning[i];
  }
  for (size_t i = 0; i < params.answer_logits.size(); ++i) {
    params.answer_logits[i] += step_size * direction.answer[i];
  }
}

std::vector<double> softmax(std::span<const double> logits) {
  double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double z = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    z += out[i];
  }
  for (auto& v : out) v /= z;
  return out;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - m);
  double logz = m + std::log(z);
  std::vector<double> out(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - logz;
  return out;
}

namespace {

int sample_index(const std::vector<double>& probs, std::mt19937_64& rng) {
  double u = uniform_unit(rng);
  double acc = 0.0;
  for (size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace

Trajectory sample_trajectory(const ToyPolicyParams& params, int question_index,
                             const PromptMode& mode, std::mt19937_64& rng) {
  if (question_index < 0 || question_index >= params.num_questions) {
    throw DataError("question index out of range: " + std::to_string(question_index));
  }
  Trajectory t;
  t.question_index = question_index;
  t.has_reasoning = mode.reasoning;
  if (mode.reasoning) {
    auto lp_r = log_softmax(params.reasoning_row(question_index));
    std::vector<double> probs(lp_r.size());
    for (size_t i = 0; i < lp_r.size(); ++i) probs[i] = std::exp(lp_r[i]);
    t.reasoning_token = sample_index(probs, rng);
    t.logp_old.push_back(lp_r[static_cast<size_t>(t.reasoning_token)]);
  } else {
    t.reasoning_token = params.null_reasoning_index;
  }
  auto lp_a = log_softmax(params.answer_row(question_index, t.reasoning_token));
  std::vector<double> probs(lp_a.size());
  for (size_t i = 0; i < lp_a.size(); ++i) probs[i] = std::exp(lp_a[i]);
  t.answer_token = sample_index(probs, rng);
  t.logp_old.push_back(lp_a[static_cast<size_t>(t.answer_token)]);
  return t;
}

Trajectory sample_trajectory_seeded(const ToyPolicyParams& params, int question_index,
                                    const PromptMode& mode, std::uint64_t rng_seed) {
  std::mt19937_64 rng(rng_seed);
  return sample_trajectory(params, question_index, mode, rng);
}

std::vector<double> per_token_logprobs(const ToyPolicyParams& params, const Trajectory& t) {
  if (t.question_index < 0 || t.question_index >= params.num_questions) {
    throw DataError("question index out of range");
  }
  std::vector<double> out;
  if (t.has_reasoning) {
    auto lp_r = log_softmax(params.reasoning_row(t.question_index));
    out.push_back(lp_r.at(static_cast<size_t>(t.reasoning_token)));
  }
  auto lp_a = log_softmax(params.answer_row(t.question_index, t.reasoning_token));
  out.push_back(lp_a.at(static_cast<size_t>(t.answer_token)));
  return out;
}

double logprob(const ToyPolicyParams& params, const Trajectory& t) {
  double sum = 0.0;
  for (double v : per_token_logprobs(params, t)) sum += v;
  return sum;
}

PolicyGradient grad_logprob(const ToyPolicyParams& params, const Trajectory& t) {
  PolicyGradient g = PolicyGradient::zeros_like(params);
  const int q = t.question_index;
  if (t.has_reasoning) {
    auto p = softmax(params.reasoning_row(q));
    double* row = g.reasoning.data() + static_cast<size_t>(q) * params.reasoning_vocab;
    for (int i = 0; i < params.reasoning_vocab; ++i) row[i] = -p[static_cast<size_t>(i)];
    row[t.reasoning_token] += 1.0;
  }
  auto pa = softmax(params.answer_row(q, t.reasoning_token));
  double* arow = g.answer.data() +
                 (static_cast<size_t>(q) * params.reasoning_vocab + t.reasoning_token) *
                     params.answer_vocab;
  for (int i = 0; i < params.answer_vocab; ++i) arow[i] = -pa[static_cast<size_t>(i)];
  arow[t.answer_token] += 1.0;
  return g;
}

PolicyGradient finite_diff_grad(const ToyPolicyParams& params, const Trajectory& t, double h) {
  if (!(h > 0.0)) throw UsageError("finite difference step must be positive");
  PolicyGradient g = PolicyGradient::zeros_like(params);
  ToyPolicyParams work = params;
  const int q = t.question_index;

  auto central = [&](std::vector<double>& coords, size_t idx) {
    double saved = coords[idx];
    coords[idx] = saved + h;
    double up = logprob(work, t);
    coords[idx] = saved - h;
    double down = logprob(work, t);
    coords[idx] = saved;
    return (up - down) / (2.0 * h);
  };

  if (t.has_reasoning) {
    size_t base = static_cast<size_t>(q) * params.reasoning_vocab;
    for (int i = 0; i < params.reasoning_vocab; ++i) {
      g.reasoning[base + i] = central(work.reasoning_logits, base + i);
    }
  }
  size_t abase = (static_cast<size_t>(q) * params.reasoning_vocab + t.reasoning_token) *
                 params.answer_vocab;
  for (int i = 0; i < params.answer_vocab; ++i) {
    g.answer[abase + i] = central(work.answer_logits, abase + i);
  }
  return g;
}

void save_checkpoint(const std::string& path, const ToyPolicyParams& params) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path);
  out << "rlvr-toy-policy v1\n";
  out << params.num_questions << " " << params.reasoning_vocab << " " << params.answer_vocab
      << " " << params.null_reasoning_index << "\n";
  out.precision(17);
  for (int q = 0; q < params.num_questions; ++q) {
    auto row = params.reasoning_row(q);
    for (size_t i = 0; i < row.size(); ++i) out << (i ? " " : "") << row[i];
    out << "\n";
  }
  for (int q = 0; q < params.num_questions; ++q) {
    for (int c = 0; c < params.reasoning_vocab; ++c) {
      auto row = params.answer_row(q, c);
      for (size_t i = 0; i < row.size(); ++i) out << (i ? " " : "") << row[i];
      out << "\n";
    }
  }
  if (!out) throw DataError("failed writing checkpoint: " + path);
}

ToyPolicyParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  std::string header;
  std::getline(in, header);
  if (header != "rlvr-toy-policy v1") {
    throw DataError("unrecognized checkpoint header in " + path);
  }
  ToyPolicyParams p;
  in >> p.num_questions >> p.reasoning_vocab >> p.answer_vocab >> p.null_reasoning_index;
  if (!in || p.num_questions <= 0 || p.reasoning_vocab <= 0 || p.answer_vocab <= 0 ||
      p.null_reasoning_index < 0 || p.null_reasoning_index >= p.reasoning_vocab) {
    throw DataError("invalid checkpoint dimensions in " + path);
  }
  p.reasoning_logits.resize(static_cast<size_t>(p.num_questions) * p.reasoning_vocab);
  p.answer_logits.resize(static_cast<size_t>(p.num_questions) * p.reasoning_vocab *
                         p.answer_vocab);
  for (auto& v : p.reasoning_logits) in >> v;
  for (auto& v : p.answer_logits) in >> v;
  if (!in) throw DataError("truncated checkpoint: " + path);
  if (!p.finite()) throw DataError("non-finite values in checkpoint: " + path);
  return p;
}

}  // namespace rlvr
