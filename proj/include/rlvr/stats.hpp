#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace rlvr {

// Discordant-pair table for two systems scored on the same examples:
// a = both correct, b = A only, c = B only, d = neither.
struct PairedOutcomes {
  long long a = 0;
  long long b = 0;
  long long c = 0;
  long long d = 0;

  long long total() const { return a + b + c + d; }
};

// Joins per-example outcomes on id. Ids present in only one run are an
// error; the message lists the first ten offenders.
PairedOutcomes pair_outcomes(const std::vector<std::pair<std::string, bool>>& run_a,
                             const std::vector<std::pair<std::string, bool>>& run_b);

enum class McNemarMethod { exact, chi2_cc };

// Two-sided p-value over the discordant counts. The exact method sums the
// binomial tail of min(b, c) at p = 1/2 over b + c trials (doubled, capped
// at 1); the chi2_cc method uses the continuity-corrected statistic
// (|b - c| - 1)^2 / (b + c) against chi-square with 1 df.
double mcnemar_test(const PairedOutcomes& paired, McNemarMethod method);

double mcnemar_exact_p(long long b, long long c);
double mcnemar_chi2_statistic(long long b, long long c);
double chi2_1df_sf(double statistic);

inline constexpr double kSignificanceLevel = 0.05;  // two-sided, 95% level

// One reasoning-length observation: token count plus whether the example
// was recalled.
struct LengthObs {
  int reasoning_tokens = 0;
  bool recalled = false;
};

struct LengthStats {
  double avg = 0.0;
  std::optional<double> avg_recalled;      // absent when no recalled examples
  std::optional<double> avg_non_recalled;  // absent when none missed
  long long n = 0;
};

LengthStats length_stats(const std::vector<LengthObs>& observations);

}  // namespace rlvr
