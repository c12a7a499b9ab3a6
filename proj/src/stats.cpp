#include "rlvr/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "rlvr/common.hpp"

namespace rlvr {

PairedOutcomes pair_outcomes(const std::vector<std::pair<std::string, bool>>& run_a,
                             const std::vector<std::pair<std::string, bool>>& run_b) {
  std::map<std::string, bool> by_id_b;
  for (const auto& [id, ok] : run_b) {
    if (!by_id_b.emplace(id, ok).second) {
      throw DataError("duplicate example id in run B: " + id);
    }
  }
  std::map<std::string, bool> by_id_a;
  for (const auto& [id, ok] : run_a) {
    if (!by_id_a.emplace(id, ok).second) {
      throw DataError("duplicate example id in run A: " + id);
    }
  }

  std::vector<std::string> unmatched;
  for (const auto& [id, ok] : by_id_a) {
    if (!by_id_b.count(id)) unmatched.push_back(id);
  }
  for (const auto& [id, ok] : by_id_b) {
    if (!by_id_a.count(id)) unmatched.push_back(id);
  }
  if (!unmatched.empty()) {
    std::ostringstream os;
    os << "runs do not share an example-id set; " << unmatched.size() << " unmatched id(s):";
    for (size_t i = 0; i < unmatched.size() && i < 10; ++i) os << " " << unmatched[i];
    throw DataError(os.str());
  }

  PairedOutcomes out;
  for (const auto& [id, a_ok] : by_id_a) {
    bool b_ok = by_id_b.at(id);
    if (a_ok && b_ok) ++out.a;
    else if (a_ok) ++out.b;
    else if (b_ok) ++out.c;
    else ++out.d;
  }
  return out;
}

double mcnemar_exact_p(long long b, long long c) {
  if (b < 0 || c < 0) throw DataError("negative discordant counts");
  const long long n = b + c;
  if (n == 0) return 1.0;
  const long long k = std::min(b, c);
  // tail sum of Binomial(n, 1/2); C(n, i) built by the exact ratio recurrence
  double coeff = 1.0;
  double tail = 1.0;  // i = 0 term, x 2^-n applied at the end
  for (long long i = 0; i < k; ++i) {
    coeff = coeff * static_cast<double>(n - i) / static_cast<double>(i + 1);
    tail += coeff;
  }
  double p = 2.0 * tail * std::exp2(static_cast<double>(-n));
  return std::min(1.0, p);
}

double mcnemar_chi2_statistic(long long b, long long c) {
  if (b + c < 1) throw DataError("chi2_cc needs b + c >= 1; use the exact method");
  double diff = std::max(0.0, std::fabs(static_cast<double>(b - c)) - 1.0);
  return diff * diff / static_cast<double>(b + c);
}

double chi2_1df_sf(double statistic) {
  if (statistic <= 0.0) return 1.0;
  return std::erfc(std::sqrt(statistic / 2.0));
}

double mcnemar_test(const PairedOutcomes& paired, McNemarMethod method) {
  if (method == McNemarMethod::exact) return mcnemar_exact_p(paired.b, paired.c);
  return chi2_1df_sf(mcnemar_chi2_statistic(paired.b, paired.c));
}

LengthStats length_stats(const std::vector<LengthObs>& observations) {
  if (observations.empty()) throw DataError("length_stats: empty record list");
  LengthStats out;
  out.n = static_cast<long long>(observations.size());
  double sum = 0.0, sum_rec = 0.0, sum_non = 0.0;
  long long n_rec = 0, n_non = 0;
  for (const auto& obs : observations) {
    sum += obs.reasoning_tokens;
    if (obs.recalled) {
      sum_rec += obs.reasoning_tokens;
      ++n_rec;
    } else {
      sum_non += obs.reasoning_tokens;
      ++n_non;
    }
  }
  out.avg = sum / static_cast<double>(out.n);
  if (n_rec > 0) out.avg_recalled = sum_rec / static_cast<double>(n_rec);
  if (n_non > 0) out.avg_non_recalled = sum_non / static_cast<double>(n_non);
  return out;
}

}  // namespace rlvr
