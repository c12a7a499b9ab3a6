#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rlvr {

// Error categories map onto CLI exit codes (usage=1, backend=2, data=3).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BackendError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// FNV-1a, used for config hashes and mock-fixture prompt keys.
std::uint64_t fnv1a64(std::string_view data);
std::string fnv1a64_hex(std::string_view data);

// Uniform double in [0, 1) from the top 53 bits of the engine output.
inline double uniform_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Box-Muller; avoids std::normal_distribution so streams are identical
// across standard-library implementations.
double normal_draw(std::mt19937_64& rng, double mean, double stddev);

// Derives an independent stream seed from a master seed and a stream tag.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

std::string trim(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
int count_whitespace_tokens(std::string_view s);

// Shortest round-trip formatting for doubles (deterministic output).
std::string format_double(double v);

double now_ms();

}  // namespace rlvr
