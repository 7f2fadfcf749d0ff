#include "progeval/random.hpp"

#include <numeric>

namespace progeval {

std::uint64_t hash_string(std::string_view s) noexcept {
  // FNV-1a, then mixed.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(h);
}

std::size_t Rng::categorical(std::span<const double> weights) noexcept {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (weights.empty()) return 0;
  if (!(total > 0.0)) return below(weights.size());
  double target = uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    target -= weights[i];
    if (target < 0.0) return i;
  }
  // Rounding left a sliver at the end; return the last positive weight.
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return i;
  }
  return weights.size() - 1;
}

}  // namespace progeval
