// Copyright 2026 The compexp Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string_view>
#include <vector>

// Deterministic randomness. All draws go through hand-rolled transforms of
// mt19937_64 output so results do not depend on the standard library's
// distribution implementations. Derived seeds come from an FNV-1a mix of a
// base seed and a purpose tag, never from std::hash.

namespace compexp {

inline std::uint64_t mix_u64(std::uint64_t h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xff;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag,
                                 std::uint64_t index = 0) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  h = mix_u64(h, base);
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  h = mix_u64(h, index);
  // splitmix64 finalizer for avalanche
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ull;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebull;
  h ^= h >> 31;
  return h;
}

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

/// Unbiased integer in [0, n) via rejection sampling.
inline std::uint64_t bounded_uint(std::mt19937_64& rng, std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("bounded_uint: empty range");
  const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
  const std::uint64_t limit = max - max % n;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return x % n;
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform_real(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_real(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform_real(rng);
}

/// Standard normal via Box-Muller (no cached second value: keeps the stream
/// position a pure function of the number of calls).
inline double normal(std::mt19937_64& rng) {
  double u1 = uniform_real(rng);
  while (u1 <= 0.0) u1 = uniform_real(rng);
  const double u2 = uniform_real(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

/// Fisher-Yates shuffle.
template <typename T>
void shuffle_vec(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(bounded_uint(rng, i));
    std::swap(v[i - 1], v[j]);
  }
}

/// Draws an index from an (unnormalized, nonnegative) weight vector.
inline std::size_t sample_index(const std::vector<double>& weights, std::mt19937_64& rng) {
  if (weights.empty()) throw std::invalid_argument("sample_index: empty weights");
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw std::invalid_argument("sample_index: nonpositive total weight");
  const double u = uniform_real(rng) * total;
  double cum = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    cum += weights[i];
    if (u < cum) return i;
  }
  return weights.size() - 1;  // guard against rounding at the top end
}

/// Uniform subset of k distinct indices from [0, n), returned sorted.
std::vector<std::size_t> sample_subset(std::size_t n, std::size_t k, std::mt19937_64& rng);

}  // namespace compexp
