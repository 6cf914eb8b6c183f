#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

namespace mch {

// FNV-1a, used for medium/config hashes and cache keys.
inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t seed = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a(std::string_view s,
                           std::uint64_t seed = 0xcbf29ce484222325ull) {
  return fnv1a(s.data(), s.size(), seed);
}

std::string hex64(std::uint64_t v);

// Accepts plain decimals ("0.25", "1e-4") and fractions ("1/16").
double parse_number(const std::string& s);

// 17 significant digits, round-trip safe.
std::string format_g17(double v);

// Runs fn(0..n-1). Work items must write to disjoint slots; results do not
// depend on scheduling. threads <= 1 runs serially.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace mch
