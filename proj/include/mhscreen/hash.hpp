#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mhscreen {

// splitmix64 step. Bit-stable across platforms; used wherever a value must be
// a pure function of its inputs (stub embeddings, deterministic shuffles).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_u64(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ (0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2)));
}

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// Unbiased index in [0, n) drawn from a 64-bit generator, used for
// hand-rolled Fisher-Yates shuffles (stable across standard libraries).
template <typename Rng>
std::size_t rand_index(Rng& rng, std::size_t n) {
  // Lemire's multiply-shift rejection method.
  std::uint64_t x = rng();
  __uint128_t m = static_cast<__uint128_t>(x) * n;
  auto lo = static_cast<std::uint64_t>(m);
  if (lo < n) {
    std::uint64_t t = -n % n;
    while (lo < t) {
      x = rng();
      m = static_cast<__uint128_t>(x) * n;
      lo = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::size_t>(m >> 64);
}

template <typename Rng, typename T>
void shuffle_inplace(std::vector<T>& v, Rng& rng) {
  if (v.size() < 2) return;
  for (std::size_t i = v.size() - 1; i > 0; --i) {
    std::size_t j = rand_index(rng, i + 1);
    std::swap(v[i], v[j]);
  }
}

} // namespace mhscreen
