#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace promptcap {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed of a named sub-stream ("init", "ia", "fa", "dropout", "shuffle", ...)
// of the run seed. `index` distinguishes per-step or per-worker streams.
std::uint64_t derive_seed(std::uint64_t run_seed, std::string_view stream, std::uint64_t index = 0) noexcept;

inline Rng make_stream(std::uint64_t run_seed, std::string_view stream, std::uint64_t index = 0) {
  return Rng(derive_seed(run_seed, stream, index));
}

}  // namespace promptcap
