#include "promptcap/core.hpp"

#include <cstdio>

namespace promptcap {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::argument: return "argument";
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::bound: return "bound";
    case ErrorKind::degenerate_vector: return "degenerate-vector";
    case ErrorKind::empty_input: return "empty-input";
    case ErrorKind::masking: return "masking";
    case ErrorKind::undefined_mean: return "undefined-mean";
    case ErrorKind::vocabulary: return "vocabulary";
    case ErrorKind::capacity: return "capacity";
    case ErrorKind::data: return "data";
    case ErrorKind::numeric: return "numeric";
  }
  return "unknown";
}

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::argument: return 1;
    case ErrorKind::numeric:
    case ErrorKind::degenerate_vector:
    case ErrorKind::undefined_mean: return 3;
    default: return 2;
  }
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state) noexcept {
  for (unsigned char c : bytes) {
    state ^= c;
    state *= 0x100000001b3ULL;
  }
  return state;
}

std::string to_hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace promptcap

#include "promptcap/rng.hpp"

namespace promptcap {

std::uint64_t derive_seed(std::uint64_t run_seed, std::string_view stream, std::uint64_t index) noexcept {
  return splitmix64(splitmix64(run_seed ^ fnv1a64(stream)) + splitmix64(index));
}

}  // namespace promptcap
