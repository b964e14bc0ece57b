#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace promptcap {

#ifdef PROMPTCAP_SINGLE_PRECISION
using real = float;
#else
using real = double;
#endif

template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixT<real>;
using Vector = VectorT<real>;
using Mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

// Special token ids shared by the vocabulary and the decoder.
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr int kNumSpecial = 4;

enum class ErrorKind {
  argument,     // bad call / usage
  dimension,
  bound,
  degenerate_vector,
  empty_input,
  masking,
  undefined_mean,
  vocabulary,
  capacity,
  data,
  numeric,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

std::string_view to_string(ErrorKind kind) noexcept;

// CLI exit status for an error: 1 usage, 2 data, 3 numeric.
int exit_code(ErrorKind kind) noexcept;

// 64-bit FNV-1a, used for fingerprints and checkpoint hashes.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state = 0xcbf29ce484222325ULL) noexcept;
std::string to_hex(std::uint64_t value);

}  // namespace promptcap
