#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fogml {

enum class ErrorKind {
  kDimensionMismatch,
  kNonFinite,
  kEmptyInput,
  kInvalidArgument,
  kBadMagic,
  kTruncated,
  kCountMismatch,
  kIo,
  kInfeasiblePartition,
  kSingular,
  kSchema,
  kBudgetExhausted,
  kUnfittedLabel,
};

constexpr std::string_view to_string(ErrorKind k) noexcept {
  switch (k) {
    case ErrorKind::kDimensionMismatch: return "dimension_mismatch";
    case ErrorKind::kNonFinite: return "non_finite";
    case ErrorKind::kEmptyInput: return "empty_input";
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kBadMagic: return "bad_magic";
    case ErrorKind::kTruncated: return "truncated";
    case ErrorKind::kCountMismatch: return "count_mismatch";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kInfeasiblePartition: return "infeasible_partition";
    case ErrorKind::kSingular: return "singular";
    case ErrorKind::kSchema: return "schema";
    case ErrorKind::kBudgetExhausted: return "budget_exhausted";
    case ErrorKind::kUnfittedLabel: return "unfitted_label";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what,
        std::optional<std::size_t> index = std::nullopt)
      : std::runtime_error(what), kind_(kind), index_(index) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// Offending sample/coordinate, when the error concerns one.
  std::optional<std::size_t> index() const noexcept { return index_; }

 private:
  ErrorKind kind_;
  std::optional<std::size_t> index_;
};

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

inline void require_dims(std::size_t expected, std::size_t actual,
                         std::string_view what) {
  if (expected != actual) {
    throw Error(ErrorKind::kDimensionMismatch,
                std::string(what) + ": expected " + std::to_string(expected) +
                    ", got " + std::to_string(actual));
  }
}

}  // namespace fogml
