#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace kdehmm {

enum class ErrorKind {
  kInvalidArgument,
  kDegenerateSample,
  kSequenceTooShort,
  kNumericalFailure,
  kEmptyState,
  kNoCycleStructure,
  kRankDeficient,
  kParse,
  kIo,
  kConfig,
};

const char* to_string(ErrorKind kind);

// Library-wide exception. `index` carries the time step, iteration or line
// number the failure refers to, when there is one.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what,
        std::optional<std::size_t> index = std::nullopt)
      : std::runtime_error(what), kind_(kind), index_(index) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::optional<std::size_t> index() const noexcept { return index_; }

 private:
  ErrorKind kind_;
  std::optional<std::size_t> index_;
};

}  // namespace kdehmm
