#pragma once

#include <stdexcept>
#include <string>

namespace ivsg {

/// Malformed serialized data. `path()` names the offending field, e.g.
/// `ground_truth[2].subject_tube.t_end`.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& message, std::string path = {})
      : std::runtime_error(path.empty() ? message : path + ": " + message),
        path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// A caller violated a precondition (bad index, mismatched dimensions, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// NaN/Inf encountered in model inputs, outputs or losses.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Scene generation exhausted its retry budget.
class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ivsg
