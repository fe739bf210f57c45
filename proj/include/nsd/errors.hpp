#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nsd {

class EmptyCorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EncodingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by an optimizer run when the loss stops being finite.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(std::size_t iteration)
      : std::runtime_error("loss became non-finite at t=" + std::to_string(iteration)),
        iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

}  // namespace nsd
