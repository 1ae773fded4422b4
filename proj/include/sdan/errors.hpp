#pragma once

#include <stdexcept>
#include <string>

namespace sdan {

// Bad shapes, incompatible hyperparameters, malformed config files.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// API misuse: non-scalar loss, zero-sized resize target, oversized shave.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing or unreadable images, empty datasets, bad checkpoint files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values encountered during training or gradient checking.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sdan
