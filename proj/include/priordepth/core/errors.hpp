#pragma once

#include <stdexcept>
#include <string>

namespace priordepth {

// Bad flags, bad config keys, unusable argument values. CLI exit code 2.
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Broken or incompatible on-disk data. CLI exit code 3.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace priordepth
