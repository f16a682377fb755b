#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ber {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Corpus/manifest/snapshot read failures. row is 1-based, 0 when not row-specific.
class LoadError : public std::runtime_error {
public:
  LoadError(const std::string& what, std::size_t row = 0)
      : std::runtime_error(row ? "row " + std::to_string(row) + ": " + what : what), row_(row) {}
  std::size_t row() const { return row_; }

private:
  std::size_t row_;
};

class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class RoutingError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace ber
