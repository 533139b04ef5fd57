#pragma once

#include <stdexcept>

namespace dsda {

/// A raster, label or checkpoint file does not match its on-disk format.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A configuration document or option value is invalid.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dsda
