#pragma once

#include <stdexcept>
#include <string>

namespace deepstreet {

// Base for all library failures.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or raster extents that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Malformed input files, config values or request bodies.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace deepstreet
