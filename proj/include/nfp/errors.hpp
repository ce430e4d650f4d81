#pragma once

#include <stdexcept>
#include <string>

namespace nfp {

// Shape or width mismatch between operands; message names both shapes.
class DimensionError : public std::invalid_argument {
 public:
  explicit DimensionError(const std::string& msg) : std::invalid_argument(msg) {}
};

// A vector whose L2 norm is below the normalization floor (1e-12).
class DegenerateNormError : public std::runtime_error {
 public:
  explicit DegenerateNormError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed on-disk data: bad magic, truncated stream, count mismatch.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Labeled data not separated by the supplied hyperplane.
class SeparabilityError : public std::runtime_error {
 public:
  explicit SeparabilityError(const std::string& msg) : std::runtime_error(msg) {}
};

// Input lying exactly on a decision hyperplane, where sign algebra is undefined.
class BoundaryError : public std::runtime_error {
 public:
  explicit BoundaryError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace nfp
