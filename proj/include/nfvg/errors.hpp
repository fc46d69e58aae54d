// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

// Float and double builds of the library live in distinct inline namespaces
// so one binary can link both.
#ifdef NFVG_DOUBLE
#define NFVG_PRECISION_NS f64
#else
#define NFVG_PRECISION_NS f32
#endif

namespace nfvg {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class SingularMatrixError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by the invertible 1x1 convolution when its weight cannot be inverted.
class NonInvertibleWeightError : public SingularMatrixError {
 public:
  using SingularMatrixError::SingularMatrixError;
};

class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// NaN / Inf observed in a quantity that must be finite.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CompatibilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nfvg
