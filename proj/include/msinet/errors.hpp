#pragma once

#include <stdexcept>
#include <string>

namespace msinet {

// Tensor or layer geometry violation (bad dims, mismatched shapes).
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid argument values: bad layer spec, non-binary label, bad config.
class ValueError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed text or image input (manifest rows, PPM headers).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tape misuse: backward on an already-consumed tape.
class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss or gradient encountered during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A metric's denominator is zero (names the degenerate quantity).
class UndefinedMetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { BadMagic, BadVersion, Truncated, ShapeMismatch, BadData };

  CheckpointError(Kind kind, const std::string& msg)
      : std::runtime_error(msg), kind(kind) {}

  Kind kind;
};

}  // namespace msinet
