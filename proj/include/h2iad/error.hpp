#pragma once

#include <stdexcept>
#include <string>

namespace h2iad {

// Malformed input files, missing categories, invalid sequences.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or model shape disagreement.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite loss or intermediate value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid run/train configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Checkpoint container corrupted or inconsistent with its manifest.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace h2iad
