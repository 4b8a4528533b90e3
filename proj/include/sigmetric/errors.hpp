#pragma once

#include <stdexcept>
#include <string>

namespace sigmetric {

// Error taxonomy mapped to CLI exit codes:
//   ConfigError -> 2, DataError (and subtypes) -> 3, TrainError -> 4,
//   UndefinedMetricError -> 5.

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or dimensionality mismatch between tensors, records, or configs.
struct DimensionError : DataError {
  using DataError::DataError;
};

// Malformed file contents; message carries file/line or offset context.
struct ParseError : DataError {
  using DataError::DataError;
};

struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A metric whose value is undefined on the given data (single-class AUC,
// empty subgroup, ...).
struct UndefinedMetricError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InternalError : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace sigmetric
