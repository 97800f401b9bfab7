#pragma once

#include <stdexcept>
#include <string>

namespace dsmopt {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or invariant-violating case documents.
struct CaseError : Error {
  using Error::Error;
};

// Bad metric inputs (non-total partition, non-positive reference, empty samples).
struct MetricError : Error {
  using Error::Error;
};

// Invalid solver/optimizer/experiment configuration. Raised before any work starts.
struct ConfigError : Error {
  using Error::Error;
};

// Filesystem and serialization failures while running experiments or emitting reports.
struct IoError : Error {
  using Error::Error;
};

}  // namespace dsmopt
