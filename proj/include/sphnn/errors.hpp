#pragma once

#include <stdexcept>
#include <string>

namespace sphnn {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or binding mistakes: dimension mismatches, unbound graph slots.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// Inconsistent model, training, or data configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input files.
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite states or losses, exceeded step budgets.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Operation not defined for the model kind (e.g. a Hamiltonian of a NODE).
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

inline void require_dim(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw StructuralError(std::string(what) + ": expected dimension " + std::to_string(want) +
                          ", got " + std::to_string(got));
  }
}

}  // namespace sphnn
