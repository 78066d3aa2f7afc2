#pragma once

#include <stdexcept>
#include <string>

namespace dda {

/// Malformed, inconsistent or degenerate input data. Maps to CLI exit code 2.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An image whose values have no range left to normalize.
class DegenerateImageError : public DataError {
public:
    using DataError::DataError;
};

/// Invalid experiment configuration or usage. Maps to CLI exit code 1.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace dda
