#pragma once

#include <stdexcept>
#include <string>

namespace hz {

// Base for everything thrown by this library. The CLI maps subtrees of this
// hierarchy onto exit codes: usage/config problems exit 2, unreadable or
// inconsistent data exits 3, failed verification runs exit 4.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Caller asked for something contradictory or out of contract.
struct ConfigError : Error { using Error::Error; };
struct DimensionError : ConfigError { using ConfigError::ConfigError; };
struct StateError : ConfigError { using ConfigError::ConfigError; };
struct LayoutError : ConfigError { using ConfigError::ConfigError; };
struct SymmetryError : ConfigError { using ConfigError::ConfigError; };
struct BatchError : ConfigError { using ConfigError::ConfigError; };

// Input bytes or stored artifacts are wrong or missing.
struct DataError : Error { using Error::Error; };
struct FormatError : DataError { using DataError::DataError; };
struct LengthError : DataError { using DataError::DataError; };
struct ConsistencyError : DataError { using DataError::DataError; };
struct StorageError : DataError { using DataError::DataError; };
struct IndexError : DataError { using DataError::DataError; };

// A verification command ran fine but the property under test failed.
struct VerificationError : Error { using Error::Error; };

}  // namespace hz
