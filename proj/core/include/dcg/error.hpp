#pragma once
#include <stdexcept>
#include <string>

namespace dcg {

// All library failures surface as one of these. The CLI maps them onto
// exit codes: config/schema/data problems exit 2, numeric failures exit 1.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error("shape: " + msg) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error("numeric: " + msg) {}
};

struct SchemaError : Error {
  explicit SchemaError(const std::string& msg) : Error("schema: " + msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error("config: " + msg) {}
};

struct DataError : Error {
  explicit DataError(const std::string& msg) : Error("data: " + msg) {}
};

}  // namespace dcg
