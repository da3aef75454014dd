#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace rllf {

// All failures carry a short machine-readable class in addition to the
// human message. The CLI maps error_class() to its single-line failure
// output; library callers can catch the concrete types.
class Error : public std::runtime_error {
 public:
  Error(std::string cls, const std::string& msg)
      : std::runtime_error(msg), class_(std::move(cls)) {}
  const std::string& error_class() const { return class_; }

 private:
  std::string class_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error("shape", msg) {}
};

struct IndexError : Error {
  explicit IndexError(const std::string& msg) : Error("index", msg) {}
};

struct DataError : Error {
  explicit DataError(const std::string& msg) : Error("data", msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error("config", msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error("io", msg) {}
};

struct ChecksumError : Error {
  explicit ChecksumError(const std::string& msg) : Error("checksum", msg) {}
};

// Violated API precondition (wrong call, not wrong data).
struct ContractError : Error {
  explicit ContractError(const std::string& msg) : Error("contract", msg) {}
};

}  // namespace rllf
