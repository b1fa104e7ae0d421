#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

namespace jedi {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape disagreement between two operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value; `field` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class OptimizerError : public Error {
 public:
  OptimizerError(std::string parameter, const std::string& message)
      : Error("parameter '" + parameter + "': " + message), parameter_(std::move(parameter)) {}
  const std::string& parameter() const noexcept { return parameter_; }

 private:
  std::string parameter_;
};

class StoreError : public Error {
 public:
  enum class Kind { io, magic, version, width, truncated, invariant };

  StoreError(Kind kind, std::filesystem::path file, std::optional<std::size_t> record,
             const std::string& message)
      : Error(format(kind, file, record, message)), kind_(kind), file_(std::move(file)),
        record_(record) {}

  Kind kind() const noexcept { return kind_; }
  const std::filesystem::path& file() const noexcept { return file_; }
  std::optional<std::size_t> record() const noexcept { return record_; }

  static const char* kind_name(Kind kind) {
    switch (kind) {
      case Kind::io: return "io error";
      case Kind::magic: return "bad magic";
      case Kind::version: return "version mismatch";
      case Kind::width: return "width mismatch";
      case Kind::truncated: return "truncated payload";
      case Kind::invariant: return "invariant violated";
    }
    return "store error";
  }

 private:
  static std::string format(Kind kind, const std::filesystem::path& file,
                            std::optional<std::size_t> record, const std::string& message) {
    std::string out = std::string(kind_name(kind)) + " in " + file.string();
    if (record) out += " at record " + std::to_string(*record);
    if (!message.empty()) out += ": " + message;
    return out;
  }

  Kind kind_;
  std::filesystem::path file_;
  std::optional<std::size_t> record_;
};

// Malformed line of a text dump; line numbers are 1-based.
class IngestError : public Error {
 public:
  IngestError(const std::filesystem::path& file, std::size_t line, const std::string& message)
      : Error(file.string() + ":" + std::to_string(line) + ": " + message), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Metric undefined for the given input (no rows, no positives).
class MetricError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class ReportError : public Error {
 public:
  using Error::Error;
};

}  // namespace jedi
