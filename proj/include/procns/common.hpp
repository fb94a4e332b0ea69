#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace procns {

// Exit-code categories surfaced by the CLI: 2 config, 3 data, 4 runtime.
enum class ErrorKind : int { Config = 2, Data = 3, Runtime = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(ErrorKind::Config, msg) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(ErrorKind::Data, msg) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error(ErrorKind::Runtime, msg) {}
};

// No pixel of any class is labeled; partial cross-entropy is undefined.
class ZeroLabeledError : public DataError {
 public:
  explicit ZeroLabeledError(const std::string& msg) : DataError(msg) {}
};

// A prediction-buffer finalize or plugin ingestion found samples without data.
class MissingSampleError : public DataError {
 public:
  MissingSampleError(const std::string& msg, std::vector<std::string> ids)
      : DataError(msg), ids_(std::move(ids)) {}
  const std::vector<std::string>& ids() const { return ids_; }

 private:
  std::vector<std::string> ids_;
};

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

}  // namespace procns
