#pragma once

#include <stdexcept>
#include <string>

namespace koopred {

// Error taxonomy shared by the C++ core, the C API status codes and the
// CLI exit codes: configuration/usage problems vs. bad data vs. numeric
// failures discovered mid-computation vs. file I/O.
class Error : public std::runtime_error {
 public:
  enum class Kind { config, data, numeric, io };

  Error(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(Kind::config, msg) {}
};

struct DataError : Error {
  explicit DataError(const std::string& msg) : Error(Kind::data, msg) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(Kind::numeric, msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(Kind::io, msg) {}
};

}  // namespace koopred
