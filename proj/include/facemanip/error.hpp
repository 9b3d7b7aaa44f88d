#pragma once

#include <stdexcept>
#include <string>

namespace facemanip {

// Error categories double as CLI exit codes.
enum class errc : int {
  config = 2,
  data = 3,
  dependency = 4,
  numerical = 5,
};

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  errc code() const noexcept { return code_; }
  int exit_code() const noexcept { return static_cast<int>(code_); }

 private:
  errc code_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(errc::config, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(errc::data, what) {}
};

// API misuse (shape/range contract violations). Reported as data errors at
// the CLI boundary.
struct ContractError : Error {
  explicit ContractError(const std::string& what) : Error(errc::data, what) {}
};

struct DependencyError : Error {
  explicit DependencyError(const std::string& what) : Error(errc::dependency, what) {}
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& what) : Error(errc::numerical, what) {}
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractError(what);
}

}  // namespace facemanip
