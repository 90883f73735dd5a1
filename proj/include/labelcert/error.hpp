#pragma once

#include <stdexcept>
#include <string>

namespace labelcert {

// Bad input: malformed files, out-of-range parameters, dimension mismatches.
class ValidationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// A numerical routine failed to reach its stated tolerance.
class ConvergenceError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  kSuccess = 0,
  kValidation = 2,
  kNonConvergence = 3,
};

}  // namespace labelcert
