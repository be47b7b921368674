#pragma once

#include <stdexcept>
#include <string>

namespace embgeom {

// Input violates an operation's precondition (shape, range, label set).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A file or record could not be parsed. `location` names the file, line,
// record index or sentence that failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(std::string location, const std::string& message)
      : std::runtime_error(location + ": " + message), location_(std::move(location)) {}

  const std::string& location() const noexcept { return location_; }

 private:
  std::string location_;
};

class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace embgeom
