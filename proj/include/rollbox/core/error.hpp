#ifndef ROLLBOX_CORE_ERROR_HPP_
#define ROLLBOX_CORE_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace rollbox {

// Every failure raised by the library. Messages are stable and tested.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Usage errors are distinguished so the CLI can map them to exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace rollbox

#endif  // ROLLBOX_CORE_ERROR_HPP_
