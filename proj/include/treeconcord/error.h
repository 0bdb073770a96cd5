#ifndef TREECONCORD_ERROR_H_
#define TREECONCORD_ERROR_H_

#include <stdexcept>
#include <string>

namespace treeconcord {

// Bad input: malformed files, unknown names, violated preconditions.
// The CLI maps it to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Failure while doing otherwise valid work (I/O, numerical breakdown).
// The CLI maps it to exit code 1.
class RuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace treeconcord

#endif  // TREECONCORD_ERROR_H_
