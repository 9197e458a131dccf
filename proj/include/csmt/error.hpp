#pragma once

#include <stdexcept>
#include <string>

namespace csmt {

/// Internal or data error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A stage was asked to run before its inputs exist (CLI exit code 2).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

}  // namespace csmt
