#pragma once

#include <stdexcept>
#include <string>

namespace ernet {

// Every failure raised by the engine derives from Error so callers can catch
// one type; the subclasses tell the CLI which exit code to use.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

class EvalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Raised by the trainer when the loss stops being finite.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace ernet
