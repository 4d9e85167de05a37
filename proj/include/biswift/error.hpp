#ifndef BISWIFT_ERROR_HPP_
#define BISWIFT_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace biswift {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Contract violation by the caller (bad argument, wrong shape, guard refusal).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class InfeasibleTransmission : public Error {
 public:
  using Error::Error;
};

class MissingReference : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace biswift

#endif  // BISWIFT_ERROR_HPP_
