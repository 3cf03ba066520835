#pragma once

#include <stdexcept>
#include <string>

namespace evasim {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller supplied an argument outside its documented range.
class InvalidParameter : public Error {
 public:
  using Error::Error;
};

// The requested schedule/program admits no feasible solution.
class Infeasible : public Error {
 public:
  using Error::Error;
};

// Malformed input file; message carries file and line context.
class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace evasim
