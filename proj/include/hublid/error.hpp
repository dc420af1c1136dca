#pragma once

#include <stdexcept>
#include <string>

namespace hublid {

// Invalid input data or arguments. The CLI maps this to exit status 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A file could not be opened, read or written. The CLI maps this to exit status 2.
class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed content at a specific 1-based row of an input file.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t row, const std::string& what)
      : Error(source + ":" + std::to_string(row) + ": " + what), row_(row) {}

  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

}  // namespace hublid
