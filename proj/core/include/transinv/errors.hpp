#pragma once

#include <stdexcept>
#include <string>

namespace transinv {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor/layer shape disagreement. The message names the offending dimension.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// An architecture document failed validation; path() is a JSON path such as
// "$.conv_blocks[1].padding".
class ArchError : public Error {
 public:
  ArchError(std::string path, const std::string& what)
      : Error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

// Pearson correlation (or a similar statistic) is undefined for the input,
// e.g. one of the series has zero variance.
class UndefinedResult : public Error {
 public:
  using Error::Error;
};

}  // namespace transinv
