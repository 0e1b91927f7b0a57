#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pseiki {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dempster combination with conflict K >= 1 - 1e-12.
class TotalConflict : public Error {
 public:
  explicit TotalConflict(double conflict)
      : Error("total conflict (K = " + std::to_string(conflict) + ")"), conflict_(conflict) {}
  double conflict() const { return conflict_; }

 private:
  double conflict_;
};

class FrameMismatch : public Error {
 public:
  using Error::Error;
};

class BadHierarchy : public Error {
 public:
  using Error::Error;
};

class DuplicateId : public Error {
 public:
  using Error::Error;
};

class UnknownElement : public Error {
 public:
  using Error::Error;
};

class EmptyFod : public Error {
 public:
  using Error::Error;
};

class DegenerateGeometry : public Error {
 public:
  using Error::Error;
};

class NearParallel : public Error {
 public:
  explicit NearParallel(double condition)
      : Error("near-parallel constraint pair (cond = " + std::to_string(condition) + ")"),
        condition_(condition) {}
  double condition() const { return condition_; }

 private:
  double condition_;
};

class NoSceneNode : public Error {
 public:
  using Error::Error;
};

class PoseOutsideWorld : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Text-format error carrying the 1-based line number of the offending input.
class ParseError : public ConfigError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : ConfigError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace pseiki
