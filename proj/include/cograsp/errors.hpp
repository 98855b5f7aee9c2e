#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cograsp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input violates a documented precondition or schema (CLI exit code 2).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class EmptyGraspSet : public Error {
 public:
  EmptyGraspSet() : Error("no grasp configuration survived filtering") {}
};

class SeedInCollision : public Error {
 public:
  using Error::Error;
};

/// Consecutive regions `index` and `index + 1` do not intersect.
class BrokenChain : public Error {
 public:
  explicit BrokenChain(std::size_t index, const std::string& what_part = "")
      : Error("regions " + std::to_string(index) + " and " + std::to_string(index + 1) +
              " do not intersect" + (what_part.empty() ? "" : " (" + what_part + ")")),
        index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// Start or goal pose is not covered by the first or last region.
class UncoveredEndpoint : public Error {
 public:
  using Error::Error;
};

class FormatVersionMismatch : public Error {
 public:
  using Error::Error;
};

class CorruptFile : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class DegenerateInput : public Error {
 public:
  using Error::Error;
};

class DegenerateLabels : public Error {
 public:
  using Error::Error;
};

class GenerationFailed : public Error {
 public:
  using Error::Error;
};

}  // namespace cograsp
