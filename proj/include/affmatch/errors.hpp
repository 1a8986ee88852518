#pragma once

#include <stdexcept>
#include <string>

namespace affmatch {

// Base class for every error the library raises on purpose.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Operand shapes are incompatible; the message names both shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// An API contract was violated (e.g. backward() from a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

// A container that must be non-empty is empty.
class EmptyInputError : public Error {
 public:
  using Error::Error;
};

// A point falls outside the target voxel grid; the message lists the point.
class OutOfBoundsError : public Error {
 public:
  using Error::Error;
};

// Two voxel masks live on different grids.
class GridError : public Error {
 public:
  using Error::Error;
};

// Invalid or infeasible configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A feature row that must be normalizable (or comparable by cosine) is zero.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

// File or serialization failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace affmatch
