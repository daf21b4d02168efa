#pragma once

#include <stdexcept>
#include <string>

namespace bseg {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Missing file, unreadable or unwritable path.
class IoError : public Error {
public:
  using Error::Error;
};

/// Malformed header, unknown dtype, buffer/header size mismatch.
class FormatError : public Error {
public:
  using Error::Error;
};

/// Precondition violated by an argument value (bad spacing, window too large, T <= 0 ...).
class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// Two inputs that must share a voxel grid do not.
class GridMismatch : public Error {
public:
  using Error::Error;
};

/// Input carries no usable signal (all-zero spectrum, single-class labels, empty sample set).
class DegenerateInput : public Error {
public:
  using Error::Error;
};

/// A metric is undefined for the given inputs (e.g. surface distance with an empty mask).
class UndefinedResult : public Error {
public:
  using Error::Error;
};

} // namespace bseg
