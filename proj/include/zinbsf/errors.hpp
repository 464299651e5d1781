#pragma once

#include <stdexcept>
#include <string>

namespace zinbsf {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A numeric argument outside the support of a density or kernel.
class DomainError : public Error {
public:
  using Error::Error;
};

/// Malformed or inconsistent user input (files, ids, configuration).
class InputError : public Error {
public:
  using Error::Error;
};

/// Shapes of vectors/matrices/bases that do not fit together.
class StructuralError : public Error {
public:
  using Error::Error;
};

/// Non-finite log-posterior, failed factorisation and the like.
class NumericalError : public Error {
public:
  using Error::Error;
};

} // namespace zinbsf
