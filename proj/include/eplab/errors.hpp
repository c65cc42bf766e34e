#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace eplab {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
struct DomainError : Error {
  using Error::Error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};

/// Natural parameters that do not describe a normalizable Gaussian.
struct NotADensityError : Error {
  using Error::Error;
};

struct QuadratureError : Error {
  using Error::Error;
};

struct DegenerateMomentsError : Error {
  using Error::Error;
};

struct SingularHessianError : Error {
  using Error::Error;
};

struct SaddlePointError : Error {
  using Error::Error;
};

/// The shared aEP cavity is not a proper density.
struct InvalidCavityError : Error {
  using Error::Error;
};

/// A tilted-moment computation failed inside an EP pass.
struct SiteUpdateError : Error {
  SiteUpdateError(std::size_t site, const std::string& what)
      : Error("site " + std::to_string(site) + ": " + what), site_index(site) {}
  std::size_t site_index;
};

}  // namespace eplab
