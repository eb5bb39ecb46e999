#ifndef PITOMO_ERRORS_HPP
#define PITOMO_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace pitomo {

/// Base for every error thrown by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or malformed input file.
class ConfigError : public Error
{
public:
  using Error::Error;
};

/// A state or map is outside the physical set beyond tolerance.
class PhysicalityError : public Error
{
public:
  using Error::Error;
};

/// A fit could not be carried out or did not converge.
class FitError : public Error
{
public:
  using Error::Error;
};

/// Input pairs do not span the Bloch ball.
class RankDeficiencyError : public Error
{
public:
  using Error::Error;
};

class IoError : public Error
{
public:
  using Error::Error;
};

} // namespace pitomo

#endif
