#pragma once

#include <stdexcept>
#include <string>

namespace spnerf {

// Error categories map to CLI exit codes: Io -> 2, Numeric -> 3, Validation -> 4.
class Error : public std::runtime_error {
 public:
  enum class Kind { Validation, Io, Numeric };

  Error(Kind kind, std::string what) : std::runtime_error(std::move(what)), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

#define SPNERF_DEFINE_ERROR(Name, Category)                        \
  class Name : public Error {                                      \
   public:                                                         \
    explicit Name(const std::string& msg = #Name)                  \
        : Error(Error::Kind::Category, std::string(#Name ": ") + msg) {} \
  }

SPNERF_DEFINE_ERROR(TooFewPoints, Validation);
SPNERF_DEFINE_ERROR(NonFiniteInput, Validation);
SPNERF_DEFINE_ERROR(DegenerateNeighborhood, Numeric);
SPNERF_DEFINE_ERROR(SampleCountExceedsPoints, Validation);
SPNERF_DEFINE_ERROR(NonUnitNormal, Validation);
SPNERF_DEFINE_ERROR(EmptyGraph, Validation);
SPNERF_DEFINE_ERROR(OutOfBounds, Validation);
SPNERF_DEFINE_ERROR(DegenerateRay, Numeric);
SPNERF_DEFINE_ERROR(EmptyBatch, Validation);
SPNERF_DEFINE_ERROR(NonFiniteLoss, Numeric);
SPNERF_DEFINE_ERROR(ZeroVector, Validation);
SPNERF_DEFINE_ERROR(EmptySuperpoint, Validation);
SPNERF_DEFINE_ERROR(DegenerateField, Numeric);
SPNERF_DEFINE_ERROR(TooFewSuperpoints, Validation);
SPNERF_DEFINE_ERROR(LengthMismatch, Validation);
SPNERF_DEFINE_ERROR(LabelOutOfRange, Validation);
SPNERF_DEFINE_ERROR(EmptySpec, Validation);
SPNERF_DEFINE_ERROR(PrototypeSeparationFailure, Numeric);
SPNERF_DEFINE_ERROR(MalformedHeader, Io);
SPNERF_DEFINE_ERROR(UnsupportedEncoding, Io);
SPNERF_DEFINE_ERROR(MissingProperty, Io);
SPNERF_DEFINE_ERROR(BadMagic, Io);
SPNERF_DEFINE_ERROR(FileNotFound, Io);
SPNERF_DEFINE_ERROR(ConfigError, Validation);

#undef SPNERF_DEFINE_ERROR

}  // namespace spnerf
