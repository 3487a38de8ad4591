#pragma once

#include <stdexcept>
#include <string>

namespace calming {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dimension or precondition mismatch between arguments.
struct ContractError : Error {
  using Error::Error;
};

struct InvalidArgument : Error {
  using Error::Error;
};

struct NumericOverflow : Error {
  NumericOverflow(const std::string& where, long index)
      : Error(where + ": non-finite value at index " + std::to_string(index)), index(index) {}
  long index;
};

struct SingularityError : Error {
  SingularityError(const std::string& where, double min_eig)
      : Error(where + ": matrix not positive definite (min eigenvalue " + std::to_string(min_eig) + ")"),
        min_eigenvalue(min_eig) {}
  double min_eigenvalue;
};

struct ConcentrationUnverifiable : Error {
  ConcentrationUnverifiable(double rho, double delta3)
      : Error("concentration radius: rho = " + std::to_string(rho) + " exceeds 1/2 (delta3 = " +
              std::to_string(delta3) + ")"),
        rho(rho), delta3(delta3) {}
  double rho;
  double delta3;
};

struct SamplerStuck : Error {
  using Error::Error;
};

struct DegenerateSpectrum : Error {
  using Error::Error;
};

struct BracketExhausted : Error {
  using Error::Error;
};

struct TruncationError : Error {
  using Error::Error;
};

}  // namespace calming
