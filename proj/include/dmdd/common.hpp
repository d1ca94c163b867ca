#pragma once

#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace dmdd {

using cplx = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using RMatrix = Eigen::MatrixXd;

/// Speed of light used for all range/delay conversions [m/s].
inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kPi = 3.14159265358979323846;

enum class ErrorCode {
  InvalidArgument,
  EmptySupport,
  OutOfWindow,
  ZeroDenominator,
  Infeasible,
  Factorization,
  SingularKernel,
  Io,
  VersionMismatch,
  TruncatedPayload,
  Integrity,
  LengthMismatch,
  ArchitectureMismatch,
  Checksum,
  NonFinite,
  MissingPath,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

using Rng = std::mt19937_64;

/// Draws from CN(0, variance): real and imaginary parts are independent with
/// variance `variance / 2` each.
inline cplx complex_normal(Rng& rng, double variance) {
  std::normal_distribution<double> n(0.0, 1.0);
  const double s = std::sqrt(variance / 2.0);
  const double re = n(rng);
  const double im = n(rng);
  return {s * re, s * im};
}

/// Length-n vector with i.i.d. CN(0, variance) entries.
CVector complex_normal_vector(Rng& rng, Eigen::Index n, double variance);

/// SplitMix64 finalizer; a bijection on 64-bit words.
std::uint64_t splitmix64(std::uint64_t x);

/// Counter-based child seed. For a fixed master seed, distinct
/// (stream, counter) pairs with counter < 2^40 and stream < 2^24 map to
/// distinct seeds.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                          std::uint64_t counter);

double to_db(double linear);
double from_db(double db);

bool all_finite(const CVector& v);

}  // namespace dmdd
