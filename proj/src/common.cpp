#include "dmdd/common.hpp"

#include <cmath>

namespace dmdd {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::EmptySupport: return "empty-support";
    case ErrorCode::OutOfWindow: return "out-of-window";
    case ErrorCode::ZeroDenominator: return "zero-denominator";
    case ErrorCode::Infeasible: return "infeasible";
    case ErrorCode::Factorization: return "factorization";
    case ErrorCode::SingularKernel: return "singular-kernel";
    case ErrorCode::Io: return "io";
    case ErrorCode::VersionMismatch: return "version-mismatch";
    case ErrorCode::TruncatedPayload: return "truncated-payload";
    case ErrorCode::Integrity: return "integrity";
    case ErrorCode::LengthMismatch: return "length-mismatch";
    case ErrorCode::ArchitectureMismatch: return "architecture-mismatch";
    case ErrorCode::Checksum: return "checksum";
    case ErrorCode::NonFinite: return "non-finite";
    case ErrorCode::MissingPath: return "missing-path";
  }
  return "unknown";
}

CVector complex_normal_vector(Rng& rng, Eigen::Index n, double variance) {
  CVector v(n);
  for (Eigen::Index k = 0; k < n; ++k) v[k] = complex_normal(rng, variance);
  return v;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                          std::uint64_t counter) {
  // The packed word is injective for stream < 2^24 and counter < 2^40, and
  // splitmix64 is a bijection, so children of one master never collide.
  const std::uint64_t packed = (stream << 40) ^ (counter & ((1ULL << 40) - 1));
  return splitmix64(splitmix64(master) ^ packed);
}

double to_db(double linear) { return 10.0 * std::log10(linear); }
double from_db(double db) { return std::pow(10.0, db / 10.0); }

bool all_finite(const CVector& v) {
  for (Eigen::Index k = 0; k < v.size(); ++k)
    if (!std::isfinite(v[k].real()) || !std::isfinite(v[k].imag())) return false;
  return true;
}

}  // namespace dmdd
