#pragma once
// Shared unit helpers and the error taxonomy used across the library.
//
// Internal convention: angular frequencies in rad/s, times in seconds.
// External documents (configs, schedules, CSV) use MHz and ns; conversions
// happen at those boundaries only.

#include <complex>
#include <stdexcept>
#include <string>

namespace bht {

using cplx = std::complex<double>;

inline constexpr double two_pi = 6.283185307179586476925286766559;

// Angular frequency (rad/s) from a linear frequency in MHz, and back.
inline constexpr double mhz(double f) { return two_pi * f * 1.0e6; }
inline constexpr double to_mhz(double w) { return w / (two_pi * 1.0e6); }

// Seconds from nanoseconds / microseconds, and back.
inline constexpr double ns(double t) { return t * 1.0e-9; }
inline constexpr double us(double t) { return t * 1.0e-6; }
inline constexpr double to_ns(double t) { return t * 1.0e9; }

// Inputs outside an operation's documented domain.
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An algorithm failed to reach its accuracy target (diagnostics in message).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A request exceeds a configured resource cap.
struct CapabilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The model's assumptions do not hold for the supplied state.
struct ValidityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A well-posed question with no unique answer (e.g. degenerate target).
struct AmbiguityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A document (config, schedule, matrix file) violates its contract; the
// message lists every violation found, not just the first.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace bht
