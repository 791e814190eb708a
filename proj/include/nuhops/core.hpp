#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace nuhops {

using cplx = std::complex<double>;
using CVec = std::vector<cplx>;

inline constexpr cplx I{0.0, 1.0};

// Error hierarchy. The CLI maps these onto exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct TruncationCapError : Error {
    using Error::Error;
};

// Zeroth hierarchy slice collapsed to (numerically) zero norm.
struct DegenerateTrajectory : Error {
    using Error::Error;
};

struct NumericalError : Error {
    using Error::Error;
};

}  // namespace nuhops
