#pragma once

#include <complex>
#include <stdexcept>
#include <string>

namespace spindyn {

using cplx = std::complex<double>;

/// Invalid user input: bad extents, malformed tree strings, incompatible run configs.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A propagation or estimation step that could not meet its numerical contract.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace spindyn
