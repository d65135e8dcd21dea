#pragma once

#include <stdexcept>

namespace uq {

// dimension mismatch between tensor operands
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// argument outside its contract (bad probability, empty set, L too large, ...)
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// malformed csv/json input
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// NaN/Inf escaping a computation, e.g. training divergence
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace uq
