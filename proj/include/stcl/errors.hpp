#pragma once

#include <stdexcept>
#include <string>

namespace stcl {

// Malformed or incompatible input data: bad files, shape disagreements between
// a model and the series it is asked to run on.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor shapes that do not line up for an operator.
class ShapeError : public DataError {
public:
    using DataError::DataError;
};

// Bad configuration keys or values.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// An internal invariant failed. Always a bug.
class InvariantError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace stcl
