#pragma once

#include <stdexcept>
#include <string>

namespace msihist {

// Bad input: malformed files, violated preconditions, inconsistent shapes.
// The CLI maps this to exit code 1.
class InvalidInput : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Failure while doing valid work: I/O errors, divergence during training.
// The CLI maps this to exit code 2.
class RuntimeFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string &msg) {
    if (!cond) throw InvalidInput(msg);
}

} // namespace msihist
