#pragma once

#include <stdexcept>
#include <string>

namespace echoseg {

// Bad input values, shapes or configuration. Maps to CLI exit code 2.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Missing or unreadable/unwritable files. Maps to CLI exit code 3.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite values in logits, gradients or the loss. Maps to CLI exit code 4
// when raised from training.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace echoseg
