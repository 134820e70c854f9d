#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace lad {

// Input violates a documented contract (shape, range, schema).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Validation failure attributable to one named field of a record.
class FieldError : public ValidationError {
public:
    FieldError(std::string field, const std::string& what)
        : ValidationError(what), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

// Caller asked for something the operation does not support.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Filesystem or format problem while reading/writing artifacts.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace lad
