#pragma once

#include <stdexcept>
#include <string>

namespace opsim {

// Base class for everything this library throws.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class EmptyRow : public Error {
public:
    using Error::Error;
};

class AsymmetricInput : public Error {
public:
    using Error::Error;
};

class Overflow : public Error {
public:
    using Error::Error;
};

// Input data could not be parsed; carries the 1-based line number.
class ParseError : public Error {
public:
    ParseError(const std::string& msg, long line)
        : Error(msg + " (line " + std::to_string(line) + ")"), line_(line) {}
    long line() const { return line_; }

private:
    long line_;
};

class EmptyFile : public Error {
public:
    using Error::Error;
};

class MissingColumn : public Error {
public:
    using Error::Error;
};

class EmptyDataset : public Error {
public:
    using Error::Error;
};

class InsufficientData : public Error {
public:
    using Error::Error;
};

class NonConvergence : public Error {
public:
    using Error::Error;
};

class NonPositiveOmega : public Error {
public:
    using Error::Error;
};

class MatrixKindMismatch : public Error {
public:
    using Error::Error;
};

class EmptyTrajectory : public Error {
public:
    using Error::Error;
};

class MissingSnapshots : public Error {
public:
    using Error::Error;
};

// A stated precondition does not hold (e.g. zero diagonal entries where a
// positive diagonal is required).
class PreconditionError : public Error {
public:
    using Error::Error;
};

// Loaded data failed an integrity re-check (row sums, symmetry, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

// Experiment configuration rejected; message aggregates every problem found.
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace opsim
