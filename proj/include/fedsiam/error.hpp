#pragma once

#include <stdexcept>
#include <string>

namespace fedsiam {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor shapes that do not fit the operation.
class DimensionError : public Error {
public:
    using Error::Error;
};

// A class label outside [0, C).
class LabelError : public Error {
public:
    using Error::Error;
};

// Zero-norm vector or model where a direction is required, or a batch too small for batch statistics.
class DegenerateError : public Error {
public:
    using Error::Error;
};

// NaN or Inf reached a place that requires finite values.
class NumericError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class AggregationError : public Error {
public:
    using Error::Error;
};

// Missing or unreadable input files.
class IngestionError : public Error {
public:
    using Error::Error;
};

// Input files whose contents do not follow the expected layout.
class FormatError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace fedsiam
