#pragma once

#include <stdexcept>
#include <string>

namespace l2t {

// Base for everything the library throws on purpose.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor extents disagree with what an operation requires.
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error("shape error: " + msg) {}
};

// A NaN/Inf showed up in a value that must stay finite. Names the op.
struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error("numeric failure: " + msg) {}
};

// Bad file contents (IDX, checkpoints). Messages carry byte offsets where known.
struct DataError : Error {
    explicit DataError(const std::string& msg) : Error("data error: " + msg) {}
};

// Invalid experiment configuration; carries line/field diagnostics.
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

// Metric preconditions violated (empty batch, single-class AUC input, ...).
struct MetricError : Error {
    explicit MetricError(const std::string& msg) : Error("metric error: " + msg) {}
};

} // namespace l2t
