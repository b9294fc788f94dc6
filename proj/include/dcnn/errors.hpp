#ifndef DCNN_ERRORS_HPP
#define DCNN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace dcnn {

// Invalid configuration: bad shapes, bad hyperparameters, malformed specs.
// Maps to CLI exit code 1.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Problems with user-supplied data: missing files, bad CSV rows, corrupt
// images. Maps to CLI exit code 2.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Checkpoint file problems, each condition its own type so callers can
// distinguish a stale format from a damaged file.
class CheckpointError : public DataError {
public:
    explicit CheckpointError(const std::string& what) : DataError(what) {}
};

class CheckpointFormatError : public CheckpointError {
public:
    explicit CheckpointFormatError(const std::string& what) : CheckpointError(what) {}
};

class CheckpointVersionError : public CheckpointError {
public:
    explicit CheckpointVersionError(const std::string& what) : CheckpointError(what) {}
};

class CheckpointTruncatedError : public CheckpointError {
public:
    explicit CheckpointTruncatedError(const std::string& what) : CheckpointError(what) {}
};

class CheckpointLayerKindError : public CheckpointError {
public:
    explicit CheckpointLayerKindError(const std::string& what) : CheckpointError(what) {}
};

} // namespace dcnn

#endif
