#pragma once

#include <stdexcept>
#include <string>

namespace setchoice {

// Error taxonomy, mirrored by the CLI exit codes:
//   ConfigError  -> 2  (bad flags, bad config file, unknown keys)
//   DataError    -> 3  (schema violations, corrupt files, invalid values)
//   ShapeError   -> 3  (dimension mismatches between model and data)
//   NumericError -> 4  (divergence, non-finite values, singular systems)
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace setchoice
