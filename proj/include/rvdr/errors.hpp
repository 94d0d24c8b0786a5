#pragma once

#include <stdexcept>
#include <string>

namespace rvdr {

// Exit-code mapping lives in the CLI: ConfigError -> 2, DataError -> 3,
// DivergenceError -> 4, HashMismatchError -> 5.

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

struct HashMismatchError : std::runtime_error {
    explicit HashMismatchError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace rvdr
