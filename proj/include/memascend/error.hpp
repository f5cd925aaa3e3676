// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace memascend {

enum class ErrorCode {
    invalid_argument,
    out_of_memory,
    overflow,
    lifecycle,
    unknown_region,
    pool_exhausted,
    size_violation,
    already_checked_out,
    not_found,
    storage_full,
    device_error,
    capability,
    io_error,
    alignment,
    busy,
    uncalibrated,
    bad_config,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

}  // namespace memascend
