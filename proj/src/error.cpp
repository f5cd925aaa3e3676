// SPDX-License-Identifier: Apache-2.0
#include "memascend/error.hpp"

namespace memascend {

const char* to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::invalid_argument: return "invalid-argument";
        case ErrorCode::out_of_memory: return "out-of-memory";
        case ErrorCode::overflow: return "overflow";
        case ErrorCode::lifecycle: return "lifecycle";
        case ErrorCode::unknown_region: return "unknown-region";
        case ErrorCode::pool_exhausted: return "pool-exhausted";
        case ErrorCode::size_violation: return "size-violation";
        case ErrorCode::already_checked_out: return "already-checked-out";
        case ErrorCode::not_found: return "not-found";
        case ErrorCode::storage_full: return "storage-full";
        case ErrorCode::device_error: return "device-error";
        case ErrorCode::capability: return "capability";
        case ErrorCode::io_error: return "io-error";
        case ErrorCode::alignment: return "alignment";
        case ErrorCode::busy: return "busy";
        case ErrorCode::uncalibrated: return "uncalibrated";
        case ErrorCode::bad_config: return "bad-config";
    }
    return "unknown";
}

}  // namespace memascend
