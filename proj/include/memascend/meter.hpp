// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>

namespace memascend {

/// Byte-level accounting of host memory attributed to named components plus
/// anonymous transients. Tracks the running total and its historical peak so
/// workloads can report peak tracked host bytes without OS sampling.
class MemoryMeter {
public:
    void add_component(const std::string& name, std::uint64_t bytes) {
        std::lock_guard lock(mu_);
        components_[name] += bytes;
        bump_locked(bytes);
    }

    void remove_component(const std::string& name, std::uint64_t bytes) {
        std::lock_guard lock(mu_);
        auto it = components_.find(name);
        if (it != components_.end()) {
            it->second -= bytes < it->second ? bytes : it->second;
        }
        drop_locked(bytes);
    }

    /// Anonymous transient allocation (freed via release()).
    void acquire(std::uint64_t bytes) {
        std::lock_guard lock(mu_);
        transient_ += bytes;
        if (transient_ > transient_peak_) transient_peak_ = transient_;
        bump_locked(bytes);
    }

    void release(std::uint64_t bytes) {
        std::lock_guard lock(mu_);
        transient_ -= bytes < transient_ ? bytes : transient_;
        drop_locked(bytes);
    }

    std::uint64_t current_bytes() const {
        std::lock_guard lock(mu_);
        return current_;
    }

    std::uint64_t peak_bytes() const {
        std::lock_guard lock(mu_);
        return peak_;
    }

    std::uint64_t transient_peak_bytes() const {
        std::lock_guard lock(mu_);
        return transient_peak_;
    }

    std::map<std::string, std::uint64_t> components() const {
        std::lock_guard lock(mu_);
        return components_;
    }

    void reset() {
        std::lock_guard lock(mu_);
        components_.clear();
        current_ = peak_ = transient_ = transient_peak_ = 0;
    }

private:
    void bump_locked(std::uint64_t bytes) {
        current_ += bytes;
        if (current_ > peak_) peak_ = current_;
    }

    void drop_locked(std::uint64_t bytes) { current_ -= bytes < current_ ? bytes : current_; }

    mutable std::mutex mu_;
    std::map<std::string, std::uint64_t> components_;
    std::uint64_t current_ = 0;
    std::uint64_t peak_ = 0;
    std::uint64_t transient_ = 0;
    std::uint64_t transient_peak_ = 0;
};

}  // namespace memascend
