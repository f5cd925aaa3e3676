// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "memascend/model.hpp"
#include "memascend/pinned.hpp"

namespace memascend {

enum class PoolMode { monolithic, adaptive };

struct PoolConfig {
    PoolMode mode = PoolMode::adaptive;
    std::uint64_t inflight_blocks = 1;  // N
    AllocationPolicy backing_policy{AllocPolicyKind::alignment_free};
    bool blocking_checkout = false;
    bool lock_pages = false;
};

struct BufferHandle {
    std::string key;
    std::uint64_t offset = 0;  // into the backing region
    std::uint64_t length = 0;  // exact payload bytes
    std::uint32_t class_index = 0;
    std::uint32_t slot_index = 0;
    bool checked_out = false;
};

struct PoolStats {
    std::uint64_t capacity_bytes = 0;      // sum of class payload capacities
    std::uint64_t backing_bytes = 0;       // pinned bytes incl. per-slot page padding
    std::uint64_t peak_live_bytes = 0;     // max simultaneous checked-out payload
    std::uint64_t live_bytes = 0;
    std::uint64_t checkout_count = 0;
    std::uint64_t checkin_count = 0;
    std::chrono::nanoseconds blocked_time{0};
};

/// Payload capacity the pool will reserve for an inventory: the per-shape
/// subpool sum in adaptive mode, or the max-tensor slot times the slot count
/// in monolithic mode.
std::uint64_t pool_capacity(const std::vector<TensorDescriptor>& inventory, PoolMode mode,
                            std::uint64_t inflight_blocks);

/// Staging pool between the tensor store and the compute side: one pinned
/// backing region carved into per-class slots, with a key-addressed checkout
/// ledger. Monolithic mode sizes every slot to the largest tensor; adaptive
/// mode gives each shape class exactly-fitting slots.
class Pool {
public:
    Pool(const std::vector<TensorDescriptor>& inventory, const PoolConfig& config,
         PinnedAllocator& allocator = PinnedAllocator::global());

    /// Claims a free slot of the tensor's class and records key->extent in
    /// the ledger. Blocking mode waits for a checkin when the class is
    /// exhausted; otherwise pool-exhausted is thrown.
    BufferHandle checkout(const std::string& key, std::uint64_t payload_bytes);

    void checkin(const BufferHandle& handle);

    std::span<std::byte> span(const BufferHandle& handle);

    /// Slot span padded to the 4096-byte I/O granule (always within the slot
    /// stride), for handing to the direct I/O engine.
    std::span<std::byte> padded_span(const BufferHandle& handle);

    PoolStats stats() const;
    PoolMode mode() const noexcept { return config_.mode; }
    std::uint64_t class_count() const noexcept { return classes_.size(); }

    struct ClassInfo {
        std::string class_id;
        std::uint64_t slot_payload_bytes = 0;
        std::uint64_t slot_count = 0;
        std::uint64_t base_offset = 0;
        std::uint64_t slot_stride = 0;
    };
    const std::vector<ClassInfo>& classes() const noexcept { return classes_; }

    /// Live (offset, length) pairs, for interval-disjointness oracles.
    std::vector<std::pair<std::uint64_t, std::uint64_t>> live_extents() const;

private:
    struct ClassRuntime {
        std::vector<std::uint32_t> free_slots;
    };

    std::uint32_t class_for(const std::string& key, std::uint64_t payload_bytes) const;

    PoolConfig config_;
    std::vector<ClassInfo> classes_;
    std::vector<ClassRuntime> runtime_;
    std::unordered_map<std::string, std::uint32_t> tensor_class_;  // tensor name -> class
    PinnedRegion backing_;
    PinnedAllocator& allocator_;

    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::unordered_map<std::string, BufferHandle> ledger_;  // live checkouts by key
    PoolStats stats_;
};

/// (capacity - peak_live) / capacity: the fraction of reserved bytes that
/// never held payload at the moment of highest usage.
double fragmentation(std::uint64_t capacity_bytes, std::uint64_t peak_live_bytes);

}  // namespace memascend
