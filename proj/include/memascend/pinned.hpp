// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>

namespace memascend {

enum class AllocPolicyKind { power_of_two, alignment_free };

struct AllocationPolicy {
    AllocPolicyKind kind = AllocPolicyKind::alignment_free;
    std::uint64_t page_size = default_page_size();

    /// 4096 unless MEMASCEND_PAGE_SIZE overrides it (power of two >= 512).
    static std::uint64_t default_page_size();
};

/// Capacity the policy reserves for a request: next power of two, or the next
/// page multiple. Sub-page requests round to one page either way since page
/// locking cannot go finer.
std::uint64_t allocated_capacity(std::uint64_t request, const AllocationPolicy& policy);

/// allocated_capacity(request) - request: the permanent slack the policy pins.
std::uint64_t overhead_bytes(std::uint64_t request, const AllocationPolicy& policy);

enum class RegionState { allocated, registered, released };

struct PinnedAllocatorStats {
    std::uint64_t allocation_count = 0;
    std::uint64_t release_count = 0;
    std::uint64_t live_bytes = 0;
    std::uint64_t peak_live_bytes = 0;
    std::uint64_t lock_failures = 0;
};

class PinnedAllocator;

/// A page-aligned region handed out by PinnedAllocator. Registration for
/// device transfer is modeled as the allocated->registered transition; release
/// must happen exactly once and the destructor covers the forgotten case.
class PinnedRegion {
public:
    PinnedRegion() = default;
    PinnedRegion(PinnedRegion&& other) noexcept;
    PinnedRegion& operator=(PinnedRegion&& other) noexcept;
    PinnedRegion(const PinnedRegion&) = delete;
    PinnedRegion& operator=(const PinnedRegion&) = delete;
    ~PinnedRegion();

    std::uint64_t id() const noexcept { return id_; }
    std::uint64_t requested_bytes() const noexcept { return requested_; }
    std::uint64_t capacity_bytes() const noexcept { return capacity_; }
    std::uint64_t alignment() const noexcept { return alignment_; }
    RegionState state() const noexcept { return state_; }
    bool locked() const noexcept { return locked_; }
    bool valid() const noexcept { return data_ != nullptr; }

    std::span<std::byte> bytes() noexcept { return {data_, capacity_}; }
    std::span<const std::byte> bytes() const noexcept { return {data_, capacity_}; }
    std::byte* data() noexcept { return data_; }
    const std::byte* data() const noexcept { return data_; }

private:
    friend class PinnedAllocator;

    std::uint64_t id_ = 0;
    std::byte* data_ = nullptr;
    std::uint64_t requested_ = 0;
    std::uint64_t capacity_ = 0;
    std::uint64_t alignment_ = 0;
    RegionState state_ = RegionState::released;
    bool locked_ = false;
    std::shared_ptr<void> registry_;  // keeps the allocator state alive
};

class PinnedAllocator {
public:
    PinnedAllocator();
    ~PinnedAllocator();
    PinnedAllocator(const PinnedAllocator&) = delete;
    PinnedAllocator& operator=(const PinnedAllocator&) = delete;

    /// Zero-filled region in state `registered`. Page locking is attempted
    /// when requested; failure degrades to locked=false and bumps
    /// stats().lock_failures instead of erroring.
    PinnedRegion allocate(std::uint64_t request, const AllocationPolicy& policy,
                          bool lock_pages = false);

    /// Unlocks, frees, and marks the region released. Throws on double
    /// release (lifecycle) and on regions this allocator never issued
    /// (unknown-region).
    void release(PinnedRegion& region);

    PinnedAllocatorStats stats() const;

    /// Process-wide allocator used by modules that do not thread one through.
    static PinnedAllocator& global();

private:
    friend class PinnedRegion;
    struct State;
    std::shared_ptr<State> state_;
};

}  // namespace memascend
