// SPDX-License-Identifier: Apache-2.0
#include "memascend/pinned.hpp"

#include <sys/mman.h>

#include <bit>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <unordered_map>

#include "memascend/error.hpp"

namespace memascend {

std::uint64_t AllocationPolicy::default_page_size() {
    static const std::uint64_t cached = [] {
        if (const char* env = std::getenv("MEMASCEND_PAGE_SIZE")) {
            char* end = nullptr;
            const unsigned long long v = std::strtoull(env, &end, 10);
            if (end && *end == '\0' && v >= 512 && std::has_single_bit(v)) {
                return static_cast<std::uint64_t>(v);
            }
        }
        return std::uint64_t{4096};
    }();
    return cached;
}

namespace {

void check_policy(std::uint64_t request, const AllocationPolicy& policy) {
    if (request == 0) {
        raise(ErrorCode::invalid_argument, "allocation request of zero bytes");
    }
    if (policy.page_size < 512 || !std::has_single_bit(policy.page_size)) {
        raise(ErrorCode::invalid_argument, "page_size must be a power of two >= 512");
    }
}

}  // namespace

std::uint64_t allocated_capacity(std::uint64_t request, const AllocationPolicy& policy) {
    check_policy(request, policy);
    if (request <= policy.page_size) {
        return policy.page_size;  // page-lock granularity floor
    }
    if (policy.kind == AllocPolicyKind::power_of_two) {
        return std::bit_ceil(request);
    }
    return (request + policy.page_size - 1) / policy.page_size * policy.page_size;
}

std::uint64_t overhead_bytes(std::uint64_t request, const AllocationPolicy& policy) {
    return allocated_capacity(request, policy) - request;
}

struct PinnedAllocator::State {
    struct Record {
        std::byte* data = nullptr;
        std::uint64_t capacity = 0;
        bool locked = false;
        RegionState state = RegionState::released;
    };

    std::mutex mu;
    std::unordered_map<std::uint64_t, Record> records;
    std::uint64_t next_id = 1;
    PinnedAllocatorStats stats;

    void do_release(std::uint64_t id) {
        std::lock_guard lock(mu);
        auto it = records.find(id);
        if (it == records.end()) {
            raise(ErrorCode::unknown_region, "region id " + std::to_string(id) +
                                                 " was never issued by this allocator");
        }
        Record& rec = it->second;
        if (rec.state == RegionState::released) {
            raise(ErrorCode::lifecycle,
                  "double release of region id " + std::to_string(id));
        }
        if (rec.locked) {
            ::munlock(rec.data, rec.capacity);
        }
        std::free(rec.data);
        rec.data = nullptr;
        rec.state = RegionState::released;
        stats.release_count += 1;
        stats.live_bytes -= rec.capacity;
    }
};

PinnedAllocator::PinnedAllocator() : state_(std::make_shared<State>()) {}

PinnedAllocator::~PinnedAllocator() = default;

PinnedRegion PinnedAllocator::allocate(std::uint64_t request, const AllocationPolicy& policy,
                                       bool lock_pages) {
    const std::uint64_t capacity = allocated_capacity(request, policy);

    void* raw = nullptr;
    if (::posix_memalign(&raw, static_cast<std::size_t>(policy.page_size),
                         static_cast<std::size_t>(capacity)) != 0) {
        raise(ErrorCode::out_of_memory,
              "posix_memalign failed for " + std::to_string(capacity) + " bytes");
    }
    std::memset(raw, 0, static_cast<std::size_t>(capacity));

    bool locked = false;
    if (lock_pages) {
        if (::mlock(raw, static_cast<std::size_t>(capacity)) == 0) {
            locked = true;
        }
    }

    PinnedRegion region;
    region.data_ = static_cast<std::byte*>(raw);
    region.requested_ = request;
    region.capacity_ = capacity;
    region.alignment_ = policy.page_size;
    // Registration is a state transition here: no device runtime involved,
    // the exactly-once free contract is what matters.
    region.state_ = RegionState::registered;
    region.locked_ = locked;
    region.registry_ = state_;

    std::lock_guard lock(state_->mu);
    region.id_ = state_->next_id++;
    state_->records[region.id_] = {region.data_, capacity, locked, RegionState::registered};
    state_->stats.allocation_count += 1;
    state_->stats.live_bytes += capacity;
    state_->stats.peak_live_bytes = std::max(state_->stats.peak_live_bytes, state_->stats.live_bytes);
    if (lock_pages && !locked) {
        state_->stats.lock_failures += 1;
    }
    return region;
}

void PinnedAllocator::release(PinnedRegion& region) {
    if (region.registry_.get() != static_cast<void*>(state_.get())) {
        raise(ErrorCode::unknown_region, "region belongs to a different allocator");
    }
    state_->do_release(region.id_);
    region.data_ = nullptr;
    region.state_ = RegionState::released;
    region.locked_ = false;
}

PinnedAllocatorStats PinnedAllocator::stats() const {
    std::lock_guard lock(state_->mu);
    return state_->stats;
}

PinnedAllocator& PinnedAllocator::global() {
    static PinnedAllocator instance;
    return instance;
}

PinnedRegion::PinnedRegion(PinnedRegion&& other) noexcept { *this = std::move(other); }

PinnedRegion& PinnedRegion::operator=(PinnedRegion&& other) noexcept {
    if (this != &other) {
        this->~PinnedRegion();
        id_ = other.id_;
        data_ = other.data_;
        requested_ = other.requested_;
        capacity_ = other.capacity_;
        alignment_ = other.alignment_;
        state_ = other.state_;
        locked_ = other.locked_;
        registry_ = std::move(other.registry_);
        other.data_ = nullptr;
        other.state_ = RegionState::released;
        other.locked_ = false;
    }
    return *this;
}

PinnedRegion::~PinnedRegion() {
    if (data_ != nullptr && state_ != RegionState::released && registry_) {
        auto state = std::static_pointer_cast<PinnedAllocator::State>(registry_);
        try {
            state->do_release(id_);
        } catch (const Error&) {
            // Destructor path stays silent; explicit release reports errors.
        }
        data_ = nullptr;
        state_ = RegionState::released;
    }
}

}  // namespace memascend
