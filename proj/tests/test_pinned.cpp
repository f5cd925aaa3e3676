// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <bit>
#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "memascend/error.hpp"
#include "memascend/pinned.hpp"

using namespace memascend;

namespace {

const AllocationPolicy kPow2{AllocPolicyKind::power_of_two};
const AllocationPolicy kFree{AllocPolicyKind::alignment_free};

std::uint64_t resident_bytes() {
    std::ifstream statm("/proc/self/statm");
    std::uint64_t size = 0, resident = 0;
    statm >> size >> resident;
    return resident * 4096;
}

}  // namespace

TEST_CASE("capacity rules") {
    // 2.1 GiB request under power-of-two lands on 4 GiB.
    CHECK(allocated_capacity(2254857830ull, kPow2) == 4294967296ull);
    CHECK(allocated_capacity(4096, kPow2) == 4096);
    CHECK(allocated_capacity(4096, kFree) == 4096);
    CHECK(allocated_capacity(2254857830ull, kFree) == 2254860288ull);
    CHECK(allocated_capacity(1, kPow2) == 4096);  // one-page floor
    CHECK(allocated_capacity(1, kFree) == 4096);
    CHECK(allocated_capacity(10000, kFree) == 12288);
    CHECK_THROWS_AS(allocated_capacity(0, kPow2), Error);
}

TEST_CASE("overhead values") {
    // ~1.9 GiB of permanent slack for the 2.1 GiB request.
    const std::uint64_t oh = overhead_bytes(2254857830ull, kPow2);
    CHECK(oh == 4294967296ull - 2254857830ull);
    CHECK(static_cast<double>(oh) / (1ull << 30) > 1.89);

    CHECK(overhead_bytes(1ull << 30, kPow2) == 0);  // exact power of two

    // The 28.37 GiB flat buffer: power-of-two wastes ~3.63 GiB, page
    // alignment at most 4095 bytes.
    CHECK(overhead_bytes(30462509056ull, kPow2) == 34359738368ull - 30462509056ull);
    CHECK(overhead_bytes(30462509056ull, kFree) <= 4095);
}

TEST_CASE("pinned sizing laws over random requests") {
    std::mt19937_64 rng(42);
    // Mix magnitudes: bytes through tens of GiB.
    for (int i = 0; i < 20000; ++i) {
        const int mag = static_cast<int>(rng() % 34) + 1;
        const std::uint64_t request = (rng() % ((1ull << mag) - 1)) + 1;

        const std::uint64_t oh_free = overhead_bytes(request, kFree);
        CHECK(oh_free < 4096);

        const std::uint64_t cap2 = allocated_capacity(request, kPow2);
        CHECK(std::has_single_bit(cap2));
        CHECK(cap2 >= request);
        if (request > 2048) {
            CHECK(cap2 - request < request);  // never more than doubles
        }
        const bool zero_oh = overhead_bytes(request, kPow2) == 0;
        const bool is_pow2_page = std::has_single_bit(request) && request >= 4096;
        CHECK(zero_oh == is_pow2_page);
    }
}

TEST_CASE("allocate returns zeroed, aligned, registered regions") {
    PinnedAllocator alloc;
    auto region = alloc.allocate(10000, kFree);
    CHECK(region.capacity_bytes() == 12288);
    CHECK(region.requested_bytes() == 10000);
    CHECK(region.state() == RegionState::registered);
    CHECK(reinterpret_cast<std::uintptr_t>(region.data()) % 4096 == 0);
    for (std::byte b : region.bytes()) {
        if (b != std::byte{0}) {
            FAIL("region not zero-filled");
        }
    }

    auto tiny = alloc.allocate(1, kPow2);
    CHECK(tiny.capacity_bytes() == 4096);

    auto a = alloc.allocate(1 << 20, kFree);
    auto b = alloc.allocate(1 << 20, kFree);
    const auto* abeg = a.data();
    const auto* bbeg = b.data();
    CHECK((abeg + a.capacity_bytes() <= bbeg || bbeg + b.capacity_bytes() <= abeg));

    alloc.release(region);
    alloc.release(tiny);
    alloc.release(a);
    alloc.release(b);
    CHECK(alloc.stats().live_bytes == 0);
}

TEST_CASE("release is accepted exactly once") {
    PinnedAllocator alloc;
    auto region = alloc.allocate(4096, kFree);
    alloc.release(region);
    CHECK(region.state() == RegionState::released);
    CHECK_THROWS_AS(alloc.release(region), Error);

    PinnedRegion never;
    CHECK_THROWS_AS(alloc.release(never), Error);

    // A region from another allocator is unknown here.
    PinnedAllocator other;
    auto foreign = other.allocate(4096, kFree);
    CHECK_THROWS_AS(alloc.release(foreign), Error);
    other.release(foreign);
}

TEST_CASE("destructor covers the forgotten release") {
    PinnedAllocator alloc;
    {
        auto region = alloc.allocate(1 << 16, kFree);
        CHECK(alloc.stats().live_bytes == (1 << 16));
    }
    CHECK(alloc.stats().live_bytes == 0);
    CHECK(alloc.stats().release_count == 1);
}

TEST_CASE("page locking degrades instead of failing") {
    PinnedAllocator alloc;
    auto region = alloc.allocate(1 << 20, kFree, /*lock_pages=*/true);
    // Whether the privilege exists depends on RLIMIT_MEMLOCK; either way the
    // allocation succeeds and the flag plus stats tell the story.
    if (!region.locked()) {
        CHECK(alloc.stats().lock_failures == 1);
    } else {
        CHECK(alloc.stats().lock_failures == 0);
    }
    alloc.release(region);
}

TEST_CASE("allocate/release loop returns memory to the OS") {
    PinnedAllocator alloc;
    // Warm up the allocator arenas first.
    for (int i = 0; i < 100; ++i) {
        auto r = alloc.allocate(64 * 1024, kFree);
        alloc.release(r);
    }
    const std::uint64_t base = resident_bytes();
    for (int i = 0; i < 10000; ++i) {
        auto r = alloc.allocate(64 * 1024, kFree);
        alloc.release(r);
    }
    const std::uint64_t after = resident_bytes();
    CHECK(after <= base + (64ull << 20));  // fixed bound, not proportional to the loop
    CHECK(alloc.stats().allocation_count == 10100);
    CHECK(alloc.stats().release_count == 10100);
    CHECK(alloc.stats().live_bytes == 0);
}

TEST_CASE("stats track peaks") {
    PinnedAllocator alloc;
    auto a = alloc.allocate(8192, kFree);
    auto b = alloc.allocate(8192, kFree);
    alloc.release(a);
    CHECK(alloc.stats().peak_live_bytes == 16384);
    CHECK(alloc.stats().live_bytes == 8192);
    alloc.release(b);
}
