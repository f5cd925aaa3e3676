// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <map>
#include <mutex>
#include <random>
#include <thread>
#include <unistd.h>
#include <vector>

#include "memascend/direct_io.hpp"
#include "memascend/error.hpp"
#include "memascend/pinned.hpp"

using namespace memascend;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        static std::atomic<int> counter{0};
        path = std::filesystem::temp_directory_path() /
               ("memascend-io-test-" + std::to_string(::getpid()) + "-" +
                std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

PinnedRegion make_payload(std::uint64_t bytes, std::uint64_t seed) {
    auto region = PinnedAllocator::global().allocate(bytes, {AllocPolicyKind::alignment_free});
    std::mt19937_64 rng(seed);
    auto span = region.bytes();
    for (std::uint64_t i = 0; i < bytes; ++i) {
        span[i] = static_cast<std::byte>(rng());
    }
    return region;
}

}  // namespace

TEST_CASE("engine opens virtual devices and sums capacity") {
    TempDir dir;
    auto devset = DirectIoEngine::create_virtual_devices(dir.path.string(), 2, 64ull << 20);
    DirectIoEngine engine(devset, {});
    CHECK(engine.total_capacity() == 128ull << 20);
    CHECK(engine.device_count() == 2);

    CHECK_THROWS_AS(DirectIoEngine({}, {}), Error);
}

TEST_CASE("extent allocation splits equally and pads to the granule") {
    TempDir dir;
    auto devset = DirectIoEngine::create_virtual_devices(dir.path.string(), 2, 64ull << 20);
    DirectIoEngine engine(devset, {});

    auto extents = engine.allocate_extents("eight-mib", 8ull << 20);
    REQUIRE(extents.size() == 2);
    CHECK(extents[0].length == 4ull << 20);
    CHECK(extents[1].length == 4ull << 20);
    CHECK(extents[0].device_index != extents[1].device_index);
    CHECK(extents[0].device_offset == 0);
    CHECK(extents[1].device_offset == 0);

    auto small = engine.allocate_extents("page", 4096);
    REQUIRE(small.size() == 1);
    CHECK(small[0].length == 4096);

    // Padding arithmetic: 5000 logical occupies 8192, one 4096 chunk per device.
    auto padded = engine.allocate_extents("pad", 5000);
    std::uint64_t total = 0;
    for (const auto& e : padded) total += e.length;
    CHECK(total == 8192);

    CHECK_THROWS_AS(engine.allocate_extents("zero", 0), Error);
}

TEST_CASE("equal-split balance within one granule") {
    TempDir dir;
    auto devset = DirectIoEngine::create_virtual_devices(dir.path.string(), 3, 64ull << 20);
    DirectIoEngine engine(devset, {});
    std::mt19937_64 rng(4);
    for (int i = 0; i < 64; ++i) {
        const std::uint64_t logical = 1 + rng() % (1 << 20);
        auto extents = engine.allocate_extents("k" + std::to_string(i), logical);
        std::uint64_t lo = UINT64_MAX, hi = 0, sum = 0;
        for (const auto& e : extents) {
            lo = std::min(lo, e.length);
            hi = std::max(hi, e.length);
            sum += e.length;
        }
        if (extents.size() == 3) {
            CHECK(hi - lo <= 4096);
        }
        CHECK(sum == (logical + 4095) / 4096 * 4096);
    }
}

TEST_CASE("concurrent allocations stay pairwise disjoint") {
    TempDir dir;
    auto devset = DirectIoEngine::create_virtual_devices(dir.path.string(), 2, 256ull << 20);
    DirectIoEngine engine(devset, {});

    std::vector<std::thread> threads;
    std::mutex mu;
    std::vector<std::pair<std::string, std::uint64_t>> requested;
    for (int w = 0; w < 4; ++w) {
        threads.emplace_back([&, w] {
            std::mt19937_64 rng(100 + w);
            for (int i = 0; i < 25; ++i) {
                const std::string key = "c" + std::to_string(w) + "_" + std::to_string(i);
                const std::uint64_t logical = 1 + rng() % (1 << 18);
                engine.allocate_extents(key, logical);
                std::lock_guard lock(mu);
                requested.emplace_back(key, logical);
            }
        });
    }
    for (auto& t : threads) t.join();

    // Interval-overlap oracle per device, plus conservation of padded sums.
    std::vector<std::vector<std::pair<std::uint64_t, std::uint64_t>>> per_device(2);
    std::uint64_t extent_sum = 0;
    for (const auto& [key, loc] : engine.all_locations()) {
        for (const auto& e : loc.extents) {
            per_device[e.device_index].emplace_back(e.device_offset, e.length);
            extent_sum += e.length;
            CHECK(e.device_offset % 4096 == 0);
            CHECK(e.length % 4096 == 0);
        }
    }
    std::uint64_t padded_sum = 0;
    for (const auto& [key, logical] : requested) {
        padded_sum += (logical + 4095) / 4096 * 4096;
    }
    CHECK(extent_sum == padded_sum);
    for (auto& spans : per_device) {
        std::sort(spans.begin(), spans.end());
        for (std::size_t i = 1; i < spans.size(); ++i) {
            CHECK(spans[i - 1].first + spans[i - 1].second <= spans[i].first);
        }
    }
}

TEST_CASE("write/read round trip is byte-identical across backends") {
    for (IoBackend backend : {IoBackend::sync_pio, IoBackend::posix_aio}) {
        TempDir dir;
        auto devset = DirectIoEngine::create_virtual_devices(dir.path.string(), 2, 64ull << 20);
        EngineConfig cfg;
        cfg.backend = backend;
        cfg.workers = 3;
        DirectIoEngine engine(devset, cfg);

        auto payload = make_payload(1 << 20, 42);
        engine.write_tensor("roundtrip", payload.bytes(), 1 << 20);

        auto dst = PinnedAllocator::global().allocate(1 << 20, {AllocPolicyKind::alignment_free});
        const auto logical = engine.read_tensor("roundtrip", dst.bytes());
        CHECK(logical == 1 << 20);
        CHECK(std::memcmp(payload.data(), dst.data(), 1 << 20) == 0);
    }
}

TEST_CASE("unaligned logical lengths restore exactly") {
    TempDir dir;
    auto devset = DirectIoEngine::create_virtual_devices(dir.path.string(), 2, 64ull << 20);
    DirectIoEngine engine(devset, {});

    auto payload = make_payload(8192, 7);
    engine.write_tensor("odd", payload.bytes(), 5000);
    CHECK(engine.location("odd").padded_length == 8192);

    auto dst = PinnedAllocator::global().allocate(8192, {AllocPolicyKind::alignment_free});
    CHECK(engine.read_tensor("odd", dst.bytes()) == 5000);
    CHECK(std::memcmp(payload.data(), dst.data(), 5000) == 0);
}

TEST_CASE("rewrite reuses extents; growth abandons them") {
    TempDir dir;
    auto devset = DirectIoEngine::create_virtual_devices(dir.path.string(), 2, 64ull << 20);
    DirectIoEngine engine(devset, {});

    auto payload = make_payload(1 << 16, 1);
    engine.write_tensor("steady", payload.bytes(), 1 << 16);
    const auto first = engine.location("steady");
    engine.write_tensor("steady", payload.bytes(), 1 << 16);
    const auto second = engine.location("steady");
    REQUIRE(first.extents.size() == second.extents.size());
    for (std::size_t i = 0; i < first.extents.size(); ++i) {
        CHECK(first.extents[i].device_offset == second.extents[i].device_offset);
    }
    // Shrink also reuses.
    engine.write_tensor("steady", payload.bytes(), 1 << 12);
    CHECK(engine.location("steady").extents[0].device_offset ==
          first.extents[0].device_offset);
    CHECK(engine.stats().abandoned_bytes == 0);

    auto big = make_payload(1 << 18, 2);
    engine.write_tensor("steady", big.bytes(), 1 << 18);
    CHECK(engine.stats().abandoned_bytes == (1 << 16));
}

TEST_CASE("errors: unknown key, small destination, misalignment, storage full") {
    TempDir dir;
    auto devset = DirectIoEngine::create_virtual_devices(dir.path.string(), 1, 1 << 20);
    DirectIoEngine engine(devset, {});

    auto dst = PinnedAllocator::global().allocate(8192, {AllocPolicyKind::alignment_free});
    CHECK_THROWS_AS(engine.read_tensor("never-written", dst.bytes()), Error);

    auto payload = make_payload(64 << 10, 3);
    engine.write_tensor("t", payload.bytes(), 64 << 10);
    CHECK_THROWS_AS(engine.read_tensor("t", dst.bytes()), Error);  // too small

    // Unaligned start.
    auto span = payload.bytes();
    CHECK_THROWS_AS(engine.write_tensor("u", span.subspan(1), 4096), Error);

    // Exhaust the 1 MiB device.
    CHECK_THROWS_AS(engine.allocate_extents("huge", 2 << 20), Error);
}

TEST_CASE("all submitted I/O offsets and lengths are 4096-aligned") {
    TempDir dir;
    auto devset = DirectIoEngine::create_virtual_devices(dir.path.string(), 2, 64ull << 20);
    EngineConfig cfg;
    cfg.workers = 4;
    DirectIoEngine engine(devset, cfg);

    std::mutex mu;
    bool all_aligned = true;
    engine.set_io_trace([&](std::uint32_t, std::uint64_t offset, std::uint64_t length, bool) {
        std::lock_guard lock(mu);
        if (offset % 4096 != 0 || length % 4096 != 0 || length == 0) all_aligned = false;
    });

    std::mt19937_64 rng(17);
    for (int i = 0; i < 32; ++i) {
        const std::uint64_t logical = 1 + rng() % (1 << 19);
        auto payload = make_payload((logical + 4095) / 4096 * 4096, i);
        engine.write_tensor("a" + std::to_string(i), payload.bytes(), logical);
        auto dst = PinnedAllocator::global().allocate(
            (logical + 4095) / 4096 * 4096, {AllocPolicyKind::alignment_free});
        engine.read_tensor("a" + std::to_string(i), dst.bytes());
    }
    CHECK(all_aligned);

    const auto stats = engine.stats();
    CHECK(stats.write_requests == 32);
    CHECK(stats.read_requests == 32);
    CHECK(stats.bytes_written == stats.bytes_read);
}

TEST_CASE("manifest round trip across engine restarts") {
    TempDir dir;
    auto devset = DirectIoEngine::create_virtual_devices(dir.path.string(), 2, 64ull << 20);
    const std::string manifest = (dir.path / "store.manifest.json").string();

    auto payload = make_payload(12288, 21);
    {
        EngineConfig cfg;
        cfg.manifest_path = manifest;
        DirectIoEngine engine(devset, cfg);
        engine.write_tensor("persisted", payload.bytes(), 10000);
    }
    REQUIRE(std::filesystem::exists(manifest));
    {
        EngineConfig cfg;
        cfg.manifest_path = manifest;
        DirectIoEngine engine(devset, cfg);
        auto dst = PinnedAllocator::global().allocate(12288, {AllocPolicyKind::alignment_free});
        CHECK(engine.read_tensor("persisted", dst.bytes()) == 10000);
        CHECK(std::memcmp(payload.data(), dst.data(), 10000) == 0);
        // Cursor restored: new allocations continue past the old ones.
        auto extents = engine.allocate_extents("after-restart", 4096);
        CHECK(extents[0].device_offset >= 4096);
    }
}

TEST_CASE("per-key guard rejects concurrent operations on one key") {
    TempDir dir;
    auto devset = DirectIoEngine::create_virtual_devices(dir.path.string(), 1, 8 << 20);
    DirectIoEngine engine(devset, {});
    auto payload = make_payload(4 << 20, 33);
    engine.write_tensor("guarded", payload.bytes(), 4 << 20);

    std::atomic<int> busy_errors{0};
    std::vector<std::thread> threads;
    for (int w = 0; w < 4; ++w) {
        threads.emplace_back([&] {
            auto dst =
                PinnedAllocator::global().allocate(4 << 20, {AllocPolicyKind::alignment_free});
            for (int i = 0; i < 8; ++i) {
                try {
                    engine.read_tensor("guarded", dst.bytes());
                } catch (const Error& e) {
                    if (e.code() == ErrorCode::busy) busy_errors.fetch_add(1);
                }
            }
        });
    }
    for (auto& t : threads) t.join();
    // Some interleavings must have collided; none may corrupt state.
    auto dst = PinnedAllocator::global().allocate(4 << 20, {AllocPolicyKind::alignment_free});
    CHECK(engine.read_tensor("guarded", dst.bytes()) == 4 << 20);
    CHECK(std::memcmp(payload.data(), dst.data(), 4 << 20) == 0);
}

TEST_CASE("shadow-map oracle under random interleaving and concurrency") {
    TempDir dir;
    auto devset = DirectIoEngine::create_virtual_devices(dir.path.string(), 2, 128ull << 20);
    EngineConfig cfg;
    cfg.workers = 2;
    DirectIoEngine engine(devset, cfg);

    constexpr int kKeys = 20;
    std::vector<std::mutex> key_mu(kKeys);
    std::vector<std::vector<std::byte>> shadow(kKeys);

    std::vector<std::thread> threads;
    for (int w = 0; w < 4; ++w) {
        threads.emplace_back([&, w] {
            std::mt19937_64 rng(500 + w);
            auto buf =
                PinnedAllocator::global().allocate(1 << 18, {AllocPolicyKind::alignment_free});
            for (int i = 0; i < 60; ++i) {
                const int k = static_cast<int>(rng() % kKeys);
                const std::string key = "s" + std::to_string(k);
                std::lock_guard lock(key_mu[k]);
                if (shadow[k].empty() || rng() % 2 == 0) {
                    const std::uint64_t logical = 1 + rng() % (1 << 17);
                    auto span = buf.bytes();
                    for (std::uint64_t b = 0; b < logical; ++b) {
                        span[b] = static_cast<std::byte>(rng());
                    }
                    engine.write_tensor(key, span, logical);
                    shadow[k].assign(span.begin(), span.begin() + logical);
                } else {
                    const auto logical = engine.read_tensor(key, buf.bytes());
                    CHECK(logical == shadow[k].size());
                    CHECK(std::memcmp(buf.data(), shadow[k].data(), logical) == 0);
                }
            }
        });
    }
    for (auto& t : threads) t.join();
}

TEST_CASE("filesystem baseline round trips and matches the engine") {
    TempDir dir;
    FsBaselineStore fs((dir.path / "fsstore").string());

    auto payload = make_payload(12288, 8);
    fs.write("tensor.a", payload.bytes(), 10000);
    auto dst = PinnedAllocator::global().allocate(12288, {AllocPolicyKind::alignment_free});
    CHECK(fs.read("tensor.a", dst.bytes()) == 10000);
    CHECK(std::memcmp(payload.data(), dst.data(), 10000) == 0);

    CHECK_THROWS_AS(fs.write("empty", payload.bytes(), 0), Error);

    // Cross-engine equality for identical payloads.
    auto devset = DirectIoEngine::create_virtual_devices((dir.path / "dev").string(), 2, 32 << 20);
    DirectIoEngine engine(devset, {});
    engine.write_tensor("tensor.a", payload.bytes(), 10000);
    auto dst2 = PinnedAllocator::global().allocate(12288, {AllocPolicyKind::alignment_free});
    engine.read_tensor("tensor.a", dst2.bytes());
    CHECK(std::memcmp(dst.data(), dst2.data(), 10000) == 0);
}

TEST_CASE("cross-process cursor file survives reopen and advances atomically") {
    TempDir dir;
    const std::string path = (dir.path / "cursors").string();
    {
        SharedCursor cursor(2, path);
        CHECK(cursor.advance(0, 4096) == 0);
        CHECK(cursor.advance(0, 8192) == 4096);
        CHECK(cursor.advance(1, 4096) == 0);
    }
    {
        SharedCursor cursor(2, path);
        CHECK(cursor.advance(0, 4096) == 12288);  // resumed from disk
        CHECK(cursor.position(1) == 4096);
    }
}
