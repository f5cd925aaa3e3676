// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "memascend/meter.hpp"
#include "memascend/pinned.hpp"

namespace memascend {

/// Contiguous fp32 buffer holding all partitioned gradients, backed by one
/// pinned region so the optimizer and the store can address it directly.
class GradFlatBuffer {
public:
    explicit GradFlatBuffer(std::uint64_t element_count,
                            PinnedAllocator& allocator = PinnedAllocator::global());

    std::span<float> values() noexcept { return {data_, count_}; }
    std::span<const float> values() const noexcept { return {data_, count_}; }
    std::uint64_t element_count() const noexcept { return count_; }
    PinnedRegion& backing() noexcept { return region_; }

    void fill(float value);

private:
    PinnedRegion region_;
    float* data_ = nullptr;
    std::uint64_t count_ = 0;
};

struct ScanConfig {
    std::uint32_t worker_count = 1;
    std::uint64_t chunk_bytes = 1 << 20;  // poll cadence for the shared stop flag
    bool early_exit = true;
    bool track_first_index = false;  // debug only; best-effort under early exit
};

struct OverflowResult {
    bool overflow = false;
    std::optional<std::uint64_t> first_offending_index;
};

inline constexpr std::uint32_t kExpAllOnesMask = 0x7F800000u;

/// True iff the fp32 pattern is +/-inf or NaN: all exponent bits set.
inline bool bits_non_finite(std::uint32_t bits) noexcept {
    return (bits & kExpAllOnesMask) == kExpAllOnesMask;
}

/// Single-pass bitwise scan over the raw fp32 values. No allocation scales
/// with the buffer; workers share one stop flag and bail at chunk boundaries
/// once any of them sees a non-finite pattern.
OverflowResult fused_overflow_check(std::span<const float> values, const ScanConfig& cfg = {},
                                    MemoryMeter* meter = nullptr);

inline OverflowResult fused_overflow_check(const GradFlatBuffer& buf, const ScanConfig& cfg = {},
                                           MemoryMeter* meter = nullptr) {
    return fused_overflow_check(buf.values(), cfg, meter);
}

struct NaiveCheckResult {
    bool overflow = false;
    std::uint64_t peak_extra_bytes = 0;  // transient allocation beyond the input
};

/// Replays the staged pipeline the fused scan replaces: an abs copy plus an
/// is-inf boolean tensor and reduction, then an is-nan boolean tensor and
/// reduction. Every stage allocates through the meter so the transient peak
/// is observable.
NaiveCheckResult naive_overflow_check(std::span<const float> values, MemoryMeter& meter);

inline NaiveCheckResult naive_overflow_check(const GradFlatBuffer& buf, MemoryMeter& meter) {
    return naive_overflow_check(buf.values(), meter);
}

struct OverflowBenchRow {
    std::uint64_t elements = 0;
    std::uint64_t fused_ns = 0;
    std::uint64_t naive_ns = 0;
    std::uint64_t naive_peak_extra_bytes = 0;
    double speedup = 0.0;
    double parallel_efficiency = 0.0;  // fused speedup over 1 worker / workers
};

/// Median-of-repeats wall clocks for both scans at each size, warm caches.
std::vector<OverflowBenchRow> bench_overflow(const std::vector<std::uint64_t>& sizes,
                                             const ScanConfig& cfg, int repeats = 5);

}  // namespace memascend
