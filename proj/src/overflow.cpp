// SPDX-License-Identifier: Apache-2.0
#include "memascend/overflow.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <thread>

#include "memascend/error.hpp"

namespace memascend {

GradFlatBuffer::GradFlatBuffer(std::uint64_t element_count, PinnedAllocator& allocator) {
    if (element_count == 0) {
        raise(ErrorCode::invalid_argument, "flat buffer needs at least one element");
    }
    count_ = element_count;
    region_ = allocator.allocate(element_count * sizeof(float),
                                 AllocationPolicy{AllocPolicyKind::alignment_free});
    data_ = reinterpret_cast<float*>(region_.data());
}

void GradFlatBuffer::fill(float value) { std::fill_n(data_, count_, value); }

namespace {

struct ChunkPlan {
    std::uint64_t elems_per_chunk;
    std::uint64_t chunk_count;
};

ChunkPlan plan_chunks(std::uint64_t n, const ScanConfig& cfg) {
    if (cfg.worker_count == 0) {
        raise(ErrorCode::invalid_argument, "worker_count must be >= 1");
    }
    if (cfg.chunk_bytes == 0 || cfg.chunk_bytes % sizeof(float) != 0) {
        raise(ErrorCode::invalid_argument, "chunk_bytes must be a positive multiple of 4");
    }
    const std::uint64_t per_chunk = cfg.chunk_bytes / sizeof(float);
    return {per_chunk, (n + per_chunk - 1) / per_chunk};
}

bool chunk_has_non_finite(const float* data, std::uint64_t begin, std::uint64_t end,
                          bool want_index, std::uint64_t* index_out) {
    const auto* p = data + begin;
    const std::uint64_t len = end - begin;
    std::uint32_t acc = 0;
    if (!want_index) {
        // Branch-free accumulation keeps the inner loop vectorizable; the
        // stop flag is only consulted between chunks.
        for (std::uint64_t i = 0; i < len; ++i) {
            std::uint32_t bits;
            std::memcpy(&bits, p + i, sizeof bits);
            acc |= static_cast<std::uint32_t>((bits & kExpAllOnesMask) == kExpAllOnesMask);
        }
        return acc != 0;
    }
    for (std::uint64_t i = 0; i < len; ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, p + i, sizeof bits);
        if (bits_non_finite(bits)) {
            *index_out = begin + i;
            return true;
        }
    }
    return false;
}

}  // namespace

OverflowResult fused_overflow_check(std::span<const float> values, const ScanConfig& cfg,
                                    MemoryMeter* meter) {
    const std::uint64_t n = values.size();
    OverflowResult result;
    if (n == 0) {
        return result;
    }
    const auto plan = plan_chunks(n, cfg);
    const std::uint32_t workers =
        static_cast<std::uint32_t>(std::min<std::uint64_t>(cfg.worker_count, plan.chunk_count));

    std::atomic<bool> stop{false};
    std::atomic<std::uint64_t> next_chunk{0};
    std::atomic<std::uint64_t> first_index{UINT64_MAX};

    auto scan_worker = [&] {
        for (;;) {
            if (cfg.early_exit && stop.load(std::memory_order_relaxed)) {
                return;
            }
            const std::uint64_t c = next_chunk.fetch_add(1, std::memory_order_relaxed);
            if (c >= plan.chunk_count) {
                return;
            }
            const std::uint64_t begin = c * plan.elems_per_chunk;
            const std::uint64_t end = std::min(n, begin + plan.elems_per_chunk);
            std::uint64_t idx = UINT64_MAX;
            if (chunk_has_non_finite(values.data(), begin, end, cfg.track_first_index, &idx)) {
                stop.store(true, std::memory_order_relaxed);
                if (cfg.track_first_index) {
                    std::uint64_t seen = first_index.load(std::memory_order_relaxed);
                    while (idx < seen &&
                           !first_index.compare_exchange_weak(seen, idx,
                                                              std::memory_order_relaxed)) {
                    }
                }
                if (!cfg.track_first_index) {
                    return;
                }
            }
        }
    };

    if (workers <= 1) {
        scan_worker();
    } else {
        // The only allocation is this thread vector: O(worker_count).
        std::vector<std::thread> threads;
        threads.reserve(workers);
        if (meter != nullptr) {
            meter->acquire(workers * sizeof(std::thread));
        }
        for (std::uint32_t w = 1; w < workers; ++w) {
            threads.emplace_back(scan_worker);
        }
        scan_worker();
        for (auto& t : threads) {
            t.join();
        }
        if (meter != nullptr) {
            meter->release(workers * sizeof(std::thread));
        }
    }

    result.overflow = stop.load(std::memory_order_relaxed);
    if (cfg.track_first_index && result.overflow) {
        const std::uint64_t idx = first_index.load(std::memory_order_relaxed);
        if (idx != UINT64_MAX) {
            result.first_offending_index = idx;
        }
    }
    return result;
}

NaiveCheckResult naive_overflow_check(std::span<const float> values, MemoryMeter& meter) {
    const std::uint64_t n = values.size();
    NaiveCheckResult result;
    if (n == 0) {
        return result;
    }
    const std::uint64_t float_bytes = n * sizeof(float);
    const std::uint64_t bool_bytes = n;
    const std::uint64_t base_peak = meter.peak_bytes();

    // Stage 1: abs() materializes a full copy of the input.
    std::vector<float> abs_copy(n);
    meter.acquire(float_bytes);
    for (std::uint64_t i = 0; i < n; ++i) {
        abs_copy[i] = std::fabs(values[i]);
    }

    // Stage 2: isinf() over the copy produces a boolean tensor...
    std::vector<std::uint8_t> inf_mask(n);
    meter.acquire(bool_bytes);
    for (std::uint64_t i = 0; i < n; ++i) {
        inf_mask[i] = std::isinf(abs_copy[i]) ? 1 : 0;
    }
    // ...which any() reduces.
    bool any_inf = false;
    for (std::uint64_t i = 0; i < n; ++i) {
        any_inf = any_inf || inf_mask[i] != 0;
    }
    inf_mask.clear();
    inf_mask.shrink_to_fit();
    meter.release(bool_bytes);
    abs_copy.clear();
    abs_copy.shrink_to_fit();
    meter.release(float_bytes);

    // Stage 3: isnan() skips the abs copy but still emits a boolean tensor.
    std::vector<std::uint8_t> nan_mask(n);
    meter.acquire(bool_bytes);
    for (std::uint64_t i = 0; i < n; ++i) {
        nan_mask[i] = std::isnan(values[i]) ? 1 : 0;
    }
    bool any_nan = false;
    for (std::uint64_t i = 0; i < n; ++i) {
        any_nan = any_nan || nan_mask[i] != 0;
    }
    nan_mask.clear();
    nan_mask.shrink_to_fit();
    meter.release(bool_bytes);

    result.overflow = any_inf || any_nan;
    result.peak_extra_bytes = meter.peak_bytes() - base_peak;
    return result;
}

namespace {

template <typename F>
std::uint64_t median_ns(F&& fn, int repeats) {
    std::vector<std::uint64_t> samples;
    samples.reserve(repeats);
    for (int r = 0; r < repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        samples.push_back(
            std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
    }
    std::sort(samples.begin(), samples.end());
    return samples[samples.size() / 2];
}

}  // namespace

std::vector<OverflowBenchRow> bench_overflow(const std::vector<std::uint64_t>& sizes,
                                             const ScanConfig& cfg, int repeats) {
    std::vector<OverflowBenchRow> rows;
    for (const std::uint64_t n : sizes) {
        if (n == 0) {
            raise(ErrorCode::invalid_argument, "bench size of zero elements");
        }
        GradFlatBuffer buf(n);
        auto vals = buf.values();
        for (std::uint64_t i = 0; i < n; ++i) {
            vals[i] = static_cast<float>(i % 97) * 0.125f;
        }

        OverflowBenchRow row;
        row.elements = n;
        volatile bool sink = false;
        fused_overflow_check(buf, cfg);  // warm
        row.fused_ns = median_ns([&] { sink = fused_overflow_check(buf, cfg).overflow; }, repeats);
        ScanConfig serial = cfg;
        serial.worker_count = 1;
        const std::uint64_t fused_serial_ns =
            median_ns([&] { sink = fused_overflow_check(buf, serial).overflow; }, repeats);
        MemoryMeter meter;
        row.naive_ns = median_ns(
            [&] {
                meter.reset();
                sink = naive_overflow_check(buf, meter).overflow;
            },
            repeats);
        MemoryMeter peak_meter;
        row.naive_peak_extra_bytes = naive_overflow_check(buf, peak_meter).peak_extra_bytes;
        row.speedup = row.fused_ns > 0
                          ? static_cast<double>(row.naive_ns) / static_cast<double>(row.fused_ns)
                          : 0.0;
        row.parallel_efficiency =
            (cfg.worker_count > 1 && row.fused_ns > 0)
                ? static_cast<double>(fused_serial_ns) /
                      (static_cast<double>(row.fused_ns) * cfg.worker_count)
                : 1.0;
        (void)sink;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace memascend
