// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "memascend/direct_io.hpp"
#include "memascend/model.hpp"
#include "memascend/optimizer.hpp"
#include "memascend/pool.hpp"

namespace memascend {

// ---------------------------------------------------------------------------
// Deterministic pseudo-gradient. Stands in for forward/backward: a seeded
// elementwise mix of the current compute weight and the step index. The same
// function defines the workload for the offloaded pipeline and any reference
// trainer, so both see identical gradients by construction.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline float pseudo_gradient(std::uint64_t seed, std::uint64_t step, std::uint64_t index,
                             float weight) {
    const std::uint64_t h = splitmix64(seed ^ splitmix64(step) ^ index);
    // Uniform in [-0.5, 0.5) from the top 24 bits.
    const float r = static_cast<float>(h >> 40) * (1.0f / 16777216.0f) - 0.5f;
    return 0.25f * r + 0.03125f * weight;
}

/// Deterministic initial weight in [-0.1, 0.1).
inline float seeded_weight(std::uint64_t seed, std::uint64_t index) {
    const std::uint64_t h = splitmix64(seed ^ splitmix64(index ^ 0xA5A5A5A5ull));
    return (static_cast<float>(h >> 40) * (1.0f / 16777216.0f) - 0.5f) * 0.2f;
}

// ---------------------------------------------------------------------------
// Transfer schedule: the itemized per-parameter byte movements per clean
// optimizer step, used both to predict I/O volume and to compare precision
// modes.

struct TransferItem {
    std::string name;
    bool read = false;
    std::uint32_t bytes_per_param = 0;
    bool per_tensor = false;  // shadow weights move per tensor; states per subgroup
};

struct TransferSchedule {
    std::vector<TransferItem> items;

    static TransferSchedule default_mixed();
    static TransferSchedule default_bf16();
    static TransferSchedule for_mode(OptimPrecision mode);
};

/// Sum of bytes_per_param over the schedule (28 for the default mixed
/// schedule, 12 for the default bf16 one).
std::uint32_t schedule_bytes_per_param(const TransferSchedule& schedule);

/// 1 - bf16_bytes/fp32_bytes for a schedule pair.
double io_reduction(const TransferSchedule& fp32_schedule, const TransferSchedule& bf16_schedule);

// ---------------------------------------------------------------------------
// Simulator

struct FaultInjection {
    std::uint64_t step = 0;
    std::uint64_t flat_index = 0;
    std::uint32_t bits = 0x7F800000u;  // +inf
};

struct SimConfig {
    ModelSpec model = preset("toy-dense");
    std::uint64_t steps = 10;
    std::uint64_t seed = 1;
    std::uint32_t inflight_blocks = 1;
    OptimPrecision precision = OptimPrecision::mixed_fp16_fp32master;
    PoolMode pool_mode = PoolMode::adaptive;
    AllocPolicyKind pinned_policy = AllocPolicyKind::alignment_free;
    bool naive_overflow_check = false;  // baseline check with its transient spike
    AdamHyper hyper;
    LossScaler scaler;
    std::optional<FaultInjection> fault;
    // Activation-checkpoint staging modeled by Eq-style sizing; affects
    // tracked peak bytes only.
    std::uint64_t batch = 1;
    std::uint64_t context = 128;
    std::uint32_t engine_workers = 2;
    std::uint32_t engine_queue_depth = 4;
    std::string device_dir;  // where virtual devices live; empty -> temp dir
    std::uint64_t device_bytes = 64ull << 20;
    std::uint32_t device_count = 2;
};

struct StepReport {
    std::uint64_t step = 0;
    bool overflow = false;
    float scale_after = 0.0f;
    std::uint64_t io_bytes = 0;  // engine bytes moved during this step
};

struct SimReport {
    std::uint64_t steps = 0;
    std::string master_digest;  // FNV-1a64 over final master (or bf16 weight) bytes
    std::uint64_t peak_tracked_bytes = 0;
    std::uint64_t init_io_bytes = 0;
    std::uint64_t total_io_bytes = 0;  // steady steps, excluding init
    double prefetch_seconds = 0.0;
    double grad_seconds = 0.0;
    double optimizer_seconds = 0.0;
    std::vector<StepReport> per_step;
    std::vector<std::uint64_t> overflow_steps;
    float final_scale = 0.0f;
    PoolStats pool_stats;
    EngineStats engine_stats;
    std::map<std::string, std::uint64_t> tracked_components;
};

/// Offloaded training-step pipeline: prefetch through the pool, pseudo
/// gradients into the fp32 flat buffer, one overflow check per step, per
/// subgroup optimizer state swapped through the store.
SimReport run_training(const SimConfig& cfg);

/// Predicted engine bytes for one clean step of cfg's pipeline (request
/// padding included), for cross-checking instrumented counters.
std::uint64_t predict_step_bytes(const SimConfig& cfg, const TransferSchedule& schedule);

/// Predicted engine bytes for the one-time state initialization.
std::uint64_t predict_init_bytes(const SimConfig& cfg);

std::string fnv1a_hex(const void* data, std::size_t bytes);

}  // namespace memascend
