// SPDX-License-Identifier: Apache-2.0
#include "memascend/simulator.hpp"

#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <exception>
#include <filesystem>
#include <mutex>
#include <random>
#include <thread>
#include <unistd.h>

#include "memascend/error.hpp"
#include "memascend/halfprec.hpp"
#include "memascend/meter.hpp"
#include "memascend/overflow.hpp"

namespace memascend {

namespace {

constexpr std::uint64_t align4k(std::uint64_t v) { return (v + 4095) / 4096 * 4096; }

struct TensorRec {
    TensorDescriptor desc;
    std::uint64_t elems = 0;
    std::uint64_t flat_offset = 0;
    std::uint32_t group = 0;
};

struct GroupRec {
    std::string name;
    std::uint64_t flat_offset = 0;
    std::uint64_t elems = 0;
    std::vector<std::uint32_t> tensors;
};

struct SimPlan {
    std::vector<TensorRec> tensors;
    std::vector<GroupRec> groups;
    std::uint64_t total_elems = 0;
};

// Subgroup granularity: embedding, LM head, then one group per transformer
// block (the default optimizer swap unit).
SimPlan plan_model(const ModelSpec& model) {
    SimPlan plan;
    auto inventory = enumerate_offload_tensors(model, model.ranks);

    auto group_of = [&](const TensorDescriptor& t) -> std::string {
        if (!is_per_layer_role(t.role)) return t.name;
        return t.name.substr(0, t.name.find('.'));
    };

    std::uint64_t offset = 0;
    for (auto& t : inventory) {
        const std::string gname = group_of(t);
        std::uint32_t gidx = UINT32_MAX;
        for (std::uint32_t g = 0; g < plan.groups.size(); ++g) {
            if (plan.groups[g].name == gname) {
                gidx = g;
                break;
            }
        }
        if (gidx == UINT32_MAX) {
            gidx = static_cast<std::uint32_t>(plan.groups.size());
            plan.groups.push_back({gname, offset, 0, {}});
        }
        TensorRec rec;
        rec.desc = t;
        rec.elems = t.rows * t.cols;
        rec.flat_offset = offset;
        rec.group = gidx;
        plan.groups[gidx].elems += rec.elems;
        plan.groups[gidx].tensors.push_back(static_cast<std::uint32_t>(plan.tensors.size()));
        plan.tensors.push_back(std::move(rec));
        offset += plan.tensors.back().elems;
    }
    plan.total_elems = offset;
    return plan;
}

struct ScopedDir {
    std::filesystem::path path;
    bool owned = false;

    ~ScopedDir() {
        if (owned) {
            std::error_code ec;
            std::filesystem::remove_all(path, ec);
        }
    }
};

[[noreturn]] void rethrow_with_step(const Error& e, std::uint64_t step) {
    throw Error(e.code(), "step " + std::to_string(step) + ": " + e.what());
}

}  // namespace

TransferSchedule TransferSchedule::default_mixed() {
    TransferSchedule s;
    s.items = {
        {"master", true, 4, false},  {"master", false, 4, false},
        {"momentum", true, 4, false}, {"momentum", false, 4, false},
        {"variance", true, 4, false}, {"variance", false, 4, false},
        {"shadow", false, 2, true},   {"shadow", true, 2, true},
    };
    return s;
}

TransferSchedule TransferSchedule::default_bf16() {
    TransferSchedule s;
    s.items = {
        {"weights", true, 2, true},   {"weights", false, 2, true},
        {"momentum", true, 2, false}, {"momentum", false, 2, false},
        {"variance", true, 2, false}, {"variance", false, 2, false},
    };
    return s;
}

TransferSchedule TransferSchedule::for_mode(OptimPrecision mode) {
    return mode == OptimPrecision::pure_bf16 ? default_bf16() : default_mixed();
}

std::uint32_t schedule_bytes_per_param(const TransferSchedule& schedule) {
    if (schedule.items.empty()) {
        raise(ErrorCode::invalid_argument, "transfer schedule is empty");
    }
    std::uint32_t total = 0;
    for (const auto& item : schedule.items) {
        total += item.bytes_per_param;
    }
    return total;
}

double io_reduction(const TransferSchedule& fp32_schedule, const TransferSchedule& bf16_schedule) {
    const double full = schedule_bytes_per_param(fp32_schedule);
    const double half = schedule_bytes_per_param(bf16_schedule);
    return 1.0 - half / full;
}

std::uint64_t predict_step_bytes(const SimConfig& cfg, const TransferSchedule& schedule) {
    if (schedule.items.empty()) {
        raise(ErrorCode::invalid_argument, "transfer schedule is empty");
    }
    const auto plan = plan_model(cfg.model);
    std::uint64_t total = 0;
    for (const auto& item : schedule.items) {
        if (item.per_tensor) {
            for (const auto& t : plan.tensors) {
                total += align4k(t.elems * item.bytes_per_param);
            }
        } else {
            for (const auto& g : plan.groups) {
                total += align4k(g.elems * item.bytes_per_param);
            }
        }
    }
    return total;
}

std::uint64_t predict_init_bytes(const SimConfig& cfg) {
    const auto plan = plan_model(cfg.model);
    const bool mixed = cfg.precision == OptimPrecision::mixed_fp16_fp32master;
    const std::uint32_t state_bpe = mixed ? 4 : 2;
    std::uint64_t total = 0;
    for (const auto& t : plan.tensors) {
        total += align4k(t.elems * 2);  // compute-precision weights
    }
    for (const auto& g : plan.groups) {
        if (mixed) {
            total += align4k(g.elems * 4);  // master
        }
        total += 2 * align4k(g.elems * state_bpe);  // momentum + variance
    }
    return total;
}

std::string fnv1a_hex(const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 1469598103934665603ull;
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

/// Ready-buffer queue between the prefetch thread and the compute stage.
struct PrefetchQueue {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<std::pair<std::uint32_t, BufferHandle>> ready;
    bool done = false;
    std::exception_ptr error;

    void push(std::uint32_t tensor, BufferHandle handle) {
        {
            std::lock_guard lock(mu);
            ready.emplace_back(tensor, std::move(handle));
        }
        cv.notify_one();
    }

    bool pop(std::pair<std::uint32_t, BufferHandle>& out) {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return !ready.empty() || done || error; });
        if (error) std::rethrow_exception(error);
        if (ready.empty()) return false;
        out = std::move(ready.front());
        ready.pop_front();
        return true;
    }

    void finish(std::exception_ptr err = nullptr) {
        {
            std::lock_guard lock(mu);
            done = true;
            error = err;
        }
        cv.notify_all();
    }
};

struct PhaseTimer {
    double& sink;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    explicit PhaseTimer(double& s) : sink(s) {}
    ~PhaseTimer() {
        sink += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

}  // namespace

SimReport run_training(const SimConfig& cfg) {
    SimReport report;
    if (cfg.steps == 0) {
        return report;
    }
    cfg.model.validate();

    const bool mixed = cfg.precision == OptimPrecision::mixed_fp16_fp32master;
    const auto plan = plan_model(cfg.model);
    const std::uint64_t n = plan.total_elems;

    MemoryMeter meter;
    PinnedAllocator& alloc = PinnedAllocator::global();
    const AllocationPolicy pinned_policy{cfg.pinned_policy};

    // Devices (virtual files unless a directory of real ones is given).
    ScopedDir dir;
    if (cfg.device_dir.empty()) {
        std::random_device rd;
        dir.path = std::filesystem::temp_directory_path() /
                   ("memascend-sim-" + std::to_string(::getpid()) + "-" +
                    std::to_string(rd()));
        dir.owned = true;
    } else {
        dir.path = cfg.device_dir;
    }
    auto devset = DirectIoEngine::create_virtual_devices(dir.path.string(), cfg.device_count,
                                                         cfg.device_bytes);
    EngineConfig ecfg;
    ecfg.workers = cfg.engine_workers;
    ecfg.queue_depth = cfg.engine_queue_depth;
    DirectIoEngine engine(std::move(devset), ecfg);

    // Staging pool over the compute-precision inventory.
    PoolConfig pcfg;
    pcfg.mode = cfg.pool_mode;
    pcfg.inflight_blocks = cfg.inflight_blocks;
    pcfg.backing_policy = AllocationPolicy{cfg.pinned_policy};
    pcfg.blocking_checkout = true;
    auto inventory = enumerate_offload_tensors(cfg.model, cfg.model.ranks);
    Pool pool(inventory, pcfg, alloc);
    meter.add_component("pool_backing", pool.stats().backing_bytes);

    // fp32 gradient flat buffer.
    GradFlatBuffer flat(n, alloc);
    meter.add_component("grad_flat_buffer", flat.backing().capacity_bytes());

    // Activation-checkpoint staging (contents untouched; sizing is what the
    // peak tracking needs).
    const std::uint64_t act_core = cfg.model.ranks * cfg.batch * cfg.context * cfg.model.layers *
                                   cfg.model.hidden * 2;
    PinnedRegion act_region;
    if (act_core > 0) {
        act_region = alloc.allocate(act_core, pinned_policy);
        meter.add_component("activation_checkpoints", act_region.capacity_bytes());
    }

    // Optimizer swap buffers sized to the largest subgroup.
    std::uint64_t max_group_elems = 0;
    std::uint64_t max_tensor_elems = 0;
    for (const auto& g : plan.groups) max_group_elems = std::max(max_group_elems, g.elems);
    for (const auto& t : plan.tensors) max_tensor_elems = std::max(max_tensor_elems, t.elems);

    const std::uint32_t state_bpe = mixed ? 4 : 2;
    PinnedRegion swap_master;
    if (mixed) {
        swap_master = alloc.allocate(max_group_elems * 4, pinned_policy);
        meter.add_component("swap_master", swap_master.capacity_bytes());
    }
    PinnedRegion swap_m = alloc.allocate(max_group_elems * state_bpe, pinned_policy);
    PinnedRegion swap_v = alloc.allocate(max_group_elems * state_bpe, pinned_policy);
    meter.add_component("swap_momentum", swap_m.capacity_bytes());
    meter.add_component("swap_variance", swap_v.capacity_bytes());
    PinnedRegion wstage = alloc.allocate(max_tensor_elems * 2, pinned_policy);
    meter.add_component("weight_stage", wstage.capacity_bytes());

    // Pure-bf16 keeps the step's weight partition resident between the
    // forward read and the in-place update, so weights move over the bus
    // once each way per step.
    PinnedRegion weight_partition;
    if (!mixed) {
        weight_partition = alloc.allocate(n * 2, pinned_policy);
        meter.add_component("weight_partition", weight_partition.capacity_bytes());
    }

    auto wkey = [](const TensorRec& t) { return "w." + t.desc.name; };

    // ---------------------------------------------------------------- init
    {
        auto* w16 = reinterpret_cast<std::uint16_t*>(wstage.data());
        for (const auto& t : plan.tensors) {
            for (std::uint64_t k = 0; k < t.elems; ++k) {
                const float w = seeded_weight(cfg.seed, t.flat_offset + k);
                w16[k] = mixed ? fp16_from_float(w) : bf16_from_float(w);
            }
            engine.write_tensor(wkey(t), wstage.bytes(), t.elems * 2);
        }
        auto* mstate = reinterpret_cast<std::byte*>(swap_m.data());
        auto* vstate = reinterpret_cast<std::byte*>(swap_v.data());
        for (const auto& g : plan.groups) {
            if (mixed) {
                auto* master = reinterpret_cast<float*>(swap_master.data());
                for (std::uint64_t k = 0; k < g.elems; ++k) {
                    master[k] = seeded_weight(cfg.seed, g.flat_offset + k);
                }
                engine.write_tensor("master." + g.name, swap_master.bytes(), g.elems * 4);
            }
            std::memset(mstate, 0, g.elems * state_bpe);
            std::memset(vstate, 0, g.elems * state_bpe);
            engine.write_tensor("m." + g.name, swap_m.bytes(), g.elems * state_bpe);
            engine.write_tensor("v." + g.name, swap_v.bytes(), g.elems * state_bpe);
        }
        report.init_io_bytes = engine.stats().bytes_written + engine.stats().bytes_read;
    }

    LossScaler scaler = cfg.scaler;
    AdamHyper hyper = cfg.hyper;
    std::uint64_t update_count = 0;
    std::uint64_t io_before_step = report.init_io_bytes;

    ScanConfig scan_cfg;
    scan_cfg.worker_count = 2;

    // ---------------------------------------------------------------- steps
    for (std::uint64_t step = 0; step < cfg.steps; ++step) {
        PrefetchQueue queue;
        std::thread prefetcher([&] {
            PhaseTimer timer(report.prefetch_seconds);
            try {
                for (std::uint32_t ti = 0; ti < plan.tensors.size(); ++ti) {
                    const auto& t = plan.tensors[ti];
                    BufferHandle handle = pool.checkout(t.desc.name, t.elems * 2);
                    engine.read_tensor(wkey(t), pool.padded_span(handle));
                    queue.push(ti, std::move(handle));
                }
                queue.finish();
            } catch (...) {
                queue.finish(std::current_exception());
            }
        });

        auto flat_vals = flat.values();
        try {
            PhaseTimer timer(report.grad_seconds);
            // Embedding and head stay staged across the step; block buffers
            // are held until the whole block's gradients are done, which
            // keeps the pipeline exactly N blocks deep.
            std::vector<BufferHandle> step_held;
            std::vector<BufferHandle> block_held;
            std::pair<std::uint32_t, BufferHandle> item;
            while (queue.pop(item)) {
                const auto& t = plan.tensors[item.first];
                auto span = pool.span(item.second);
                const auto* w16 = reinterpret_cast<const std::uint16_t*>(span.data());
                if (!mixed) {
                    auto* partition = reinterpret_cast<std::uint16_t*>(weight_partition.data());
                    std::memcpy(partition + t.flat_offset, w16, t.elems * 2);
                }
                for (std::uint64_t k = 0; k < t.elems; ++k) {
                    const float w = mixed ? fp16_to_float(w16[k]) : bf16_to_float(w16[k]);
                    const float g = pseudo_gradient(cfg.seed, step, t.flat_offset + k, w);
                    flat_vals[t.flat_offset + k] = g * scaler.scale;
                }
                if (is_per_layer_role(t.desc.role)) {
                    block_held.push_back(std::move(item.second));
                    if (block_held.size() == plan.groups[t.group].tensors.size()) {
                        for (auto& h : block_held) pool.checkin(h);
                        block_held.clear();
                    }
                } else {
                    step_held.push_back(std::move(item.second));
                }
            }
            for (auto& h : block_held) pool.checkin(h);
            for (auto& h : step_held) pool.checkin(h);
        } catch (const Error& e) {
            prefetcher.join();
            rethrow_with_step(e, step);
        } catch (...) {
            prefetcher.join();
            throw;
        }
        prefetcher.join();

        if (cfg.fault && cfg.fault->step == step) {
            flat_vals[cfg.fault->flat_index % n] = bits_float(cfg.fault->bits);
        }

        bool overflow = false;
        if (cfg.naive_overflow_check) {
            overflow = naive_overflow_check(flat, meter).overflow;
        } else {
            overflow = fused_overflow_check(flat, scan_cfg, &meter).overflow;
        }

        if (overflow) {
            scaler.on_overflow();
            report.overflow_steps.push_back(step);
        } else {
            PhaseTimer timer(report.optimizer_seconds);
            const float scale_now = scaler.scale;
            update_count += 1;
            try {
                for (const auto& g : plan.groups) {
                    auto grads = flat_vals.subspan(g.flat_offset, g.elems);
                    engine.read_tensor("m." + g.name, swap_m.bytes());
                    engine.read_tensor("v." + g.name, swap_v.bytes());
                    if (mixed) {
                        engine.read_tensor("master." + g.name, swap_master.bytes());
                        std::span<float> master{reinterpret_cast<float*>(swap_master.data()),
                                                g.elems};
                        std::span<float> m{reinterpret_cast<float*>(swap_m.data()), g.elems};
                        std::span<float> v{reinterpret_cast<float*>(swap_v.data()), g.elems};
                        adam_step_fp32(master, m, v, grads, update_count, hyper, scale_now);
                        engine.write_tensor("master." + g.name, swap_master.bytes(), g.elems * 4);
                        engine.write_tensor("m." + g.name, swap_m.bytes(), g.elems * 4);
                        engine.write_tensor("v." + g.name, swap_v.bytes(), g.elems * 4);
                        // Refresh the compute-precision shadows.
                        auto* w16 = reinterpret_cast<std::uint16_t*>(wstage.data());
                        for (const std::uint32_t ti : g.tensors) {
                            const auto& t = plan.tensors[ti];
                            const std::uint64_t local = t.flat_offset - g.flat_offset;
                            for (std::uint64_t k = 0; k < t.elems; ++k) {
                                w16[k] = fp16_from_float(master[local + k]);
                            }
                            engine.write_tensor(wkey(t), wstage.bytes(), t.elems * 2);
                        }
                    } else {
                        auto* partition = reinterpret_cast<std::uint16_t*>(weight_partition.data());
                        std::span<std::uint16_t> weights{partition + g.flat_offset, g.elems};
                        std::span<std::uint16_t> m{reinterpret_cast<std::uint16_t*>(swap_m.data()),
                                                   g.elems};
                        std::span<std::uint16_t> v{reinterpret_cast<std::uint16_t*>(swap_v.data()),
                                                   g.elems};
                        adam_step_bf16(weights, m, v, grads, update_count, hyper, scale_now);
                        engine.write_tensor("m." + g.name, swap_m.bytes(), g.elems * 2);
                        engine.write_tensor("v." + g.name, swap_v.bytes(), g.elems * 2);
                        auto* w16 = reinterpret_cast<std::uint16_t*>(wstage.data());
                        for (const std::uint32_t ti : g.tensors) {
                            const auto& t = plan.tensors[ti];
                            std::memcpy(w16, partition + t.flat_offset, t.elems * 2);
                            engine.write_tensor(wkey(t), wstage.bytes(), t.elems * 2);
                        }
                    }
                }
            } catch (const Error& e) {
                rethrow_with_step(e, step);
            }
            scaler.on_clean_step();
        }

        const auto estats = engine.stats();
        const std::uint64_t io_now = estats.bytes_written + estats.bytes_read;
        StepReport sr;
        sr.step = step;
        sr.overflow = overflow;
        sr.scale_after = scaler.scale;
        sr.io_bytes = io_now - io_before_step;
        io_before_step = io_now;
        report.total_io_bytes += sr.io_bytes;
        report.per_step.push_back(sr);
    }

    // ------------------------------------------------------------- wrap up
    report.steps = cfg.steps;
    report.final_scale = scaler.scale;

    std::uint64_t digest_h = 1469598103934665603ull;
    auto digest_mix = [&digest_h](const void* data, std::size_t bytes) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < bytes; ++i) {
            digest_h ^= p[i];
            digest_h *= 1099511628211ull;
        }
    };
    if (mixed) {
        for (const auto& g : plan.groups) {
            engine.read_tensor("master." + g.name, swap_master.bytes());
            digest_mix(swap_master.data(), g.elems * 4);
        }
    } else {
        digest_mix(weight_partition.data(), n * 2);
    }
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(digest_h));
    report.master_digest = hex;

    report.pool_stats = pool.stats();
    report.engine_stats = engine.stats();
    report.peak_tracked_bytes = meter.peak_bytes();
    report.tracked_components = meter.components();
    return report;
}

}  // namespace memascend
