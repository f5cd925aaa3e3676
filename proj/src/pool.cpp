// SPDX-License-Identifier: Apache-2.0
#include "memascend/pool.hpp"

#include <algorithm>

#include "memascend/error.hpp"

namespace memascend {

namespace {

constexpr std::uint64_t kIoAlign = 4096;  // slot starts feed the direct I/O engine

std::uint64_t align_up(std::uint64_t v, std::uint64_t a) { return (v + a - 1) / a * a; }

struct PoolLayout {
    std::vector<Pool::ClassInfo> classes;
    std::uint64_t payload_capacity = 0;
    std::uint64_t backing_bytes = 0;
};

PoolLayout plan_layout(const std::vector<TensorDescriptor>& inventory, PoolMode mode,
                       std::uint64_t inflight_blocks) {
    if (inventory.empty()) {
        raise(ErrorCode::invalid_argument, "cannot build a pool over an empty inventory");
    }
    if (inflight_blocks == 0) {
        raise(ErrorCode::invalid_argument, "inflight_blocks must be >= 1");
    }
    const auto shape_classes = classify(inventory);

    PoolLayout layout;
    if (mode == PoolMode::adaptive) {
        for (const auto& cls : shape_classes) {
            Pool::ClassInfo info;
            info.class_id = cls.class_id;
            info.slot_payload_bytes = cls.buffer_bytes;
            info.slot_count = cls.global_members + cls.members_per_layer * inflight_blocks;
            layout.classes.push_back(info);
        }
    } else {
        std::uint64_t max_bytes = 0;
        std::uint64_t per_block = 0;
        std::uint64_t global = 0;
        for (const auto& cls : shape_classes) {
            max_bytes = std::max(max_bytes, cls.buffer_bytes);
            per_block += cls.members_per_layer;
            global += cls.global_members;
        }
        Pool::ClassInfo info;
        info.class_id = "monolithic";
        info.slot_payload_bytes = max_bytes;
        info.slot_count = per_block * inflight_blocks + global;
        layout.classes.push_back(info);
    }

    std::uint64_t offset = 0;
    for (auto& cls : layout.classes) {
        cls.base_offset = offset;
        cls.slot_stride = align_up(cls.slot_payload_bytes, kIoAlign);
        offset += cls.slot_stride * cls.slot_count;
        layout.payload_capacity += cls.slot_payload_bytes * cls.slot_count;
    }
    layout.backing_bytes = offset;
    return layout;
}

}  // namespace

std::uint64_t pool_capacity(const std::vector<TensorDescriptor>& inventory, PoolMode mode,
                            std::uint64_t inflight_blocks) {
    return plan_layout(inventory, mode, inflight_blocks).payload_capacity;
}

Pool::Pool(const std::vector<TensorDescriptor>& inventory, const PoolConfig& config,
           PinnedAllocator& allocator)
    : config_(config), allocator_(allocator) {
    auto layout = plan_layout(inventory, config.mode, config.inflight_blocks);
    classes_ = std::move(layout.classes);
    runtime_.resize(classes_.size());
    for (std::size_t c = 0; c < classes_.size(); ++c) {
        runtime_[c].free_slots.reserve(classes_[c].slot_count);
        for (std::uint32_t s = classes_[c].slot_count; s > 0; --s) {
            runtime_[c].free_slots.push_back(s - 1);
        }
    }

    // Associate every tensor with its slot class so checkout(key) can verify
    // the payload fits the exact-size slot.
    const auto shape_classes = classify(inventory);
    for (const auto& t : inventory) {
        if (config.mode == PoolMode::monolithic) {
            tensor_class_[t.name] = 0;
            continue;
        }
        const std::uint64_t bytes = tensor_bytes(t);
        for (std::uint32_t c = 0; c < classes_.size(); ++c) {
            if (classes_[c].slot_payload_bytes == bytes) {
                tensor_class_[t.name] = c;
                break;
            }
        }
    }

    backing_ = allocator_.allocate(std::max<std::uint64_t>(layout.backing_bytes, 1),
                                   config.backing_policy, config.lock_pages);
    stats_.capacity_bytes = layout.payload_capacity;
    stats_.backing_bytes = layout.backing_bytes;
}

std::uint32_t Pool::class_for(const std::string& key, std::uint64_t payload_bytes) const {
    auto it = tensor_class_.find(key);
    if (it != tensor_class_.end()) {
        return it->second;
    }
    // Unknown key: fall back to the tightest class that fits the payload.
    std::uint32_t best = UINT32_MAX;
    std::uint64_t best_size = UINT64_MAX;
    for (std::uint32_t c = 0; c < classes_.size(); ++c) {
        if (classes_[c].slot_payload_bytes >= payload_bytes &&
            classes_[c].slot_payload_bytes < best_size) {
            best = c;
            best_size = classes_[c].slot_payload_bytes;
        }
    }
    if (best == UINT32_MAX) {
        raise(ErrorCode::size_violation,
              "payload of " + std::to_string(payload_bytes) + " bytes fits no slot class");
    }
    return best;
}

BufferHandle Pool::checkout(const std::string& key, std::uint64_t payload_bytes) {
    if (payload_bytes == 0) {
        raise(ErrorCode::invalid_argument, "zero-byte checkout for '" + key + "'");
    }
    std::unique_lock lock(mu_);
    if (ledger_.contains(key)) {
        raise(ErrorCode::already_checked_out, "'" + key + "' is already checked out");
    }
    const std::uint32_t c = class_for(key, payload_bytes);
    const ClassInfo& info = classes_[c];
    if (payload_bytes > info.slot_payload_bytes) {
        raise(ErrorCode::size_violation, "payload of " + std::to_string(payload_bytes) +
                                             " bytes exceeds slot size " +
                                             std::to_string(info.slot_payload_bytes) + " ('" +
                                             key + "')");
    }
    if (runtime_[c].free_slots.empty()) {
        if (!config_.blocking_checkout) {
            raise(ErrorCode::pool_exhausted,
                  "class " + info.class_id + " has no free buffers for '" + key + "'");
        }
        const auto wait_start = std::chrono::steady_clock::now();
        cv_.wait(lock, [&] { return !runtime_[c].free_slots.empty(); });
        stats_.blocked_time += std::chrono::steady_clock::now() - wait_start;
    }
    const std::uint32_t slot = runtime_[c].free_slots.back();
    runtime_[c].free_slots.pop_back();

    BufferHandle handle;
    handle.key = key;
    handle.offset = info.base_offset + std::uint64_t{slot} * info.slot_stride;
    handle.length = payload_bytes;
    handle.class_index = c;
    handle.slot_index = slot;
    handle.checked_out = true;

    ledger_[key] = handle;
    stats_.checkout_count += 1;
    stats_.live_bytes += payload_bytes;
    stats_.peak_live_bytes = std::max(stats_.peak_live_bytes, stats_.live_bytes);
    return handle;
}

void Pool::checkin(const BufferHandle& handle) {
    std::lock_guard lock(mu_);
    auto it = ledger_.find(handle.key);
    if (it == ledger_.end() || it->second.slot_index != handle.slot_index ||
        it->second.class_index != handle.class_index) {
        raise(ErrorCode::lifecycle, "checkin of a handle the pool does not hold ('" +
                                        handle.key + "')");
    }
    runtime_[handle.class_index].free_slots.push_back(handle.slot_index);
    stats_.live_bytes -= it->second.length;
    stats_.checkin_count += 1;
    ledger_.erase(it);
    cv_.notify_all();
}

std::span<std::byte> Pool::span(const BufferHandle& handle) {
    std::lock_guard lock(mu_);
    auto it = ledger_.find(handle.key);
    if (it == ledger_.end()) {
        raise(ErrorCode::lifecycle, "span() on a handle that is not checked out");
    }
    return backing_.bytes().subspan(handle.offset, handle.length);
}

std::span<std::byte> Pool::padded_span(const BufferHandle& handle) {
    std::lock_guard lock(mu_);
    auto it = ledger_.find(handle.key);
    if (it == ledger_.end()) {
        raise(ErrorCode::lifecycle, "padded_span() on a handle that is not checked out");
    }
    return backing_.bytes().subspan(handle.offset, align_up(handle.length, kIoAlign));
}

PoolStats Pool::stats() const {
    std::lock_guard lock(mu_);
    return stats_;
}

std::vector<std::pair<std::uint64_t, std::uint64_t>> Pool::live_extents() const {
    std::lock_guard lock(mu_);
    std::vector<std::pair<std::uint64_t, std::uint64_t>> out;
    out.reserve(ledger_.size());
    for (const auto& [key, h] : ledger_) {
        out.emplace_back(h.offset, h.length);
    }
    return out;
}

double fragmentation(std::uint64_t capacity_bytes, std::uint64_t peak_live_bytes) {
    if (capacity_bytes == 0) {
        raise(ErrorCode::invalid_argument, "fragmentation over zero capacity");
    }
    if (peak_live_bytes > capacity_bytes) {
        raise(ErrorCode::invalid_argument, "peak live bytes exceed capacity");
    }
    return static_cast<double>(capacity_bytes - peak_live_bytes) /
           static_cast<double>(capacity_bytes);
}

}  // namespace memascend
