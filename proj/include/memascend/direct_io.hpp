// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <memory>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace memascend {

inline constexpr std::uint64_t kIoGranule = 4096;  // every offset/length is a multiple

enum class DeviceKind { raw_block, file_backed_virtual };

struct DeviceSpec {
    std::string path;
    std::uint64_t capacity_bytes = 0;
    DeviceKind kind = DeviceKind::file_backed_virtual;
};

struct DeviceSet {
    std::vector<DeviceSpec> devices;
};

struct Extent {
    std::uint32_t device_index = 0;
    std::uint64_t device_offset = 0;
    std::uint64_t length = 0;  // multiple of kIoGranule
};

struct TensorLocation {
    std::uint64_t logical_length = 0;
    std::uint64_t padded_length = 0;
    std::vector<Extent> extents;
};

enum class IoBackend { auto_probe, sync_pio, posix_aio };

struct EngineConfig {
    std::uint32_t workers = 2;
    std::uint32_t queue_depth = 8;  // concurrent AIO submissions per worker
    IoBackend backend = IoBackend::auto_probe;
    bool cache_bypass = true;       // open devices with O_DIRECT
    std::string manifest_path;      // persisted location table; empty -> volatile
};

struct EngineStats {
    std::uint64_t bytes_written = 0;   // padded bytes submitted to devices
    std::uint64_t bytes_read = 0;
    std::uint64_t write_requests = 0;  // tensor-level operations
    std::uint64_t read_requests = 0;
    std::uint64_t submitted_ios = 0;   // device-level chunk submissions
    std::uint64_t abandoned_bytes = 0; // extents orphaned by grow-rewrites
};

/// Per-device next-free offset, advanced atomically. The cross-process flavor
/// backs each counter with a lockable file so cooperating processes never
/// claim overlapping spans.
class SharedCursor {
public:
    SharedCursor() = default;
    explicit SharedCursor(std::uint32_t device_count);
    /// Cross-process mode: counters live in `path`, guarded by flock().
    SharedCursor(std::uint32_t device_count, const std::string& path);
    ~SharedCursor();
    SharedCursor(const SharedCursor&) = delete;
    SharedCursor& operator=(const SharedCursor&) = delete;

    /// Claims [old, old+bytes) on the device and returns old.
    std::uint64_t advance(std::uint32_t device, std::uint64_t bytes);
    std::uint64_t position(std::uint32_t device) const;
    void restore(std::uint32_t device, std::uint64_t position);

private:
    mutable std::mutex mu_;
    std::vector<std::atomic<std::uint64_t>> local_;
    std::string path_;
    int fd_ = -1;
};

using IoTraceFn =
    std::function<void(std::uint32_t device, std::uint64_t offset, std::uint64_t length, bool write)>;

/// Key-addressed tensor store on raw or file-backed devices. Writes stripe
/// each padded payload in equal portions across the device set, claim space
/// through the shared cursors exactly once per key, and fan chunks out to a
/// worker pool that submits cache-bypassing positional or POSIX AIO requests.
class DirectIoEngine {
public:
    DirectIoEngine(DeviceSet devset, EngineConfig config);
    ~DirectIoEngine();
    DirectIoEngine(const DirectIoEngine&) = delete;
    DirectIoEngine& operator=(const DirectIoEngine&) = delete;

    /// Claims striped extents for the padded payload. First allocation per
    /// key only; a repeat call for a fitting size returns the existing
    /// extents.
    std::vector<Extent> allocate_extents(const std::string& key, std::uint64_t logical_bytes);

    /// src must start 4096-aligned and cover the padded length.
    void write_tensor(const std::string& key, std::span<const std::byte> src,
                      std::uint64_t logical_bytes);

    /// dst must start 4096-aligned and cover the padded length. Returns the
    /// logical length restored into dst.
    std::uint64_t read_tensor(const std::string& key, std::span<std::byte> dst);

    bool contains(const std::string& key) const;
    TensorLocation location(const std::string& key) const;
    std::vector<std::pair<std::string, TensorLocation>> all_locations() const;

    EngineStats stats() const;
    IoBackend active_backend() const noexcept { return backend_; }
    std::uint64_t total_capacity() const noexcept { return total_capacity_; }
    std::uint32_t device_count() const noexcept { return static_cast<std::uint32_t>(fds_.size()); }

    /// Test hook observing each device-level submission.
    void set_io_trace(IoTraceFn fn);

    /// Writes the versioned manifest (device list, cursors, extent table) to
    /// config.manifest_path. Called automatically by the destructor when a
    /// path is configured.
    void save_manifest() const;

    /// Creates `count` preallocated files of `bytes` each under dir and
    /// returns a DeviceSet over them.
    static DeviceSet create_virtual_devices(const std::string& dir, std::uint32_t count,
                                            std::uint64_t bytes);

private:
    struct Task {
        int fd = -1;
        std::uint32_t device = 0;
        std::uint64_t offset = 0;
        std::byte* buf = nullptr;
        std::uint64_t length = 0;
        bool write = false;
        struct OpState* op = nullptr;
    };

    void worker_loop();
    void run_task(const Task& task);
    void submit_sync(const Task& task);
    void submit_posix_aio(const Task& task);
    void enqueue_op(std::span<std::byte> buf, std::uint64_t padded, bool write,
                    const TensorLocation& loc);
    void load_manifest();

    std::vector<DeviceSpec> specs_;
    std::vector<int> fds_;
    std::uint64_t total_capacity_ = 0;
    EngineConfig config_;
    IoBackend backend_ = IoBackend::sync_pio;

    std::unique_ptr<SharedCursor> cursors_;
    mutable std::mutex table_mu_;
    std::map<std::string, TensorLocation> table_;
    std::unordered_set<std::string> busy_keys_;  // per-key op guard
    EngineStats stats_;
    IoTraceFn trace_;

    std::mutex queue_mu_;
    std::condition_variable queue_cv_;
    std::deque<Task> queue_;
    bool stopping_ = false;
    std::vector<std::thread> workers_;
};

/// One file per tensor through the filesystem, cache bypass on. The baseline
/// the direct engine is benchmarked against.
class FsBaselineStore {
public:
    explicit FsBaselineStore(std::string dir, bool cache_bypass = true);

    void write(const std::string& key, std::span<const std::byte> src, std::uint64_t logical_bytes);
    std::uint64_t read(const std::string& key, std::span<std::byte> dst);
    std::string path_for(const std::string& key) const;

private:
    std::string dir_;
    bool cache_bypass_;
};

}  // namespace memascend
