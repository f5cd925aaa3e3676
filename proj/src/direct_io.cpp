// SPDX-License-Identifier: Apache-2.0
#include "memascend/direct_io.hpp"

#include <aio.h>
#include <fcntl.h>
#include <sys/file.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cctype>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "memascend/error.hpp"
#include <json.hpp>

namespace memascend {

namespace {

std::uint64_t align_up(std::uint64_t v, std::uint64_t a) { return (v + a - 1) / a * a; }

bool is_aligned_ptr(const void* p) {
    return reinterpret_cast<std::uintptr_t>(p) % kIoGranule == 0;
}

int open_device(const DeviceSpec& spec, bool cache_bypass) {
    int flags = O_RDWR;
    if (cache_bypass) {
        flags |= O_DIRECT;
    }
    int fd = ::open(spec.path.c_str(), flags);
    if (fd < 0 && cache_bypass && (errno == EINVAL || errno == ENOTSUP)) {
        raise(ErrorCode::capability,
              "cache bypass (O_DIRECT) unsupported for '" + spec.path + "'");
    }
    if (fd < 0) {
        raise(ErrorCode::device_error,
              "cannot open device '" + spec.path + "': " + std::strerror(errno));
    }
    return fd;
}

}  // namespace

// ---------------------------------------------------------------------------
// SharedCursor

SharedCursor::SharedCursor(std::uint32_t device_count) : local_(device_count) {
    for (auto& c : local_) c.store(0);
}

SharedCursor::SharedCursor(std::uint32_t device_count, const std::string& path)
    : local_(device_count), path_(path) {
    for (auto& c : local_) c.store(0);
    fd_ = ::open(path.c_str(), O_CREAT | O_RDWR, 0644);
    if (fd_ < 0) {
        raise(ErrorCode::device_error, "cannot open cursor file '" + path + "'");
    }
    struct stat st{};
    ::fstat(fd_, &st);
    const std::size_t want = device_count * sizeof(std::uint64_t);
    if (static_cast<std::size_t>(st.st_size) < want) {
        if (::ftruncate(fd_, static_cast<off_t>(want)) != 0) {
            raise(ErrorCode::device_error, "cannot size cursor file '" + path + "'");
        }
    } else {
        std::vector<std::uint64_t> vals(device_count);
        if (::pread(fd_, vals.data(), want, 0) == static_cast<ssize_t>(want)) {
            for (std::uint32_t i = 0; i < device_count; ++i) local_[i].store(vals[i]);
        }
    }
}

SharedCursor::~SharedCursor() {
    if (fd_ >= 0) ::close(fd_);
}

std::uint64_t SharedCursor::advance(std::uint32_t device, std::uint64_t bytes) {
    if (device >= local_.size()) {
        raise(ErrorCode::invalid_argument, "cursor device index out of range");
    }
    if (fd_ < 0) {
        return local_[device].fetch_add(bytes, std::memory_order_relaxed);
    }
    // Cross-process: read-modify-write the on-disk counter under flock.
    std::lock_guard lock(mu_);
    if (::flock(fd_, LOCK_EX) != 0) {
        raise(ErrorCode::device_error, "flock failed on cursor file");
    }
    std::uint64_t value = 0;
    const off_t at = static_cast<off_t>(device * sizeof(std::uint64_t));
    if (::pread(fd_, &value, sizeof value, at) != sizeof value) {
        ::flock(fd_, LOCK_UN);
        raise(ErrorCode::io_error, "cursor file read failed");
    }
    const std::uint64_t next = value + bytes;
    if (::pwrite(fd_, &next, sizeof next, at) != sizeof next) {
        ::flock(fd_, LOCK_UN);
        raise(ErrorCode::io_error, "cursor file write failed");
    }
    ::flock(fd_, LOCK_UN);
    local_[device].store(next);
    return value;
}

std::uint64_t SharedCursor::position(std::uint32_t device) const {
    return local_[device].load(std::memory_order_relaxed);
}

void SharedCursor::restore(std::uint32_t device, std::uint64_t position) {
    local_[device].store(position, std::memory_order_relaxed);
}

// ---------------------------------------------------------------------------
// DirectIoEngine

struct OpState {
    std::mutex mu;
    std::condition_variable cv;
    std::uint64_t pending = 0;
    std::string error;
};

DirectIoEngine::DirectIoEngine(DeviceSet devset, EngineConfig config)
    : specs_(std::move(devset.devices)), config_(std::move(config)) {
    if (specs_.empty()) {
        raise(ErrorCode::invalid_argument, "device set is empty");
    }
    if (config_.workers == 0) {
        raise(ErrorCode::invalid_argument, "workers must be >= 1");
    }
    if (config_.queue_depth == 0) {
        config_.queue_depth = 1;
    }
    for (const auto& spec : specs_) {
        if (spec.capacity_bytes == 0 || spec.capacity_bytes % kIoGranule != 0) {
            raise(ErrorCode::invalid_argument,
                  "device capacity must be a positive multiple of 4096: " + spec.path);
        }
        fds_.push_back(open_device(spec, config_.cache_bypass));
        total_capacity_ += spec.capacity_bytes;
    }

    if (config_.backend == IoBackend::auto_probe) {
        // POSIX AIO is glibc-provided; prefer the asynchronous submission
        // path and keep positional I/O as the portable fallback.
        backend_ = IoBackend::posix_aio;
        if (const char* env = std::getenv("MEMASCEND_IO_BACKEND")) {
            if (std::string(env) == "sync") backend_ = IoBackend::sync_pio;
            if (std::string(env) == "aio") backend_ = IoBackend::posix_aio;
        }
    } else {
        backend_ = config_.backend;
    }

    cursors_ = std::make_unique<SharedCursor>(static_cast<std::uint32_t>(specs_.size()));
    if (!config_.manifest_path.empty() && std::filesystem::exists(config_.manifest_path)) {
        load_manifest();
    }

    workers_.reserve(config_.workers);
    for (std::uint32_t w = 0; w < config_.workers; ++w) {
        workers_.emplace_back([this] { worker_loop(); });
    }
}

DirectIoEngine::~DirectIoEngine() {
    {
        std::lock_guard lock(queue_mu_);
        stopping_ = true;
    }
    queue_cv_.notify_all();
    for (auto& t : workers_) {
        t.join();
    }
    if (!config_.manifest_path.empty()) {
        try {
            save_manifest();
        } catch (const Error&) {
            // Destructor: nothing sane to do; an explicit save_manifest()
            // call is the error-reporting path.
        }
    }
    for (int fd : fds_) {
        ::close(fd);
    }
}

std::vector<Extent> DirectIoEngine::allocate_extents(const std::string& key,
                                                     std::uint64_t logical_bytes) {
    if (logical_bytes == 0) {
        raise(ErrorCode::invalid_argument, "cannot allocate zero bytes for '" + key + "'");
    }
    const std::uint64_t padded = align_up(logical_bytes, kIoGranule);

    {
        std::lock_guard lock(table_mu_);
        auto it = table_.find(key);
        if (it != table_.end()) {
            if (padded <= it->second.padded_length) {
                // Shrink or same size: reuse, update the logical length.
                it->second.logical_length = logical_bytes;
                return it->second.extents;
            }
            // Grow: fresh extents, old ones abandoned (no reclamation).
            stats_.abandoned_bytes += it->second.padded_length;
            table_.erase(it);
        }
    }

    // Equal split: distribute the 4096-granules round-robin-free, first
    // `extra` devices take one more granule.
    const std::uint32_t dcount = static_cast<std::uint32_t>(specs_.size());
    const std::uint64_t granules = padded / kIoGranule;
    const std::uint64_t base = granules / dcount;
    const std::uint64_t extra = granules % dcount;

    std::vector<Extent> extents;
    for (std::uint32_t d = 0; d < dcount; ++d) {
        const std::uint64_t g = base + (d < extra ? 1 : 0);
        if (g == 0) continue;
        const std::uint64_t bytes = g * kIoGranule;
        const std::uint64_t offset = cursors_->advance(d, bytes);
        if (offset + bytes > specs_[d].capacity_bytes) {
            raise(ErrorCode::storage_full,
                  "device '" + specs_[d].path + "' exhausted while allocating '" + key + "'");
        }
        extents.push_back({d, offset, bytes});
    }

    TensorLocation loc;
    loc.logical_length = logical_bytes;
    loc.padded_length = padded;
    loc.extents = extents;
    {
        std::lock_guard lock(table_mu_);
        auto [it, inserted] = table_.try_emplace(key, std::move(loc));
        if (!inserted) {
            raise(ErrorCode::invalid_argument,
                  "concurrent allocation for key '" + key + "'");
        }
    }
    return extents;
}

void DirectIoEngine::worker_loop() {
    for (;;) {
        Task task;
        {
            std::unique_lock lock(queue_mu_);
            queue_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
            if (queue_.empty()) {
                if (stopping_) return;
                continue;
            }
            task = queue_.front();
            queue_.pop_front();
        }
        run_task(task);
    }
}

void DirectIoEngine::run_task(const Task& task) {
    std::string error;
    try {
        if (backend_ == IoBackend::posix_aio) {
            submit_posix_aio(task);
        } else {
            submit_sync(task);
        }
    } catch (const Error& e) {
        error = e.what();
    }
    std::lock_guard lock(task.op->mu);
    if (!error.empty() && task.op->error.empty()) {
        task.op->error = error;
    }
    if (--task.op->pending == 0) {
        task.op->cv.notify_all();
    }
}

void DirectIoEngine::submit_sync(const Task& task) {
    std::uint64_t done = 0;
    while (done < task.length) {
        ssize_t n;
        if (task.write) {
            n = ::pwrite(task.fd, task.buf + done, task.length - done,
                         static_cast<off_t>(task.offset + done));
        } else {
            n = ::pread(task.fd, task.buf + done, task.length - done,
                        static_cast<off_t>(task.offset + done));
        }
        if (n <= 0) {
            raise(ErrorCode::io_error,
                  std::string(task.write ? "short write" : "short read") + " on device " +
                      std::to_string(task.device) + " at offset " +
                      std::to_string(task.offset + done) + ": " +
                      (n < 0 ? std::strerror(errno) : "eof"));
        }
        done += static_cast<std::uint64_t>(n);
    }
}

void DirectIoEngine::submit_posix_aio(const Task& task) {
    // Slice the chunk into up to queue_depth concurrent AIO requests; each
    // slice keeps 4096 alignment.
    const std::uint32_t qd = config_.queue_depth;
    const std::uint64_t slice = align_up((task.length + qd - 1) / qd, kIoGranule);
    std::vector<aiocb> cbs;
    std::vector<aiocb*> list;
    std::uint64_t at = 0;
    while (at < task.length) {
        const std::uint64_t len = std::min(slice, task.length - at);
        aiocb cb{};
        cb.aio_fildes = task.fd;
        cb.aio_offset = static_cast<off_t>(task.offset + at);
        cb.aio_buf = task.buf + at;
        cb.aio_nbytes = len;
        cb.aio_lio_opcode = task.write ? LIO_WRITE : LIO_READ;
        cbs.push_back(cb);
        at += len;
    }
    list.reserve(cbs.size());
    for (auto& cb : cbs) list.push_back(&cb);

    if (::lio_listio(LIO_WAIT, list.data(), static_cast<int>(list.size()), nullptr) != 0) {
        raise(ErrorCode::io_error, std::string("lio_listio failed: ") + std::strerror(errno));
    }
    for (auto& cb : cbs) {
        const int err = ::aio_error(&cb);
        const ssize_t n = ::aio_return(&cb);
        if (err != 0 || n != static_cast<ssize_t>(cb.aio_nbytes)) {
            raise(ErrorCode::io_error,
                  std::string("aio ") + (task.write ? "write" : "read") + " failed on device " +
                      std::to_string(task.device) + ": " +
                      (err != 0 ? std::strerror(err) : "short transfer"));
        }
    }
}

void DirectIoEngine::enqueue_op(std::span<std::byte> buf, std::uint64_t padded,
                                bool write, const TensorLocation& loc) {
    OpState op;
    std::vector<Task> tasks;

    // Each extent is split into balanced worker chunks, rounded to granules.
    std::uint64_t buf_at = 0;
    for (const Extent& ext : loc.extents) {
        const std::uint64_t chunk =
            align_up((ext.length + config_.workers - 1) / config_.workers, kIoGranule);
        std::uint64_t at = 0;
        while (at < ext.length) {
            const std::uint64_t len = std::min(chunk, ext.length - at);
            Task t;
            t.fd = fds_[ext.device_index];
            t.device = ext.device_index;
            t.offset = ext.device_offset + at;
            t.buf = buf.data() + buf_at + at;
            t.length = len;
            t.write = write;
            t.op = &op;
            tasks.push_back(t);
            at += len;
        }
        buf_at += ext.length;
    }
    (void)padded;

    if (trace_) {
        for (const auto& t : tasks) {
            trace_(t.device, t.offset, t.length, t.write);
        }
    }

    op.pending = tasks.size();
    {
        std::lock_guard lock(queue_mu_);
        for (auto& t : tasks) {
            queue_.push_back(t);
        }
    }
    queue_cv_.notify_all();

    std::unique_lock lock(op.mu);
    op.cv.wait(lock, [&] { return op.pending == 0; });
    if (!op.error.empty()) {
        raise(ErrorCode::io_error, op.error);
    }

    std::lock_guard tlock(table_mu_);
    stats_.submitted_ios += tasks.size();
    if (write) {
        stats_.bytes_written += loc.padded_length;
        stats_.write_requests += 1;
    } else {
        stats_.bytes_read += loc.padded_length;
        stats_.read_requests += 1;
    }
}

namespace {

/// RAII per-key busy guard.
struct KeyGuard {
    std::mutex& mu;
    std::unordered_set<std::string>& busy;
    const std::string& key;
    bool armed = false;

    KeyGuard(std::mutex& m, std::unordered_set<std::string>& b, const std::string& k)
        : mu(m), busy(b), key(k) {
        std::lock_guard lock(mu);
        if (!busy.insert(key).second) {
            raise(ErrorCode::busy, "concurrent operation on key '" + key + "'");
        }
        armed = true;
    }

    ~KeyGuard() {
        if (armed) {
            std::lock_guard lock(mu);
            busy.erase(key);
        }
    }
};

}  // namespace

void DirectIoEngine::write_tensor(const std::string& key, std::span<const std::byte> src,
                                  std::uint64_t logical_bytes) {
    if (logical_bytes == 0) {
        raise(ErrorCode::invalid_argument, "zero-length write for '" + key + "'");
    }
    if (!is_aligned_ptr(src.data())) {
        raise(ErrorCode::alignment, "write source for '" + key + "' is not 4096-aligned");
    }
    const std::uint64_t padded = align_up(logical_bytes, kIoGranule);
    if (src.size() < padded) {
        raise(ErrorCode::size_violation, "write source for '" + key + "' must cover " +
                                             std::to_string(padded) + " padded bytes");
    }

    KeyGuard guard(table_mu_, busy_keys_, key);
    allocate_extents(key, logical_bytes);
    TensorLocation loc;
    {
        std::lock_guard lock(table_mu_);
        loc = table_.at(key);
    }
    enqueue_op({const_cast<std::byte*>(src.data()), src.size()}, padded, true, loc);
}

std::uint64_t DirectIoEngine::read_tensor(const std::string& key, std::span<std::byte> dst) {
    if (!is_aligned_ptr(dst.data())) {
        raise(ErrorCode::alignment, "read destination for '" + key + "' is not 4096-aligned");
    }
    KeyGuard guard(table_mu_, busy_keys_, key);
    TensorLocation loc;
    {
        std::lock_guard lock(table_mu_);
        auto it = table_.find(key);
        if (it == table_.end()) {
            raise(ErrorCode::not_found, "key '" + key + "' was never written");
        }
        loc = it->second;
    }
    if (dst.size() < loc.padded_length) {
        raise(ErrorCode::size_violation, "read destination for '" + key + "' must cover " +
                                             std::to_string(loc.padded_length) + " padded bytes");
    }
    enqueue_op(dst, loc.padded_length, false, loc);
    return loc.logical_length;
}

bool DirectIoEngine::contains(const std::string& key) const {
    std::lock_guard lock(table_mu_);
    return table_.contains(key);
}

TensorLocation DirectIoEngine::location(const std::string& key) const {
    std::lock_guard lock(table_mu_);
    auto it = table_.find(key);
    if (it == table_.end()) {
        raise(ErrorCode::not_found, "key '" + key + "' has no location");
    }
    return it->second;
}

std::vector<std::pair<std::string, TensorLocation>> DirectIoEngine::all_locations() const {
    std::lock_guard lock(table_mu_);
    return {table_.begin(), table_.end()};
}

EngineStats DirectIoEngine::stats() const {
    std::lock_guard lock(table_mu_);
    return stats_;
}

void DirectIoEngine::set_io_trace(IoTraceFn fn) {
    std::lock_guard lock(table_mu_);
    trace_ = std::move(fn);
}

void DirectIoEngine::save_manifest() const {
    if (config_.manifest_path.empty()) {
        raise(ErrorCode::invalid_argument, "engine has no manifest path configured");
    }
    nlohmann::json j;
    j["version"] = 1;
    auto& devices = j["devices"] = nlohmann::json::array();
    for (const auto& spec : specs_) {
        devices.push_back({{"path", spec.path},
                           {"capacity_bytes", spec.capacity_bytes},
                           {"kind", spec.kind == DeviceKind::raw_block ? "raw_block"
                                                                       : "file_backed_virtual"}});
    }
    auto& cursors = j["cursors"] = nlohmann::json::array();
    for (std::uint32_t d = 0; d < specs_.size(); ++d) {
        cursors.push_back(cursors_->position(d));
    }
    auto& tensors = j["tensors"] = nlohmann::json::object();
    {
        std::lock_guard lock(table_mu_);
        for (const auto& [key, loc] : table_) {
            nlohmann::json extents = nlohmann::json::array();
            for (const auto& e : loc.extents) {
                extents.push_back({{"device", e.device_index},
                                   {"offset", e.device_offset},
                                   {"length", e.length}});
            }
            tensors[key] = {{"logical", loc.logical_length},
                            {"padded", loc.padded_length},
                            {"extents", std::move(extents)}};
        }
    }
    const std::string tmp = config_.manifest_path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out.good()) {
            raise(ErrorCode::io_error, "cannot write manifest '" + tmp + "'");
        }
        out << j.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, config_.manifest_path);
}

void DirectIoEngine::load_manifest() {
    std::ifstream in(config_.manifest_path);
    if (!in.good()) {
        raise(ErrorCode::io_error, "cannot read manifest '" + config_.manifest_path + "'");
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::bad_config, std::string("malformed manifest: ") + e.what());
    }
    if (j.value("version", 0) != 1) {
        raise(ErrorCode::bad_config, "unsupported manifest version");
    }
    const auto& devices = j.at("devices");
    if (devices.size() != specs_.size()) {
        raise(ErrorCode::bad_config, "manifest device count does not match the engine's");
    }
    for (std::size_t d = 0; d < specs_.size(); ++d) {
        if (devices[d].at("path").get<std::string>() != specs_[d].path) {
            raise(ErrorCode::bad_config, "manifest device order mismatch at index " +
                                             std::to_string(d));
        }
    }
    const auto& cursors = j.at("cursors");
    for (std::uint32_t d = 0; d < specs_.size(); ++d) {
        cursors_->restore(d, cursors.at(d).get<std::uint64_t>());
    }
    for (const auto& [key, tj] : j.at("tensors").items()) {
        TensorLocation loc;
        loc.logical_length = tj.at("logical").get<std::uint64_t>();
        loc.padded_length = tj.at("padded").get<std::uint64_t>();
        for (const auto& ej : tj.at("extents")) {
            loc.extents.push_back({ej.at("device").get<std::uint32_t>(),
                                   ej.at("offset").get<std::uint64_t>(),
                                   ej.at("length").get<std::uint64_t>()});
        }
        table_[key] = std::move(loc);
    }
}

DeviceSet DirectIoEngine::create_virtual_devices(const std::string& dir, std::uint32_t count,
                                                 std::uint64_t bytes) {
    if (count == 0 || bytes == 0 || bytes % kIoGranule != 0) {
        raise(ErrorCode::invalid_argument,
              "virtual devices need a positive count and a 4096-multiple size");
    }
    std::filesystem::create_directories(dir);
    DeviceSet set;
    for (std::uint32_t d = 0; d < count; ++d) {
        const std::string path = dir + "/vdev" + std::to_string(d) + ".img";
        int fd = ::open(path.c_str(), O_CREAT | O_RDWR, 0644);
        if (fd < 0) {
            raise(ErrorCode::device_error, "cannot create virtual device '" + path + "'");
        }
        if (::posix_fallocate(fd, 0, static_cast<off_t>(bytes)) != 0) {
            if (::ftruncate(fd, static_cast<off_t>(bytes)) != 0) {
                ::close(fd);
                raise(ErrorCode::device_error, "cannot size virtual device '" + path + "'");
            }
        }
        ::close(fd);
        set.devices.push_back({path, bytes, DeviceKind::file_backed_virtual});
    }
    return set;
}

// ---------------------------------------------------------------------------
// FsBaselineStore

namespace {

std::string sanitize_key(const std::string& key) {
    std::string out;
    out.reserve(key.size());
    for (char c : key) {
        out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
    }
    return out;
}

}  // namespace

FsBaselineStore::FsBaselineStore(std::string dir, bool cache_bypass)
    : dir_(std::move(dir)), cache_bypass_(cache_bypass) {
    std::filesystem::create_directories(dir_);
}

std::string FsBaselineStore::path_for(const std::string& key) const {
    return dir_ + "/" + sanitize_key(key) + ".tensor";
}

void FsBaselineStore::write(const std::string& key, std::span<const std::byte> src,
                            std::uint64_t logical_bytes) {
    if (logical_bytes == 0) {
        raise(ErrorCode::invalid_argument, "zero-length write for '" + key + "' (min 4096 on disk)");
    }
    if (!is_aligned_ptr(src.data())) {
        raise(ErrorCode::alignment, "write source for '" + key + "' is not 4096-aligned");
    }
    const std::uint64_t padded = align_up(logical_bytes, kIoGranule);
    if (src.size() < padded) {
        raise(ErrorCode::size_violation, "write source must cover the padded length");
    }
    int flags = O_CREAT | O_WRONLY | O_TRUNC;
    if (cache_bypass_) flags |= O_DIRECT;
    const std::string path = path_for(key);
    int fd = ::open(path.c_str(), flags, 0644);
    if (fd < 0) {
        raise(ErrorCode::io_error, "cannot open '" + path + "': " + std::strerror(errno));
    }
    std::uint64_t done = 0;
    while (done < padded) {
        const ssize_t n = ::pwrite(fd, src.data() + done, padded - done, static_cast<off_t>(done));
        if (n <= 0) {
            ::close(fd);
            raise(ErrorCode::io_error, "short write to '" + path + "'");
        }
        done += static_cast<std::uint64_t>(n);
    }
    // Trim to the logical length so the file records it.
    if (::ftruncate(fd, static_cast<off_t>(logical_bytes)) != 0) {
        ::close(fd);
        raise(ErrorCode::io_error, "ftruncate failed on '" + path + "'");
    }
    ::close(fd);
}

std::uint64_t FsBaselineStore::read(const std::string& key, std::span<std::byte> dst) {
    if (!is_aligned_ptr(dst.data())) {
        raise(ErrorCode::alignment, "read destination for '" + key + "' is not 4096-aligned");
    }
    const std::string path = path_for(key);
    int flags = O_RDONLY;
    if (cache_bypass_) flags |= O_DIRECT;
    int fd = ::open(path.c_str(), flags);
    if (fd < 0) {
        raise(ErrorCode::not_found, "no tensor file '" + path + "'");
    }
    struct stat st{};
    ::fstat(fd, &st);
    const std::uint64_t logical = static_cast<std::uint64_t>(st.st_size);
    const std::uint64_t padded = align_up(logical, kIoGranule);
    if (dst.size() < padded) {
        ::close(fd);
        raise(ErrorCode::size_violation, "read destination must cover the padded length");
    }
    std::uint64_t done = 0;
    while (done < logical) {
        const ssize_t n = ::pread(fd, dst.data() + done, padded - done, static_cast<off_t>(done));
        if (n < 0) {
            ::close(fd);
            raise(ErrorCode::io_error, "read failed on '" + path + "': " + std::strerror(errno));
        }
        if (n == 0) break;
        done += static_cast<std::uint64_t>(n);
    }
    ::close(fd);
    if (done < logical) {
        raise(ErrorCode::io_error, "short read on '" + path + "'");
    }
    return logical;
}

}  // namespace memascend
