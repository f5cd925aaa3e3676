// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: analysis, benchmarks, and the offload training
// simulator, with machine-readable reports.

#include <sys/utsname.h>
#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "memascend/analyzer.hpp"
#include "memascend/direct_io.hpp"
#include "memascend/error.hpp"
#include "memascend/model.hpp"
#include "memascend/overflow.hpp"
#include "memascend/pool.hpp"
#include "memascend/simulator.hpp"

using nlohmann::json;
using namespace memascend;

namespace {

#ifndef MEMASCEND_GIT_REV
#define MEMASCEND_GIT_REV "unknown"
#endif

std::string machine_descriptor() {
    struct utsname u{};
    if (::uname(&u) != 0) {
        return "unknown";
    }
    return std::string(u.machine) + "/" + u.sysname + "/" +
           std::to_string(std::thread::hardware_concurrency()) + "t";
}

json provenance(const std::string& config_digest) {
    return {{"tool", "memascend"},
            {"git_rev", MEMASCEND_GIT_REV},
            {"config_digest", config_digest},
            {"machine", machine_descriptor()}};
}

std::string digest_of(const json& config) {
    const std::string canonical = config.dump();
    return fnv1a_hex(canonical.data(), canonical.size());
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out.good()) {
        raise(ErrorCode::io_error, "cannot write report to '" + path + "'");
    }
    out << text;
}

void write_report(const std::string& path, const json& report) {
    write_text(path, report.dump(2) + "\n");
}

// "128GiB", "2.5GB", "4096", "512MiB"
std::uint64_t parse_bytes(const std::string& text) {
    std::size_t idx = 0;
    const double value = std::stod(text, &idx);
    std::string unit = text.substr(idx);
    for (auto& c : unit) c = static_cast<char>(std::tolower(c));
    double mult = 1;
    if (unit == "kib" || unit == "k") mult = 1024.0;
    else if (unit == "mib" || unit == "m") mult = 1024.0 * 1024;
    else if (unit == "gib" || unit == "g") mult = 1024.0 * 1024 * 1024;
    else if (unit == "kb") mult = 1e3;
    else if (unit == "mb") mult = 1e6;
    else if (unit == "gb") mult = 1e9;
    else if (!unit.empty() && unit != "b") {
        raise(ErrorCode::invalid_argument, "unknown size suffix '" + unit + "'");
    }
    return static_cast<std::uint64_t>(value * mult);
}

ModelSpec resolve_model(const std::string& ref) {
    for (const auto& name : preset_names()) {
        if (name == ref) return preset(ref);
    }
    if (std::filesystem::exists(ref)) {
        return load_model_spec(ref);
    }
    raise(ErrorCode::not_found, "'" + ref + "' is neither a preset nor a config file");
}

json breakdown_json(const MemoryBreakdown& b) {
    return {{"param_pool_bytes", b.param_pool},
            {"pinned_overhead_bytes", b.pinned_overhead},
            {"grad_flat_buffer_bytes", b.grad_flat_buffer},
            {"overflow_transient_bytes", b.overflow_transient},
            {"overflow_stage_total_with_input_bytes", b.overflow_stage_total_with_input},
            {"misc_static_bytes", b.misc_static},
            {"activation_checkpoint_bytes", b.activation_checkpoints},
            {"peak_total_bytes", b.peak_total}};
}

// ---------------------------------------------------------------- analyze

int cmd_analyze(const std::string& model_ref, const std::string& mode, std::uint64_t limit,
                const std::string& sweep, const std::string& output, const std::string& format) {
    auto spec = resolve_model(model_ref);
    const json config = {{"cmd", "analyze"}, {"model", spec.name}, {"mode", mode},
                         {"limit", limit},   {"sweep", sweep},     {"format", format}};

    std::vector<SystemMode> modes;
    if (mode == "both") {
        modes = {SystemMode::baseline, SystemMode::memascend};
    } else {
        modes = {mode_from_string(mode)};
    }

    if (format == "csv" && !sweep.empty()) {
        std::ostringstream csv;
        if (sweep == "context") {
            csv << "context_length,baseline_gib,memascend_gib\n";
            for (const auto& p : context_sweep(spec, kContextGridMin, kContextGridMax, 4096)) {
                csv << p.x << "," << static_cast<double>(p.baseline_bytes) / (1ull << 30) << ","
                    << static_cast<double>(p.memascend_bytes) / (1ull << 30) << "\n";
            }
        } else if (sweep == "batch") {
            csv << "batch_size,baseline_gib,memascend_gib\n";
            for (const auto& p : batch_sweep(spec, 1, 64, 4096)) {
                csv << p.x << "," << static_cast<double>(p.baseline_bytes) / (1ull << 30) << ","
                    << static_cast<double>(p.memascend_bytes) / (1ull << 30) << "\n";
            }
        } else {
            raise(ErrorCode::invalid_argument, "--sweep must be 'context' or 'batch'");
        }
        write_text(output, csv.str());
        return 0;
    }

    json report;
    report["provenance"] = provenance(digest_of(config));
    report["model"] = spec.name;
    report["mode"] = mode;
    report["limit_bytes"] = limit;
    for (SystemMode m : modes) {
        const std::string key = to_string(m);
        report["breakdown"][key] = breakdown_json(peak_breakdown(spec, m));
        report["limits"][key] = {
            {"max_context", max_context_under_limit(spec, limit, m)},
            {"max_batch_at_4096", max_batch_under_limit(spec, limit, m, 4096)}};
    }
    if (sweep == "context") {
        auto points = context_sweep(spec, kContextGridMin, kContextGridMax, 4096);
        auto& arr = report["sweep"] = json::array();
        for (const auto& p : points) {
            arr.push_back({{"context", p.x},
                           {"baseline_bytes", p.baseline_bytes},
                           {"memascend_bytes", p.memascend_bytes}});
        }
    } else if (sweep == "batch") {
        auto points = batch_sweep(spec, 1, 64, 4096);
        auto& arr = report["sweep"] = json::array();
        for (const auto& p : points) {
            arr.push_back({{"batch", p.x},
                           {"baseline_bytes", p.baseline_bytes},
                           {"memascend_bytes", p.memascend_bytes}});
        }
    }
    write_report(output, report);
    return 0;
}

// --------------------------------------------------------------- bench-pool

int cmd_bench_pool(const std::string& model_ref, std::uint64_t inflight, double max_backing_gib,
                   const std::string& output) {
    auto spec = resolve_model(model_ref);
    const json config = {{"cmd", "bench-pool"}, {"model", spec.name}, {"inflight", inflight}};
    auto inventory = enumerate_offload_tensors(spec, 1);

    json report;
    report["provenance"] = provenance(digest_of(config));
    report["model"] = spec.name;
    report["inflight_blocks"] = inflight;
    auto& rows = report["rows"] = json::array();

    for (PoolMode mode : {PoolMode::monolithic, PoolMode::adaptive}) {
        json row;
        row["mode"] = mode == PoolMode::monolithic ? "monolithic" : "adaptive";
        const std::uint64_t capacity = pool_capacity(inventory, mode, inflight);
        row["capacity_bytes"] = capacity;

        const double capacity_gib = static_cast<double>(capacity) / (1ull << 30);
        if (capacity_gib <= max_backing_gib) {
            // Live replay: the simulator's prefetch/hold pattern, no I/O.
            PoolConfig pcfg;
            pcfg.mode = mode;
            pcfg.inflight_blocks = inflight;
            Pool pool(inventory, pcfg);
            std::vector<BufferHandle> step_held, block_held;
            std::string current;
            for (const auto& t : inventory) {
                auto h = pool.checkout(t.name, tensor_bytes(t));
                if (!is_per_layer_role(t.role)) {
                    step_held.push_back(h);
                    continue;
                }
                const std::string group = t.name.substr(0, t.name.find('.'));
                if (group != current && !block_held.empty()) {
                    for (auto& bh : block_held) pool.checkin(bh);
                    block_held.clear();
                }
                current = group;
                block_held.push_back(h);
            }
            for (auto& bh : block_held) pool.checkin(bh);
            for (auto& bh : step_held) pool.checkin(bh);

            const auto stats = pool.stats();
            row["replayed"] = true;
            row["backing_bytes"] = stats.backing_bytes;
            row["peak_live_bytes"] = stats.peak_live_bytes;
            row["fragmentation"] = fragmentation(stats.capacity_bytes, stats.peak_live_bytes);
            row["checkout_count"] = stats.checkout_count;
            row["blocked_ms"] =
                std::chrono::duration<double, std::milli>(stats.blocked_time).count();
        } else {
            // Pinned backing would not fit the budget; report the analytic
            // capacity and the peak-live prediction (every slot holding an
            // exact payload at the pipeline's deepest point).
            std::uint64_t peak_live = 0;
            if (mode == PoolMode::adaptive) {
                peak_live = capacity;
            } else {
                for (const auto& t : inventory) {
                    if (!is_per_layer_role(t.role)) peak_live += tensor_bytes(t);
                }
                std::uint64_t per_block = 0;
                std::uint64_t layer_count = 0;
                for (const auto& t : inventory) {
                    if (t.name.rfind("layer0.", 0) == 0) per_block += tensor_bytes(t);
                    if (t.name.rfind("layer", 0) == 0) {
                        layer_count = std::max<std::uint64_t>(
                            layer_count, std::stoull(t.name.substr(5, t.name.find('.') - 5)) + 1);
                    }
                }
                peak_live += per_block * std::min<std::uint64_t>(inflight, layer_count);
            }
            row["replayed"] = false;
            row["peak_live_bytes"] = peak_live;
            row["fragmentation"] = fragmentation(capacity, peak_live);
        }
        rows.push_back(row);
    }
    write_report(output, report);
    return 0;
}

// ----------------------------------------------------------- bench-overflow

int cmd_bench_overflow(const std::vector<std::uint64_t>& sizes, std::uint32_t workers,
                       int repeats, const std::string& output) {
    ScanConfig cfg;
    cfg.worker_count = workers;
    auto rows = bench_overflow(sizes, cfg, repeats);
    std::ostringstream csv;
    csv << "size,fused_ns,naive_ns,naive_peak_extra_bytes,speedup\n";
    for (const auto& r : rows) {
        csv << r.elements << "," << r.fused_ns << "," << r.naive_ns << ","
            << r.naive_peak_extra_bytes << "," << r.speedup << "\n";
    }
    write_text(output, csv.str());
    return 0;
}

// ----------------------------------------------------------------- bench-io

int cmd_bench_io(std::vector<std::string> device_paths, std::uint64_t vdev_bytes,
                 std::uint32_t device_count, std::uint32_t workers, std::uint32_t queue_depth,
                 std::vector<std::uint64_t> sizes, int repeats, const std::string& output) {
    std::filesystem::path scratch =
        std::filesystem::temp_directory_path() / ("memascend-bench-" + std::to_string(::getpid()));
    std::filesystem::create_directories(scratch);

    DeviceSet devset;
    std::string vdev_dir = (scratch / "dev").string();
    if (const char* env = std::getenv("MEMASCEND_DEVICE_DIR"); env && device_paths.empty()) {
        vdev_dir = env;
    }
    if (device_paths.empty()) {
        devset = DirectIoEngine::create_virtual_devices(vdev_dir, device_count, vdev_bytes);
    } else {
        for (const auto& p : device_paths) {
            const auto size = std::filesystem::exists(p) ? std::filesystem::file_size(p) : 0;
            if (size == 0) {
                raise(ErrorCode::device_error, "device '" + p + "' missing or empty");
            }
            devset.devices.push_back({p, size / 4096 * 4096, DeviceKind::file_backed_virtual});
        }
    }

    EngineConfig ecfg;
    ecfg.workers = workers;
    ecfg.queue_depth = queue_depth;
    DirectIoEngine engine(devset, ecfg);
    FsBaselineStore fs((scratch / "fs").string());

    if (sizes.empty()) {
        sizes = {4096, 65536, 1 << 20, 8 << 20};
    }

    auto& alloc = PinnedAllocator::global();
    std::ostringstream csv;
    csv << "size,direct_write_ns,fs_write_ns,direct_read_ns,fs_read_ns,write_speedup\n";
    for (const std::uint64_t size : sizes) {
        auto payload = alloc.allocate(size, {AllocPolicyKind::alignment_free});
        auto span = payload.bytes();
        for (std::uint64_t i = 0; i < size; ++i) span[i] = static_cast<std::byte>(i * 31 + 7);
        auto dst = alloc.allocate(size, {AllocPolicyKind::alignment_free});

        auto median = [&](auto&& fn) {
            std::vector<std::uint64_t> ns;
            for (int r = 0; r < repeats; ++r) {
                const auto t0 = std::chrono::steady_clock::now();
                fn();
                const auto t1 = std::chrono::steady_clock::now();
                ns.push_back(
                    std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
            }
            std::sort(ns.begin(), ns.end());
            return ns[ns.size() / 2];
        };

        const std::string key = "bench-" + std::to_string(size);
        engine.write_tensor(key, payload.bytes(), size);  // warm: extents allocated
        fs.write(key, payload.bytes(), size);
        const auto dw = median([&] { engine.write_tensor(key, payload.bytes(), size); });
        const auto fw = median([&] { fs.write(key, payload.bytes(), size); });
        const auto dr = median([&] { engine.read_tensor(key, dst.bytes()); });
        const auto fr = median([&] { fs.read(key, dst.bytes()); });
        csv << size << "," << dw << "," << fw << "," << dr << "," << fr << ","
            << (dw ? static_cast<double>(fw) / dw : 0.0) << "\n";
        alloc.release(payload);
        alloc.release(dst);
    }
    write_text(output, csv.str());
    std::error_code ec;
    std::filesystem::remove_all(scratch, ec);
    return 0;
}

// ----------------------------------------------------------------- simulate

int cmd_simulate(const std::string& model_ref, std::uint64_t steps, std::uint64_t seed,
                 const std::string& precision, std::int64_t inject_at, std::uint64_t inflight,
                 const std::string& mode, bool timings, const std::string& output) {
    SimConfig cfg;
    cfg.model = resolve_model(model_ref);
    cfg.steps = steps;
    cfg.seed = seed;
    cfg.inflight_blocks = static_cast<std::uint32_t>(inflight);
    cfg.precision =
        precision == "bf16" ? OptimPrecision::pure_bf16 : OptimPrecision::mixed_fp16_fp32master;
    if (mode == "baseline") {
        cfg.pool_mode = PoolMode::monolithic;
        cfg.pinned_policy = AllocPolicyKind::power_of_two;
        cfg.naive_overflow_check = true;
    } else if (mode != "memascend") {
        raise(ErrorCode::invalid_argument, "--mode must be baseline or memascend");
    }
    if (precision != "fp16" && precision != "bf16") {
        raise(ErrorCode::invalid_argument, "--precision must be fp16 or bf16");
    }
    if (inject_at >= 0) {
        cfg.fault = FaultInjection{static_cast<std::uint64_t>(inject_at), 0, 0x7F800000u};
    }
    if (const char* env = std::getenv("MEMASCEND_DEVICE_DIR")) {
        cfg.device_dir = env;
    }

    const json config = {{"cmd", "simulate"},      {"model", cfg.model.name},
                         {"steps", steps},         {"seed", seed},
                         {"precision", precision}, {"inject_at", inject_at},
                         {"inflight", inflight},   {"mode", mode}};

    auto report = run_training(cfg);

    json j;
    j["provenance"] = provenance(digest_of(config));
    j["config"] = config;
    j["result"] = {{"master_digest", report.master_digest},
                   {"final_scale", report.final_scale},
                   {"steps", report.steps},
                   {"peak_tracked_bytes", report.peak_tracked_bytes},
                   {"init_io_bytes", report.init_io_bytes},
                   {"total_io_bytes", report.total_io_bytes},
                   {"overflow_steps", report.overflow_steps}};
    auto& steps_arr = j["result"]["per_step"] = json::array();
    for (const auto& s : report.per_step) {
        steps_arr.push_back({{"step", s.step},
                             {"overflow", s.overflow},
                             {"scale_after", s.scale_after},
                             {"io_bytes", s.io_bytes}});
    }
    j["result"]["pool"] = {{"capacity_bytes", report.pool_stats.capacity_bytes},
                           {"backing_bytes", report.pool_stats.backing_bytes},
                           {"peak_live_bytes", report.pool_stats.peak_live_bytes},
                           {"checkout_count", report.pool_stats.checkout_count}};
    j["result"]["engine"] = {{"bytes_written", report.engine_stats.bytes_written},
                             {"bytes_read", report.engine_stats.bytes_read},
                             {"submitted_ios", report.engine_stats.submitted_ios}};
    j["result"]["tracked_components"] = report.tracked_components;
    if (timings) {
        j["result"]["phase_seconds"] = {{"prefetch", report.prefetch_seconds},
                                        {"grad", report.grad_seconds},
                                        {"optimizer", report.optimizer_seconds}};
    }
    write_report(output, j);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Host-side memory and storage toolkit for SSD-offloaded training"};
    app.require_subcommand(1);

    // analyze
    std::string an_model, an_mode = "both", an_limit = "128GiB", an_sweep, an_out,
                          an_format = "json";
    auto* analyze = app.add_subcommand("analyze", "Memory breakdown and scaling limits");
    analyze->add_option("--model", an_model, "preset name or model config file")->required();
    analyze->add_option("--mode", an_mode, "baseline|memascend|both");
    analyze->add_option("--limit", an_limit, "DRAM budget (e.g. 128GiB)");
    analyze->add_option("--sweep", an_sweep, "context|batch");
    analyze->add_option("-o,--output", an_out, "report path (default stdout)");
    analyze->add_option("--format", an_format, "json|csv");

    // bench-pool
    std::string bp_model, bp_out;
    std::uint64_t bp_inflight = 1;
    double bp_budget = 3.0;
    auto* bench_pool = app.add_subcommand("bench-pool", "Pool capacity and fragmentation report");
    bench_pool->add_option("--model", bp_model, "preset name or model config file")->required();
    bench_pool->add_option("--inflight", bp_inflight, "blocks in flight (N)");
    bench_pool->add_option("--max-backing-gib", bp_budget, "replay only if backing fits");
    bench_pool->add_option("-o,--output", bp_out, "report path (default stdout)");

    // bench-overflow
    std::vector<std::uint64_t> bo_sizes{1000000, 4000000, 10000000};
    std::uint32_t bo_workers = std::max(1u, std::thread::hardware_concurrency());
    int bo_repeats = 5;
    std::string bo_out;
    auto* bench_ovf = app.add_subcommand("bench-overflow", "Fused vs staged overflow check");
    bench_ovf->add_option("--sizes", bo_sizes, "element counts")->delimiter(',');
    bench_ovf->add_option("--workers", bo_workers, "scan worker threads");
    bench_ovf->add_option("--repeats", bo_repeats, "timing repeats");
    bench_ovf->add_option("-o,--output", bo_out, "CSV path (default stdout)");

    // bench-io
    std::vector<std::string> bi_devices;
    std::uint64_t bi_vdev = 256ull << 20;
    std::uint32_t bi_count = 2, bi_workers = 2, bi_qd = 8;
    std::vector<std::uint64_t> bi_sizes;
    int bi_repeats = 5;
    std::string bi_out;
    auto* bench_io = app.add_subcommand("bench-io", "Direct engine vs filesystem baseline");
    bench_io->add_option("--devices", bi_devices, "device paths")->delimiter(',');
    bench_io->add_option("--virtual-device-size", bi_vdev, "bytes per created virtual device");
    bench_io->add_option("--device-count", bi_count, "virtual devices to create");
    bench_io->add_option("--workers", bi_workers, "engine worker threads");
    bench_io->add_option("--queue-depth", bi_qd, "AIO submissions per worker");
    bench_io->add_option("--sizes", bi_sizes, "payload sizes in bytes")->delimiter(',');
    bench_io->add_option("--repeats", bi_repeats, "timing repeats");
    bench_io->add_option("-o,--output", bi_out, "CSV path (default stdout)");

    // simulate
    std::string sm_model = "toy-dense", sm_precision = "fp16", sm_mode = "memascend", sm_out;
    std::uint64_t sm_steps = 10, sm_seed = 1, sm_inflight = 1;
    std::int64_t sm_inject = -1;
    bool sm_timings = false;
    auto* simulate = app.add_subcommand("simulate", "Deterministic offloaded training run");
    simulate->add_option("--model", sm_model, "preset name or model config file");
    simulate->add_option("--steps", sm_steps, "training steps");
    simulate->add_option("--seed", sm_seed, "workload seed");
    simulate->add_option("--precision", sm_precision, "fp16|bf16");
    simulate->add_option("--inject-overflow-at", sm_inject, "force a non-finite gradient");
    simulate->add_option("--inflight", sm_inflight, "blocks in flight (N)");
    simulate->add_option("--mode", sm_mode, "memascend|baseline pipeline flavor");
    simulate->add_flag("--timings", sm_timings, "include wall-clock phases (non-deterministic)");
    simulate->add_option("-o,--output", sm_out, "report path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (analyze->parsed()) {
            return cmd_analyze(an_model, an_mode, parse_bytes(an_limit), an_sweep, an_out,
                               an_format);
        }
        if (bench_pool->parsed()) {
            return cmd_bench_pool(bp_model, bp_inflight, bp_budget, bp_out);
        }
        if (bench_ovf->parsed()) {
            return cmd_bench_overflow(bo_sizes, bo_workers, bo_repeats, bo_out);
        }
        if (bench_io->parsed()) {
            return cmd_bench_io(bi_devices, bi_vdev, bi_count, bi_workers, bi_qd, bi_sizes,
                                bi_repeats, bi_out);
        }
        if (simulate->parsed()) {
            return cmd_simulate(sm_model, sm_steps, sm_seed, sm_precision, sm_inject, sm_inflight,
                                sm_mode, sm_timings, sm_out);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        const auto code = e.code();
        return (code == ErrorCode::invalid_argument || code == ErrorCode::not_found ||
                code == ErrorCode::bad_config)
                   ? 2
                   : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
