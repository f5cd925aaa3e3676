// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "memascend/error.hpp"
#include "memascend/simulator.hpp"
#include "reference_trainer.hpp"

using namespace memascend;

namespace {

SimConfig toy_config() {
    SimConfig cfg;
    cfg.model = preset("toy-dense");
    cfg.steps = 10;
    cfg.seed = 7;
    cfg.device_bytes = 32ull << 20;
    return cfg;
}

}  // namespace

TEST_CASE("zero steps: empty report, no I/O") {
    SimConfig cfg = toy_config();
    cfg.steps = 0;
    auto report = run_training(cfg);
    CHECK(report.steps == 0);
    CHECK(report.total_io_bytes == 0);
    CHECK(report.init_io_bytes == 0);
    CHECK(report.per_step.empty());
}

TEST_CASE("offloaded run matches the in-memory reference bitwise (mixed)") {
    SimConfig cfg = toy_config();
    auto report = run_training(cfg);
    auto ref = testing::reference_train(cfg);
    CHECK(report.master_digest == testing::reference_digest(ref, true));
    CHECK(report.final_scale == ref.final_scale);
    CHECK(report.overflow_steps == ref.overflow_steps);
}

TEST_CASE("pure bf16 run matches the reference bitwise") {
    SimConfig cfg = toy_config();
    cfg.precision = OptimPrecision::pure_bf16;
    cfg.steps = 8;
    auto report = run_training(cfg);
    auto ref = testing::reference_train(cfg);
    CHECK(report.master_digest == testing::reference_digest(ref, false));
}

TEST_CASE("determinism: same seed, same digest; different seed, different digest") {
    SimConfig cfg = toy_config();
    cfg.steps = 5;
    auto a = run_training(cfg);
    auto b = run_training(cfg);
    CHECK(a.master_digest == b.master_digest);

    cfg.seed = 8;
    auto c = run_training(cfg);
    CHECK(a.master_digest != c.master_digest);
}

TEST_CASE("injected overflow skips the update and halves the scale") {
    SimConfig cfg = toy_config();
    cfg.steps = 6;
    cfg.fault = FaultInjection{3, 0, 0x7F800000u};

    auto faulted = run_training(cfg);
    REQUIRE(faulted.overflow_steps.size() == 1);
    CHECK(faulted.overflow_steps[0] == 3);
    CHECK(faulted.per_step[3].overflow);
    CHECK(faulted.per_step[3].scale_after == 32768.0f);

    // Weights after the skipped step equal weights after the previous step:
    // run to step 3 (inclusive, skipped) and to step 2; digests agree.
    SimConfig upto3 = cfg;
    upto3.steps = 4;
    SimConfig upto2 = cfg;
    upto2.steps = 3;
    upto2.fault.reset();
    CHECK(run_training(upto3).master_digest == run_training(upto2).master_digest);

    // And the reference sees the identical trajectory.
    auto ref = testing::reference_train(cfg);
    CHECK(faulted.master_digest == testing::reference_digest(ref, true));
    CHECK(faulted.final_scale == ref.final_scale);
}

TEST_CASE("per-step engine bytes equal the schedule prediction") {
    SimConfig cfg = toy_config();
    cfg.steps = 4;
    auto report = run_training(cfg);

    const auto predicted = predict_step_bytes(cfg, TransferSchedule::default_mixed());
    for (const auto& step : report.per_step) {
        CHECK(step.io_bytes == predicted);
    }
    CHECK(report.init_io_bytes == predict_init_bytes(cfg));

    SimConfig bf = cfg;
    bf.precision = OptimPrecision::pure_bf16;
    auto bf_report = run_training(bf);
    const auto bf_predicted = predict_step_bytes(bf, TransferSchedule::default_bf16());
    for (const auto& step : bf_report.per_step) {
        CHECK(step.io_bytes == bf_predicted);
    }
}

TEST_CASE("skip steps move only the forward reads") {
    SimConfig cfg = toy_config();
    cfg.steps = 3;
    cfg.fault = FaultInjection{1, 0, 0x7FC00000u};
    auto report = run_training(cfg);

    // Prediction for a skipped step: per-tensor shadow reads only.
    auto inventory = enumerate_offload_tensors(cfg.model, cfg.model.ranks);
    std::uint64_t skip_bytes = 0;
    for (const auto& t : inventory) {
        skip_bytes += (t.rows * t.cols * 2 + 4095) / 4096 * 4096;
    }
    CHECK(report.per_step[1].io_bytes == skip_bytes);
    CHECK(report.per_step[0].io_bytes == predict_step_bytes(cfg, TransferSchedule::default_mixed()));
}

TEST_CASE("transfer schedule arithmetic") {
    CHECK(schedule_bytes_per_param(TransferSchedule::default_mixed()) == 28);
    CHECK(schedule_bytes_per_param(TransferSchedule::default_bf16()) == 12);

    const double red =
        io_reduction(TransferSchedule::default_mixed(), TransferSchedule::default_bf16());
    CHECK(red == doctest::Approx(0.5714).epsilon(1e-3));

    // Identical schedules: no reduction.
    CHECK(io_reduction(TransferSchedule::default_mixed(), TransferSchedule::default_mixed()) ==
          0.0);

    TransferSchedule empty;
    CHECK_THROWS_AS(schedule_bytes_per_param(empty), memascend::Error);
}

TEST_CASE("peak tracked bytes are monotone in batch and context") {
    SimConfig cfg = toy_config();
    cfg.steps = 1;
    cfg.batch = 1;
    cfg.context = 128;
    const auto p1 = run_training(cfg).peak_tracked_bytes;
    cfg.batch = 4;
    const auto p2 = run_training(cfg).peak_tracked_bytes;
    cfg.context = 1024;
    const auto p3 = run_training(cfg).peak_tracked_bytes;
    CHECK(p1 <= p2);
    CHECK(p2 <= p3);
}

TEST_CASE("naive check mode spikes the tracked peak, fused does not") {
    SimConfig cfg = toy_config();
    cfg.steps = 2;
    auto fused = run_training(cfg);
    cfg.naive_overflow_check = true;
    auto naive = run_training(cfg);

    auto inventory = enumerate_offload_tensors(cfg.model, cfg.model.ranks);
    std::uint64_t n = 0;
    for (const auto& t : inventory) n += t.rows * t.cols;
    // The naive pipeline transiently adds 1.25x the flat buffer.
    CHECK(naive.peak_tracked_bytes >= fused.peak_tracked_bytes + n * 5);
    // Both trajectories end identically: the check result is equivalent.
    CHECK(naive.master_digest == fused.master_digest);
}

TEST_CASE("adaptive pool saturates: fragmentation is page slack only") {
    SimConfig cfg = toy_config();
    cfg.steps = 3;
    auto report = run_training(cfg);
    const auto& ps = report.pool_stats;
    // Peak live equals the full payload capacity: every class fills during
    // the step, so only page rounding separates capacity from usage.
    CHECK(fragmentation(ps.capacity_bytes, ps.peak_live_bytes) < 0.02);
    // Against the pinned backing the page slack shows up.
    CHECK(ps.backing_bytes >= ps.capacity_bytes);
}

TEST_CASE("monolithic pool on the same workload shows heavy fragmentation") {
    SimConfig cfg = toy_config();
    cfg.steps = 3;
    cfg.pool_mode = PoolMode::monolithic;
    auto report = run_training(cfg);
    const auto& ps = report.pool_stats;
    // Slots are embedding-sized; live payloads are mostly far smaller.
    CHECK(fragmentation(ps.capacity_bytes, ps.peak_live_bytes) > 0.5);
}

TEST_CASE("pseudo-gradient is pure and seed-sensitive") {
    const float a = pseudo_gradient(1, 2, 3, 0.5f);
    CHECK(a == pseudo_gradient(1, 2, 3, 0.5f));
    CHECK(a != pseudo_gradient(2, 2, 3, 0.5f));
    CHECK(std::fabs(a) < 1.0f);
}
