// SPDX-License-Identifier: Apache-2.0
#include "memascend/optimizer.hpp"

#include <cmath>
#include <thread>
#include <vector>

#include "memascend/error.hpp"
#include "memascend/halfprec.hpp"

namespace memascend {

namespace {

struct StepScalars {
    float bc1;
    float bc2;
};

StepScalars step_scalars(std::uint64_t t, const AdamHyper& h) {
    const float bc1 = 1.0f - std::pow(h.beta1, static_cast<float>(t));
    const float bc2 = 1.0f - std::pow(h.beta2, static_cast<float>(t));
    return {bc1, bc2};
}

template <typename LoadStore>
void adam_range(LoadStore&& ls, std::span<const float> grads, std::uint64_t begin,
                std::uint64_t end, const AdamHyper& h, float loss_scale, float bc1,
                float bc2) {
    for (std::uint64_t i = begin; i < end; ++i) {
        const float g = grads[i] / loss_scale;
        float p = ls.load_p(i);
        float m = ls.load_m(i);
        float v = ls.load_v(i);
        m = h.beta1 * m + (1.0f - h.beta1) * g;
        v = h.beta2 * v + (1.0f - h.beta2) * (g * g);
        const float mh = m / bc1;
        const float vh = v / bc2;
        p = p - h.lr * (mh / (std::sqrt(vh) + h.eps)) - h.lr * h.weight_decay * p;
        ls.store_p(i, p);
        ls.store_m(i, m);
        ls.store_v(i, v);
    }
}

template <typename LoadStore>
void run_parallel(LoadStore ls, std::span<const float> grads, std::uint64_t n,
                  const AdamHyper& h, float scale, std::uint64_t t, std::uint32_t workers) {
    if (t == 0) {
        raise(ErrorCode::invalid_argument, "adam step count t must be >= 1");
    }
    const auto sc = step_scalars(t, h);
    if (workers <= 1 || n < 4096) {
        adam_range(ls, grads, 0, n, h, scale, sc.bc1, sc.bc2);
        return;
    }
    // Disjoint slices; every element's arithmetic is independent, so the
    // split does not affect the result bits.
    const std::uint64_t per = (n + workers - 1) / workers;
    std::vector<std::thread> threads;
    for (std::uint32_t w = 0; w < workers; ++w) {
        const std::uint64_t begin = w * per;
        const std::uint64_t end = std::min(n, begin + per);
        if (begin >= end) break;
        threads.emplace_back(
            [=]() mutable { adam_range(ls, grads, begin, end, h, scale, sc.bc1, sc.bc2); });
    }
    for (auto& th : threads) th.join();
}

struct Fp32Access {
    float* p;
    float* m;
    float* v;
    float load_p(std::uint64_t i) const { return p[i]; }
    float load_m(std::uint64_t i) const { return m[i]; }
    float load_v(std::uint64_t i) const { return v[i]; }
    void store_p(std::uint64_t i, float x) const { p[i] = x; }
    void store_m(std::uint64_t i, float x) const { m[i] = x; }
    void store_v(std::uint64_t i, float x) const { v[i] = x; }
};

struct Bf16Access {
    std::uint16_t* p;
    std::uint16_t* m;
    std::uint16_t* v;
    float load_p(std::uint64_t i) const { return bf16_to_float(p[i]); }
    float load_m(std::uint64_t i) const { return bf16_to_float(m[i]); }
    float load_v(std::uint64_t i) const { return bf16_to_float(v[i]); }
    void store_p(std::uint64_t i, float x) const { p[i] = bf16_from_float(x); }
    void store_m(std::uint64_t i, float x) const { m[i] = bf16_from_float(x); }
    void store_v(std::uint64_t i, float x) const { v[i] = bf16_from_float(x); }
};

void check_lengths(std::size_t p, std::size_t m, std::size_t v, std::size_t g) {
    if (p != m || p != v || p != g) {
        raise(ErrorCode::invalid_argument, "adam_step: parameter/state/grad lengths differ");
    }
}

}  // namespace

void adam_step_fp32(std::span<float> params, std::span<float> momentum, std::span<float> variance,
                    std::span<const float> grads, std::uint64_t t, const AdamHyper& hyper,
                    float loss_scale, std::uint32_t workers) {
    check_lengths(params.size(), momentum.size(), variance.size(), grads.size());
    run_parallel(Fp32Access{params.data(), momentum.data(), variance.data()}, grads,
                 params.size(), hyper, loss_scale, t, workers);
}

void adam_step_bf16(std::span<std::uint16_t> params, std::span<std::uint16_t> momentum,
                    std::span<std::uint16_t> variance, std::span<const float> grads,
                    std::uint64_t t, const AdamHyper& hyper, float loss_scale,
                    std::uint32_t workers) {
    check_lengths(params.size(), momentum.size(), variance.size(), grads.size());
    run_parallel(Bf16Access{params.data(), momentum.data(), variance.data()}, grads,
                 params.size(), hyper, loss_scale, t, workers);
}

void adam_step(OptimizerState& state, std::span<const float> grads, const LossScaler& scaler) {
    state.step_t += 1;
    adam_step_fp32(state.master_params, state.momentum_m, state.variance_v, grads, state.step_t,
                   state.hyper, scaler.scale);
}

}  // namespace memascend
