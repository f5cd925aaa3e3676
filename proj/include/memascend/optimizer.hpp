// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>

namespace memascend {

struct AdamHyper {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float weight_decay = 0.0f;
};

/// Dynamic loss scale: halves whenever a non-finite gradient is seen, doubles
/// after growth_interval consecutive clean steps.
struct LossScaler {
    float scale = 65536.0f;  // 2^16
    std::uint32_t growth_interval = 2000;
    std::uint32_t clean_steps = 0;

    void on_overflow() {
        scale *= 0.5f;
        clean_steps = 0;
    }

    void on_clean_step() {
        if (++clean_steps >= growth_interval) {
            scale *= 2.0f;
            clean_steps = 0;
        }
    }
};

enum class OptimPrecision { mixed_fp16_fp32master, pure_bf16 };

// One Adam step with bias correction and decoupled weight decay, elementwise:
//   g  = grad / scale
//   m' = b1*m + (1-b1)*g
//   v' = b2*v + (1-b2)*g*g
//   mh = m' / (1 - b1^t),  vh = v' / (1 - b2^t)
//   p' = p - lr*(mh / (sqrt(vh) + eps)) - lr*wd*p
// All arithmetic in fp32, one operation per source line, so independent
// implementations of the same formula reproduce it bitwise. t counts from 1.

void adam_step_fp32(std::span<float> params, std::span<float> momentum, std::span<float> variance,
                    std::span<const float> grads, std::uint64_t t, const AdamHyper& hyper,
                    float loss_scale, std::uint32_t workers = 1);

/// Same update with bf16 state: each stored quantity is computed in fp32 from
/// the widened inputs and rounded back to bf16 on store.
void adam_step_bf16(std::span<std::uint16_t> params, std::span<std::uint16_t> momentum,
                    std::span<std::uint16_t> variance, std::span<const float> grads,
                    std::uint64_t t, const AdamHyper& hyper, float loss_scale,
                    std::uint32_t workers = 1);

/// Spec-shaped wrapper owning the step counter.
struct OptimizerState {
    std::span<float> master_params;
    std::span<float> momentum_m;
    std::span<float> variance_v;
    std::uint64_t step_t = 0;
    AdamHyper hyper;
};

void adam_step(OptimizerState& state, std::span<const float> grads, const LossScaler& scaler);

}  // namespace memascend
