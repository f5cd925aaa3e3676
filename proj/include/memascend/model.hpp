// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace memascend {

enum class PrecisionKind { fp32, fp16, bf16 };

struct Precision {
    PrecisionKind kind = PrecisionKind::fp16;

    std::uint32_t bytes_per_element() const noexcept {
        return kind == PrecisionKind::fp32 ? 4u : 2u;
    }
};

Precision precision_from_string(const std::string& name);
const char* to_string(PrecisionKind kind) noexcept;

enum class TensorRole {
    embedding,
    lm_head,
    ffn_up,
    ffn_gate,
    ffn_down,
    q_proj,
    k_proj,
    v_proj,
    o_proj,
    expert_ffn,
    other,
};

const char* to_string(TensorRole role) noexcept;

/// Whether tensors of this role recur once per transformer block (as opposed
/// to the model-global embedding / LM-head pair).
bool is_per_layer_role(TensorRole role) noexcept;

struct TensorDescriptor {
    std::string name;        // unique key
    std::uint64_t rows = 0;  // sharded row count for partitioned inventories
    std::uint64_t cols = 0;
    Precision precision;
    TensorRole role = TensorRole::other;
};

/// rows * cols * bytes_per_element, guarding the byte counter against wrap.
std::uint64_t tensor_bytes(const TensorDescriptor& t);

struct ModelSpec {
    std::string name;
    std::uint64_t vocab = 0;
    std::uint64_t hidden = 0;
    std::uint64_t intermediate = 0;  // dense FFN width, or expert FFN width for MoE
    std::uint64_t kv_dim = 0;
    std::uint64_t q_dim = 0;  // 0 -> hidden
    std::uint64_t layers = 0;
    std::uint64_t num_experts = 0;  // 0 -> dense
    std::uint64_t params_total = 0;
    std::uint64_t ranks = 1;  // data-parallel processes sharing the inventory
    Precision compute_precision{PrecisionKind::fp16};
    // Tensors below this element count stay resident in DRAM and are skipped
    // by offload inventories. 0 disables the filter. The bundled presets keep
    // it at 0 so pool capacities match the reference figures; bench-io uses
    // the 2M-element cursor when picking transfer sizes.
    std::uint64_t min_offload_elements = 0;

    void validate() const;  // throws invalid-argument on zero dimensions
};

struct ShapeClass {
    std::string class_id;            // canonical "RxC@bytes" key
    std::uint64_t element_count = 0; // rows*cols shared by every member
    std::uint64_t member_count = 0;  // tensors in this class across all layers
    std::uint64_t members_per_layer = 0;  // 0 for model-global classes
    std::uint64_t global_members = 0;     // emb / lm_head style members
    std::uint64_t buffer_bytes = 0;       // exact payload of one member
};

/// Full offloadable tensor inventory for one data-parallel rank. Element
/// counts are ceil-divided by partition_ranks so no shard buffer undersizes.
std::vector<TensorDescriptor> enumerate_offload_tensors(const ModelSpec& spec,
                                                        std::uint64_t partition_ranks);

/// Groups tensors by orientation-insensitive shape: a projection stored
/// transposed shares its class, which is what buffer sizing cares about.
std::vector<ShapeClass> classify(const std::vector<TensorDescriptor>& tensors);

/// Bundled model presets matching the published dimensions.
std::vector<std::string> preset_names();
ModelSpec preset(const std::string& name);

/// Loads a spec from a JSON config file (schema documented in the README).
ModelSpec load_model_spec(const std::string& path);

}  // namespace memascend
