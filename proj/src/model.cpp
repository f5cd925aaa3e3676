// SPDX-License-Identifier: Apache-2.0
#include "memascend/model.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <utility>

#include "memascend/error.hpp"
#include <json.hpp>

namespace memascend {

Precision precision_from_string(const std::string& name) {
    if (name == "fp32") return {PrecisionKind::fp32};
    if (name == "fp16") return {PrecisionKind::fp16};
    if (name == "bf16") return {PrecisionKind::bf16};
    raise(ErrorCode::invalid_argument, "unknown precision '" + name + "'");
}

const char* to_string(PrecisionKind kind) noexcept {
    switch (kind) {
        case PrecisionKind::fp32: return "fp32";
        case PrecisionKind::fp16: return "fp16";
        case PrecisionKind::bf16: return "bf16";
    }
    return "?";
}

const char* to_string(TensorRole role) noexcept {
    switch (role) {
        case TensorRole::embedding: return "embedding";
        case TensorRole::lm_head: return "lm_head";
        case TensorRole::ffn_up: return "ffn_up";
        case TensorRole::ffn_gate: return "ffn_gate";
        case TensorRole::ffn_down: return "ffn_down";
        case TensorRole::q_proj: return "q_proj";
        case TensorRole::k_proj: return "k_proj";
        case TensorRole::v_proj: return "v_proj";
        case TensorRole::o_proj: return "o_proj";
        case TensorRole::expert_ffn: return "expert_ffn";
        case TensorRole::other: return "other";
    }
    return "?";
}

bool is_per_layer_role(TensorRole role) noexcept {
    return role != TensorRole::embedding && role != TensorRole::lm_head;
}

std::uint64_t tensor_bytes(const TensorDescriptor& t) {
    if (t.rows == 0 || t.cols == 0) {
        raise(ErrorCode::invalid_argument, "tensor '" + t.name + "' has a zero dimension");
    }
    std::uint64_t elems = 0;
    if (__builtin_mul_overflow(t.rows, t.cols, &elems)) {
        raise(ErrorCode::overflow, "element count overflow for '" + t.name + "'");
    }
    std::uint64_t bytes = 0;
    if (__builtin_mul_overflow(elems, std::uint64_t{t.precision.bytes_per_element()}, &bytes)) {
        raise(ErrorCode::overflow, "byte count overflow for '" + t.name + "'");
    }
    return bytes;
}

void ModelSpec::validate() const {
    if (vocab == 0 || hidden == 0 || layers == 0 || kv_dim == 0) {
        raise(ErrorCode::invalid_argument, "model spec '" + name + "' has a zero dimension");
    }
    if (num_experts == 0 && intermediate == 0) {
        raise(ErrorCode::invalid_argument, "dense spec '" + name + "' needs an intermediate size");
    }
    if (num_experts > 0 && intermediate == 0) {
        raise(ErrorCode::invalid_argument, "MoE spec '" + name + "' needs an expert FFN size");
    }
    if (ranks == 0) {
        raise(ErrorCode::invalid_argument, "ranks must be >= 1");
    }
}

namespace {

constexpr std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

// Shard-per-process rule: divide the element count, keep the column width.
// Rows carry the ceil slack so a shard buffer never undersizes.
void push_sharded(std::vector<TensorDescriptor>& out, std::string name, std::uint64_t rows,
                  std::uint64_t cols, Precision prec, TensorRole role, std::uint64_t ranks,
                  std::uint64_t min_elems) {
    std::uint64_t elems = rows * cols;
    if (min_elems > 0 && elems < min_elems) return;  // stays resident in DRAM
    std::uint64_t shard_rows = ranks > 1 ? ceil_div(rows, ranks) : rows;
    out.push_back({std::move(name), shard_rows, cols, prec, role});
}

}  // namespace

std::vector<TensorDescriptor> enumerate_offload_tensors(const ModelSpec& spec,
                                                        std::uint64_t partition_ranks) {
    spec.validate();
    if (partition_ranks == 0) {
        raise(ErrorCode::invalid_argument, "partition_ranks must be >= 1");
    }
    const Precision prec = spec.compute_precision;
    const std::uint64_t qd = spec.q_dim ? spec.q_dim : spec.hidden;
    const std::uint64_t min_elems = spec.min_offload_elements;

    std::vector<TensorDescriptor> out;
    out.reserve(2 + spec.layers * (spec.num_experts ? 5 + 3 * spec.num_experts : 7));

    push_sharded(out, "embedding", spec.vocab, spec.hidden, prec, TensorRole::embedding,
                 partition_ranks, min_elems);
    push_sharded(out, "lm_head", spec.vocab, spec.hidden, prec, TensorRole::lm_head,
                 partition_ranks, min_elems);

    for (std::uint64_t l = 0; l < spec.layers; ++l) {
        const std::string base = "layer" + std::to_string(l) + ".";
        push_sharded(out, base + "q_proj", qd, spec.hidden, prec, TensorRole::q_proj,
                     partition_ranks, min_elems);
        push_sharded(out, base + "k_proj", spec.kv_dim, spec.hidden, prec, TensorRole::k_proj,
                     partition_ranks, min_elems);
        push_sharded(out, base + "v_proj", spec.kv_dim, spec.hidden, prec, TensorRole::v_proj,
                     partition_ranks, min_elems);
        push_sharded(out, base + "o_proj", spec.hidden, qd, prec, TensorRole::o_proj,
                     partition_ranks, min_elems);
        if (spec.num_experts == 0) {
            push_sharded(out, base + "ffn_up", spec.intermediate, spec.hidden, prec,
                         TensorRole::ffn_up, partition_ranks, min_elems);
            push_sharded(out, base + "ffn_gate", spec.intermediate, spec.hidden, prec,
                         TensorRole::ffn_gate, partition_ranks, min_elems);
            push_sharded(out, base + "ffn_down", spec.hidden, spec.intermediate, prec,
                         TensorRole::ffn_down, partition_ranks, min_elems);
        } else {
            push_sharded(out, base + "router", spec.num_experts, spec.hidden, prec,
                         TensorRole::other, partition_ranks, min_elems);
            for (std::uint64_t e = 0; e < spec.num_experts; ++e) {
                const std::string eb = base + "expert" + std::to_string(e) + ".";
                push_sharded(out, eb + "up", spec.intermediate, spec.hidden, prec,
                             TensorRole::expert_ffn, partition_ranks, min_elems);
                push_sharded(out, eb + "gate", spec.intermediate, spec.hidden, prec,
                             TensorRole::expert_ffn, partition_ranks, min_elems);
                push_sharded(out, eb + "down", spec.hidden, spec.intermediate, prec,
                             TensorRole::expert_ffn, partition_ranks, min_elems);
            }
        }
    }
    return out;
}

std::vector<ShapeClass> classify(const std::vector<TensorDescriptor>& tensors) {
    if (tensors.empty()) {
        raise(ErrorCode::invalid_argument, "cannot classify an empty inventory");
    }
    // Canonical key ignores orientation: an I x H projection and its H x I
    // counterpart need the same staging buffer.
    std::map<std::string, ShapeClass> groups;
    for (const auto& t : tensors) {
        const std::uint64_t hi = std::max(t.rows, t.cols);
        const std::uint64_t lo = std::min(t.rows, t.cols);
        const std::string key = std::to_string(hi) + "x" + std::to_string(lo) + "@" +
                                std::to_string(t.precision.bytes_per_element());
        auto [it, inserted] = groups.try_emplace(key);
        ShapeClass& cls = it->second;
        if (inserted) {
            cls.class_id = key;
            cls.element_count = hi * lo;
            cls.buffer_bytes = tensor_bytes(t);
        }
        ++cls.member_count;
        if (is_per_layer_role(t.role)) {
            ++cls.members_per_layer;  // raw count; divided by layer count below
        } else {
            ++cls.global_members;
        }
    }
    // members_per_layer currently holds the total across layers; normalize by
    // the number of distinct layers seen in the inventory.
    std::uint64_t layers = 0;
    for (const auto& t : tensors) {
        if (t.name.rfind("layer", 0) == 0) {
            auto dot = t.name.find('.');
            std::uint64_t idx = std::stoull(t.name.substr(5, dot - 5));
            layers = std::max(layers, idx + 1);
        }
    }
    std::vector<ShapeClass> out;
    out.reserve(groups.size());
    for (auto& [key, cls] : groups) {
        if (layers > 0 && cls.members_per_layer > 0) {
            cls.members_per_layer /= layers;
        } else if (cls.members_per_layer > 0) {
            // Inventory without layer-indexed names: treat members as global.
            cls.global_members += cls.members_per_layer;
            cls.members_per_layer = 0;
        }
        out.push_back(std::move(cls));
    }
    std::sort(out.begin(), out.end(), [](const ShapeClass& a, const ShapeClass& b) {
        return a.buffer_bytes > b.buffer_bytes;
    });
    return out;
}

namespace {

ModelSpec make_preset(std::string name, std::uint64_t v, std::uint64_t h, std::uint64_t i,
                      std::uint64_t kv, std::uint64_t q, std::uint64_t l, std::uint64_t experts,
                      std::uint64_t params) {
    ModelSpec s;
    s.name = std::move(name);
    s.vocab = v;
    s.hidden = h;
    s.intermediate = i;
    s.kv_dim = kv;
    s.q_dim = q;
    s.layers = l;
    s.num_experts = experts;
    s.params_total = params;
    return s;
}

}  // namespace

std::vector<std::string> preset_names() {
    return {"llama3.1-8b", "qwen2.5-7b", "qwen2.5-14b", "qwen2.5-32b", "qwen3-30b-a3b", "toy-dense"};
}

ModelSpec preset(const std::string& name) {
    // llama3.1-8b uses the published description of its layer shapes (vocab
    // 128,256, hidden 5,120, FFN 14,336x5,120, KV 1,024x5,120); note the
    // hidden size differs from the checkpoint's config.json.
    if (name == "llama3.1-8b") {
        return make_preset(name, 128256, 5120, 14336, 1024, 5120, 32, 0, 8030261248ull);
    }
    if (name == "qwen2.5-7b") {
        return make_preset(name, 152064, 3584, 18944, 512, 3584, 28, 0, 7615627264ull);
    }
    if (name == "qwen2.5-14b") {
        return make_preset(name, 152064, 5120, 13824, 1024, 5120, 48, 0, 14770033664ull);
    }
    if (name == "qwen2.5-32b") {
        return make_preset(name, 152064, 5120, 27648, 1024, 5120, 64, 0, 32763876352ull);
    }
    if (name == "qwen3-30b-a3b") {
        return make_preset(name, 151936, 2048, 768, 512, 4096, 48, 128, 30532122624ull);
    }
    if (name == "toy-dense") {
        return make_preset(name, 256, 32, 64, 16, 32, 4, 0, 0);
    }
    raise(ErrorCode::not_found, "no preset named '" + name + "'");
}

ModelSpec load_model_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in.good()) {
        raise(ErrorCode::not_found, "cannot open model config '" + path + "'");
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::bad_config, "malformed model config '" + path + "': " + e.what());
    }
    ModelSpec s;
    try {
        s.name = j.value("name", path);
        s.vocab = j.at("vocab").get<std::uint64_t>();
        s.hidden = j.at("hidden").get<std::uint64_t>();
        s.intermediate = j.at("intermediate").get<std::uint64_t>();
        s.kv_dim = j.at("kv_dim").get<std::uint64_t>();
        s.q_dim = j.value("q_dim", std::uint64_t{0});
        s.layers = j.at("layers").get<std::uint64_t>();
        s.num_experts = j.value("experts", std::uint64_t{0});
        s.params_total = j.value("params_total", std::uint64_t{0});
        s.ranks = j.value("ranks", std::uint64_t{1});
        s.compute_precision = precision_from_string(j.value("precision", "fp16"));
        s.min_offload_elements = j.value("min_offload_elements", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::bad_config, "model config '" + path + "' missing field: " + e.what());
    }
    s.validate();
    return s;
}

}  // namespace memascend
