// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "memascend/error.hpp"
#include "memascend/model.hpp"

using namespace memascend;

namespace {

// Independent grouping oracle: exhaustive pairwise comparison on unordered
// dimensions, no shortcuts shared with classify().
std::map<std::pair<std::uint64_t, std::uint64_t>, std::uint64_t> brute_force_groups(
    const std::vector<TensorDescriptor>& inv) {
    std::map<std::pair<std::uint64_t, std::uint64_t>, std::uint64_t> groups;
    for (const auto& t : inv) {
        auto key = std::minmax(t.rows, t.cols);
        groups[{key.second, key.first}] += 1;
    }
    return groups;
}

std::uint64_t brute_force_element_sum(const std::vector<TensorDescriptor>& inv) {
    std::uint64_t total = 0;
    for (const auto& t : inv) total += t.rows * t.cols;
    return total;
}

ModelSpec tiny_dense() {
    ModelSpec s;
    s.name = "tiny";
    s.vocab = 8;
    s.hidden = 4;
    s.intermediate = 8;
    s.kv_dim = 4;
    s.layers = 1;
    return s;
}

}  // namespace

TEST_CASE("tensor_bytes basics") {
    TensorDescriptor t{"t", 128256, 5120, {PrecisionKind::fp16}, TensorRole::embedding};
    CHECK(tensor_bytes(t) == 1313341440ull);

    TensorDescriptor one{"one", 1, 1, {PrecisionKind::fp32}, TensorRole::other};
    CHECK(tensor_bytes(one) == 4);

    TensorDescriptor ffn{"ffn", 14336, 5120, {PrecisionKind::fp16}, TensorRole::ffn_up};
    CHECK(tensor_bytes(ffn) == 146800640ull);

    TensorDescriptor huge{"huge", UINT64_MAX / 2, 8, {PrecisionKind::fp32}, TensorRole::other};
    CHECK_THROWS_AS(tensor_bytes(huge), Error);

    TensorDescriptor zero{"zero", 0, 4, {PrecisionKind::fp16}, TensorRole::other};
    CHECK_THROWS_AS(tensor_bytes(zero), Error);
}

TEST_CASE("precision invariants") {
    CHECK(Precision{PrecisionKind::fp32}.bytes_per_element() == 4);
    CHECK(Precision{PrecisionKind::fp16}.bytes_per_element() == 2);
    CHECK(Precision{PrecisionKind::bf16}.bytes_per_element() == 2);
    CHECK_THROWS_AS(precision_from_string("fp64"), Error);
}

TEST_CASE("dense inventory shape") {
    auto spec = tiny_dense();
    auto inv = enumerate_offload_tensors(spec, 1);
    // emb, head, 3 FFN, 4 attention
    CHECK(inv.size() == 9);

    // 2 + 7L rule at a larger layer count.
    spec.layers = 5;
    CHECK(enumerate_offload_tensors(spec, 1).size() == 2 + 7 * 5);

    // Paper-scale preset contains the named shapes.
    auto llama = preset("llama3.1-8b");
    auto big = enumerate_offload_tensors(llama, 1);
    bool has_emb = false, has_up = false;
    for (const auto& t : big) {
        if (t.role == TensorRole::embedding && t.rows == 128256 && t.cols == 5120) has_emb = true;
        if (t.role == TensorRole::ffn_up && t.rows == 14336 && t.cols == 5120) has_up = true;
    }
    CHECK(has_emb);
    CHECK(has_up);

    ModelSpec bad = tiny_dense();
    bad.hidden = 0;
    CHECK_THROWS_AS(enumerate_offload_tensors(bad, 1), Error);
}

TEST_CASE("rank partitioning halves element counts with ceil slack") {
    auto spec = tiny_dense();
    auto full = enumerate_offload_tensors(spec, 1);
    auto half = enumerate_offload_tensors(spec, 2);
    REQUIRE(full.size() == half.size());

    const std::uint64_t full_sum = brute_force_element_sum(full);
    for (std::size_t i = 0; i < full.size(); ++i) {
        const std::uint64_t want = (full[i].rows + 1) / 2 * full[i].cols;
        CHECK(half[i].rows * half[i].cols == want);
    }

    // Partition property: per-rank sums cover the total, slack below
    // ranks * tensor_count rows' worth.
    for (std::uint64_t ranks : {2ull, 3ull, 5ull}) {
        auto part = enumerate_offload_tensors(spec, ranks);
        const std::uint64_t per_rank = brute_force_element_sum(part);
        CHECK(per_rank * ranks >= full_sum);
        std::uint64_t slack_bound = 0;
        for (const auto& t : full) slack_bound += ranks * t.cols;  // ceil adds < 1 row per rank
        CHECK(per_rank * ranks - full_sum < slack_bound);
    }
}

TEST_CASE("classification matches the brute-force grouping oracle") {
    auto llama = preset("llama3.1-8b");
    auto inv = enumerate_offload_tensors(llama, 1);
    auto classes = classify(inv);

    // Dense transformer: exactly 4 classes with multiplicities 2, 3L, 2L, 2L.
    CHECK(classes.size() == 4);
    std::multiset<std::uint64_t> members;
    std::uint64_t covered = 0;
    for (const auto& c : classes) {
        members.insert(c.member_count);
        covered += c.member_count;
    }
    const std::uint64_t L = llama.layers;
    CHECK(members == std::multiset<std::uint64_t>({2, 3 * L, 2 * L, 2 * L}));
    CHECK(covered == inv.size());  // classes partition the inventory

    auto oracle = brute_force_groups(inv);
    CHECK(oracle.size() == classes.size());
    for (const auto& c : classes) {
        bool found = false;
        for (const auto& [dims, count] : oracle) {
            if (dims.first * dims.second == c.element_count && count == c.member_count) {
                found = true;
            }
        }
        CHECK(found);
    }

    // Single tensor -> one class.
    std::vector<TensorDescriptor> single{{"solo", 4, 4, {PrecisionKind::fp16}, TensorRole::other}};
    CHECK(classify(single).size() == 1);

    CHECK_THROWS_AS(classify({}), Error);
}

TEST_CASE("MoE inventory classifies by shape, not by a hardcoded four") {
    ModelSpec moe;
    moe.name = "moe-test";
    moe.vocab = 64;
    moe.hidden = 16;
    moe.intermediate = 24;  // expert FFN, distinct from attention shapes
    moe.kv_dim = 4;
    moe.layers = 2;
    moe.num_experts = 8;
    auto inv = enumerate_offload_tensors(moe, 1);
    auto classes = classify(inv);
    auto oracle = brute_force_groups(inv);
    CHECK(classes.size() == oracle.size());
    CHECK(classes.size() >= 5);
    std::uint64_t covered = 0;
    for (const auto& c : classes) covered += c.member_count;
    CHECK(covered == inv.size());
}

TEST_CASE("per-layer vs global multiplicities") {
    auto spec = preset("qwen2.5-7b");
    auto classes = classify(enumerate_offload_tensors(spec, 1));
    for (const auto& c : classes) {
        if (c.global_members > 0) {
            CHECK(c.global_members == 2);  // embedding + lm_head share a class
            CHECK(c.members_per_layer == 0);
        } else {
            CHECK((c.members_per_layer == 2 || c.members_per_layer == 3));
        }
    }
}

TEST_CASE("resident-in-DRAM threshold filters small tensors when enabled") {
    auto spec = preset("qwen2.5-7b");
    spec.min_offload_elements = 2000000;
    auto inv = enumerate_offload_tensors(spec, 1);
    for (const auto& t : inv) {
        CHECK(t.rows * t.cols >= 2000000);
    }
    // KV projections (512 x 3584 = 1.8M elements) drop out under the 2M bar.
    auto full = enumerate_offload_tensors(preset("qwen2.5-7b"), 1);
    CHECK(inv.size() < full.size());
}

TEST_CASE("presets load and validate") {
    for (const auto& name : preset_names()) {
        auto spec = preset(name);
        CHECK_NOTHROW(spec.validate());
    }
    CHECK_THROWS_AS(preset("nope"), Error);

    auto qwen = preset("qwen2.5-7b");
    CHECK(qwen.params_total * 4 == 30462509056ull);  // fp32 flat buffer bytes
}
