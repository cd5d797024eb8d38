#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "linklearn/tensor.hpp"

namespace linklearn {

struct HypernetConfig {
    std::size_t embed_dim = 8;
    std::vector<std::size_t> hidden = {16, 8};
    std::size_t layers = 4;  // one attention weight per backbone layer
    // Output-layer bias at initialization. 1.0 starts every link at the
    // weight a standalone adapter uses for itself.
    double output_bias_init = 1.0;
    double embedding_init_std = 0.1;

    void validate() const;
    std::vector<std::size_t> dims() const;  // [2 * embed_dim, hidden..., layers]
};

struct TaskEmbedding {
    std::size_t task = 0;
    Parameter vec;  // [1 x embed_dim]
};

TaskEmbedding make_task_embedding(std::size_t task, const HypernetConfig& config, std::uint64_t seed);

// Fully connected network mapping a concatenated embedding pair to one
// attention weight per layer. ReLU between layers, identity output.
struct WeightMLP {
    std::vector<Parameter> weights;  // [in x out]
    std::vector<Parameter> biases;   // [out]

    static WeightMLP init(const HypernetConfig& config, std::uint64_t seed);
    // Explicit layers, e.g. for hand-checkable examples.
    static WeightMLP from_layers(std::vector<Tensor> weights, std::vector<Tensor> biases);

    std::size_t input_dim() const { return weights.front().value.shape[0]; }
    std::size_t output_dim() const { return weights.back().value.shape[1]; }
    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;
};

struct BoundMlp {
    std::vector<Var> weights, biases;
    std::map<std::string, Var> by_name;
};

BoundMlp bind(Tape& tape, const WeightMLP& mlp);

// f_h([e_early || e_late]) -> [1 x L]. The earlier task always comes first.
Var gen_beta(const BoundMlp& mlp, Var e_early, Var e_late);

enum class BetaRole { train, infer };

// Attention weights keyed by (earlier task, later task).
struct BetaSet {
    BetaRole role = BetaRole::train;
    std::size_t target = 0;
    std::map<std::pair<std::size_t, std::size_t>, Var> weights;

    const Var& get(std::size_t early, std::size_t late) const;
};

// Pairs (p, t) for p <= t. Embeddings of tasks before t must be frozen.
BetaSet train_betas(Tape& tape, std::size_t t, const std::vector<TaskEmbedding>& embeddings, const BoundMlp& mlp);
// Pairs (p, t) for p <= t and (t, s) for t < s < m. All m embeddings must be frozen.
BetaSet infer_betas(Tape& tape, std::size_t t, std::size_t m, const std::vector<TaskEmbedding>& embeddings,
                    const BoundMlp& mlp);

}  // namespace linklearn
