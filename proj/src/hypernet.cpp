#include "linklearn/hypernet.hpp"

#include <cmath>

#include "linklearn/errors.hpp"
#include "linklearn/ops.hpp"
#include "linklearn/rng.hpp"

namespace linklearn {

void HypernetConfig::validate() const {
    if (embed_dim == 0) throw ConfigError("embedding size must be >= 1");
    if (layers == 0) throw ConfigError("hypernetwork output width must be >= 1");
    for (auto h : hidden) {
        if (h == 0) throw ConfigError("hypernetwork hidden widths must be >= 1");
    }
}

std::vector<std::size_t> HypernetConfig::dims() const {
    std::vector<std::size_t> d{2 * embed_dim};
    d.insert(d.end(), hidden.begin(), hidden.end());
    d.push_back(layers);
    return d;
}

TaskEmbedding make_task_embedding(std::size_t task, const HypernetConfig& config, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0xE3B0 + task));
    TaskEmbedding e;
    e.task = task;
    e.vec = {"embedding.t" + std::to_string(task), Tensor::zeros({1, config.embed_dim}), false};
    for (auto& v : e.vec.value.data) v = rng.normal(0.0, config.embedding_init_std);
    return e;
}

WeightMLP WeightMLP::init(const HypernetConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(derive_seed(seed, 0x3E7A));
    const auto dims = config.dims();
    WeightMLP mlp;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        const double std = 1.0 / std::sqrt(static_cast<double>(dims[i]));
        Tensor w = Tensor::zeros({dims[i], dims[i + 1]});
        for (auto& v : w.data) v = rng.normal(0.0, std);
        const bool last = i + 2 == dims.size();
        mlp.weights.push_back({"mlp.w" + std::to_string(i), std::move(w), false});
        mlp.biases.push_back(
            {"mlp.b" + std::to_string(i), Tensor::filled({dims[i + 1]}, last ? config.output_bias_init : 0.0), false});
    }
    return mlp;
}

WeightMLP WeightMLP::from_layers(std::vector<Tensor> weights, std::vector<Tensor> biases) {
    if (weights.empty() || weights.size() != biases.size()) throw ConfigError("MLP needs matching weight/bias layers");
    WeightMLP mlp;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i].rank() != 2 || biases[i].numel() != weights[i].shape[1] ||
            (i > 0 && weights[i].shape[0] != weights[i - 1].shape[1])) {
            throw DimensionError("MLP layer " + std::to_string(i) + " has inconsistent shapes");
        }
        mlp.weights.push_back({"mlp.w" + std::to_string(i), std::move(weights[i]), false});
        mlp.biases.push_back({"mlp.b" + std::to_string(i), std::move(biases[i]), false});
    }
    return mlp;
}

std::vector<Parameter*> WeightMLP::parameters() {
    std::vector<Parameter*> out;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        out.push_back(&weights[i]);
        out.push_back(&biases[i]);
    }
    return out;
}

std::vector<const Parameter*> WeightMLP::parameters() const {
    auto mut = const_cast<WeightMLP*>(this)->parameters();
    return {mut.begin(), mut.end()};
}

BoundMlp bind(Tape& tape, const WeightMLP& mlp) {
    BoundMlp b;
    for (std::size_t i = 0; i < mlp.weights.size(); ++i) {
        b.weights.push_back(tape.param(mlp.weights[i]));
        b.biases.push_back(tape.param(mlp.biases[i]));
        b.by_name.emplace(mlp.weights[i].name, b.weights.back());
        b.by_name.emplace(mlp.biases[i].name, b.biases.back());
    }
    return b;
}

Var gen_beta(const BoundMlp& mlp, Var e_early, Var e_late) {
    if (e_early.shape() != e_late.shape() || e_early.value().rank() != 2 || e_early.shape()[0] != 1) {
        throw DimensionError("task embeddings " + shape_str(e_early.shape()) + " and " + shape_str(e_late.shape()) +
                             " must both be [1 x d_e]");
    }
    Var h = ops::concat_cols(e_early, e_late);
    if (h.shape()[1] != mlp.weights.front().shape()[0]) {
        throw DimensionError("embedding pair width " + std::to_string(h.shape()[1]) + " vs MLP input " +
                             std::to_string(mlp.weights.front().shape()[0]));
    }
    for (std::size_t i = 0; i < mlp.weights.size(); ++i) {
        h = ops::add_bias(ops::matmul(h, mlp.weights[i]), mlp.biases[i]);
        if (i + 1 < mlp.weights.size()) h = ops::relu(h);
    }
    return h;
}

const Var& BetaSet::get(std::size_t early, std::size_t late) const {
    auto it = weights.find({early, late});
    if (it == weights.end()) {
        throw StateError("no attention weight for pair (" + std::to_string(early) + ", " + std::to_string(late) + ")");
    }
    return it->second;
}

namespace {

Var bind_embedding(Tape& tape, const std::vector<TaskEmbedding>& embeddings, std::size_t task) {
    if (task >= embeddings.size() || embeddings[task].task != task) {
        throw StateError("missing embedding for task " + std::to_string(task));
    }
    return tape.param(embeddings[task].vec);
}

}  // namespace

BetaSet train_betas(Tape& tape, std::size_t t, const std::vector<TaskEmbedding>& embeddings, const BoundMlp& mlp) {
    BetaSet set;
    set.role = BetaRole::train;
    set.target = t;
    Var et = bind_embedding(tape, embeddings, t);
    for (std::size_t p = 0; p < t; ++p) {
        if (!embeddings.at(p).vec.frozen) throw StateError("embedding of earlier task " + std::to_string(p) + " is not frozen");
        set.weights.emplace(std::pair{p, t}, gen_beta(mlp, bind_embedding(tape, embeddings, p), et));
    }
    set.weights.emplace(std::pair{t, t}, gen_beta(mlp, et, et));
    return set;
}

BetaSet infer_betas(Tape& tape, std::size_t t, std::size_t m, const std::vector<TaskEmbedding>& embeddings,
                    const BoundMlp& mlp) {
    if (t >= m) throw IndexError("target task " + std::to_string(t) + " not below task count " + std::to_string(m));
    if (embeddings.size() < m) throw StateError("only " + std::to_string(embeddings.size()) + " embeddings for " + std::to_string(m) + " tasks");
    std::vector<Var> e;
    for (std::size_t i = 0; i < m; ++i) {
        if (!embeddings[i].vec.frozen) throw StateError("embedding of task " + std::to_string(i) + " is not frozen");
        e.push_back(bind_embedding(tape, embeddings, i));
    }
    BetaSet set;
    set.role = BetaRole::infer;
    set.target = t;
    for (std::size_t p = 0; p <= t; ++p) set.weights.emplace(std::pair{p, t}, gen_beta(mlp, e[p], e[t]));
    for (std::size_t s = t + 1; s < m; ++s) set.weights.emplace(std::pair{t, s}, gen_beta(mlp, e[t], e[s]));
    return set;
}

}  // namespace linklearn
