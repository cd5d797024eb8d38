#include "linklearn/adapter.hpp"

#include "linklearn/errors.hpp"
#include "linklearn/ops.hpp"
#include "linklearn/rng.hpp"

namespace linklearn {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

Activation parse_activation(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "identity") return Activation::identity;
    throw ConfigError("unknown adapter activation '" + s + "' (expected relu or identity)");
}

void AdapterConfig::validate() const {
    if (bottleneck == 0) throw ConfigError("adapter bottleneck must be >= 1");
    if (bottleneck >= d_model) {
        throw ConfigError("adapter bottleneck " + std::to_string(bottleneck) + " must be smaller than d_model " +
                          std::to_string(d_model));
    }
    if (layers == 0) throw ConfigError("adapter bank needs at least one layer");
}

std::vector<Parameter*> Adapter::parameters() { return {&down_w, &down_b, &up_w, &up_b}; }

std::vector<const Parameter*> Adapter::parameters() const { return {&down_w, &down_b, &up_w, &up_b}; }

BoundAdapter bind(Tape& tape, const Adapter& a) {
    return {tape.param(a.down_w), tape.param(a.down_b), tape.param(a.up_w), tape.param(a.up_b), a.activation};
}

Var adapter_forward(const BoundAdapter& a, Var h_bar) {
    const auto& ds = a.down_w.shape();
    if (h_bar.value().rank() != 2 || h_bar.value().cols() != ds[0]) {
        throw DimensionError("adapter input " + shape_str(h_bar.shape()) + " vs down projection " + shape_str(ds));
    }
    Var z = ops::add_bias(ops::matmul(h_bar, a.down_w), a.down_b);
    if (a.activation == Activation::relu) z = ops::relu(z);
    return ops::add_bias(ops::matmul(z, a.up_w), a.up_b);
}

Var adapter_forward(Tape& tape, const Adapter& adapter, Var h_bar) { return adapter_forward(bind(tape, adapter), h_bar); }

AdapterBank::AdapterBank(AdapterConfig config) : config_(config) { config_.validate(); }

void AdapterBank::add_task(std::size_t t, std::uint64_t seed) {
    if (static_cast<long>(t) != frozen_through_ + 1 || t != adapters_.size()) {
        throw ProtocolError("cannot add adapters for task " + std::to_string(t) + ": tasks frozen through " +
                            std::to_string(frozen_through_) + ", " + std::to_string(adapters_.size()) + " present");
    }
    Rng rng(derive_seed(seed, 0xADA0 + t));
    const std::size_t d = config_.d_model, b = config_.bottleneck;
    std::vector<Adapter> layer_adapters;
    for (std::size_t k = 0; k < config_.layers; ++k) {
        const std::string p = "adapter.t" + std::to_string(t) + ".l" + std::to_string(k) + ".";
        Adapter a;
        a.activation = config_.activation;
        a.down_w = {p + "down.w", Tensor::zeros({d, b}), false};
        for (auto& v : a.down_w.value.data) v = rng.normal(0.0, 0.02);
        a.down_b = {p + "down.b", Tensor::zeros({b}), false};
        a.up_w = {p + "up.w", Tensor::zeros({b, d}), false};
        a.up_b = {p + "up.b", Tensor::zeros({d}), false};
        layer_adapters.push_back(std::move(a));
    }
    adapters_.push_back(std::move(layer_adapters));
}

void AdapterBank::freeze_task(std::size_t t) {
    if (t >= adapters_.size()) throw IndexError("no adapters for task " + std::to_string(t));
    if (static_cast<long>(t) != frozen_through_ + 1) {
        throw ProtocolError("tasks must be frozen in order; next is " + std::to_string(frozen_through_ + 1));
    }
    for (Parameter* p : task_parameters(t)) p->frozen = true;
    frozen_through_ = static_cast<long>(t);
}

const Adapter& AdapterBank::at(std::size_t task, std::size_t layer) const {
    if (task >= adapters_.size() || layer >= config_.layers) {
        throw StateError("no adapter for task " + std::to_string(task) + " layer " + std::to_string(layer));
    }
    return adapters_[task][layer];
}

Adapter& AdapterBank::at(std::size_t task, std::size_t layer) {
    return const_cast<Adapter&>(static_cast<const AdapterBank&>(*this).at(task, layer));
}

std::vector<Parameter*> AdapterBank::task_parameters(std::size_t task) {
    std::vector<Parameter*> out;
    for (std::size_t k = 0; k < config_.layers; ++k) {
        for (Parameter* p : at(task, k).parameters()) out.push_back(p);
    }
    return out;
}

std::vector<Parameter*> AdapterBank::parameters() {
    std::vector<Parameter*> out;
    for (std::size_t t = 0; t < adapters_.size(); ++t) {
        for (Parameter* p : task_parameters(t)) out.push_back(p);
    }
    return out;
}

ParamCount added_param_count(std::size_t d_model, std::size_t bottleneck, std::size_t layers,
                             std::size_t head_classes, std::size_t embed_dim) {
    AdapterConfig{d_model, bottleneck, layers, Activation::relu}.validate();
    ParamCount c;
    c.adapters = layers * (d_model * bottleneck + bottleneck + bottleneck * d_model + d_model);
    c.head = head_classes > 0 ? d_model * head_classes + head_classes : 0;
    c.embedding = embed_dim;
    return c;
}

}  // namespace linklearn
