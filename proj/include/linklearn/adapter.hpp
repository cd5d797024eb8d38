#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "linklearn/tensor.hpp"

namespace linklearn {

enum class Activation { identity, relu };

std::string to_string(Activation a);
Activation parse_activation(const std::string& s);

struct AdapterConfig {
    std::size_t d_model = 32;
    std::size_t bottleneck = 8;
    std::size_t layers = 4;
    Activation activation = Activation::relu;

    void validate() const;
};

// Bottleneck adapter: up(act(down(h))) applied token-wise.
struct Adapter {
    Parameter down_w;  // [d_model x bottleneck]
    Parameter down_b;  // [bottleneck]
    Parameter up_w;    // [bottleneck x d_model], zero at init
    Parameter up_b;    // [d_model], zero at init
    Activation activation = Activation::relu;

    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;
};

// Adapter parameters bound to one tape.
struct BoundAdapter {
    Var down_w, down_b, up_w, up_b;
    Activation activation = Activation::relu;
};

BoundAdapter bind(Tape& tape, const Adapter& adapter);
Var adapter_forward(const BoundAdapter& adapter, Var h_bar);
Var adapter_forward(Tape& tape, const Adapter& adapter, Var h_bar);

// adapters[task][layer]. Tasks are added in order and frozen once trained.
class AdapterBank {
public:
    AdapterBank() = default;
    explicit AdapterBank(AdapterConfig config);

    const AdapterConfig& config() const { return config_; }
    std::size_t task_count() const { return adapters_.size(); }
    // Highest frozen task id, or -1 when none is frozen.
    long frozen_through() const { return frozen_through_; }

    // Creates one adapter per layer for task t; t must equal frozen_through() + 1.
    void add_task(std::size_t t, std::uint64_t seed);
    void freeze_task(std::size_t t);

    const Adapter& at(std::size_t task, std::size_t layer) const;
    Adapter& at(std::size_t task, std::size_t layer);
    std::vector<Parameter*> task_parameters(std::size_t task);
    std::vector<Parameter*> parameters();

private:
    AdapterConfig config_;
    std::vector<std::vector<Adapter>> adapters_;
    long frozen_through_ = -1;
};

struct ParamCount {
    std::size_t adapters = 0;
    std::size_t head = 0;
    std::size_t embedding = 0;
    std::size_t total() const { return adapters + head + embedding; }
};

// Parameters added for every new task: L adapters (both projections with
// biases), a linear head, and one task embedding.
ParamCount added_param_count(std::size_t d_model, std::size_t bottleneck, std::size_t layers,
                             std::size_t head_classes = 0, std::size_t embed_dim = 0);

}  // namespace linklearn
