#include "linklearn/ewc.hpp"

#include "linklearn/errors.hpp"
#include "linklearn/ops.hpp"

namespace linklearn {

TensorMap estimate_fisher(std::size_t n, const std::function<GradMap(std::size_t)>& sample_grads,
                          std::span<const std::string> names) {
    if (n == 0) throw DataError("Fisher estimation needs at least one sample");
    TensorMap fi;
    for (std::size_t i = 0; i < n; ++i) {
        const GradMap g = sample_grads(i);
        for (const auto& name : names) {
            auto it = g.find(name);
            if (it == g.end()) continue;
            auto [acc, inserted] = fi.try_emplace(name, Tensor::zeros(it->second.shape));
            if (acc->second.shape != it->second.shape) throw DimensionError("gradient shape changed for " + name);
            for (std::size_t j = 0; j < it->second.numel(); ++j) acc->second.data[j] += it->second.data[j] * it->second.data[j];
        }
    }
    for (auto& [name, t] : fi) {
        for (auto& v : t.data) v /= static_cast<double>(n);
    }
    return fi;
}

TensorMap accumulate_fisher(const TensorMap& prev, const TensorMap& next, double gamma) {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("Fisher decay gamma must lie in [0, 1]");
    TensorMap out = next;
    for (const auto& [name, p] : prev) {
        auto it = out.find(name);
        if (it == out.end()) throw DimensionError("importance for '" + name + "' missing from new estimate");
        if (it->second.shape != p.shape) {
            throw DimensionError("importance shapes differ for '" + name + "': " + shape_str(p.shape) + " vs " +
                                 shape_str(it->second.shape));
        }
        for (std::size_t j = 0; j < p.numel(); ++j) it->second.data[j] = gamma * p.data[j] + it->second.data[j];
    }
    return out;
}

void consolidate(FisherState& state, const TensorMap& task_fi, const WeightMLP& mlp, double gamma, std::size_t task) {
    state.fi = accumulate_fisher(state.fi, task_fi, gamma);
    state.anchor.clear();
    for (const Parameter* p : mlp.parameters()) {
        state.anchor[p->name] = p->value;
        if (!state.fi.count(p->name)) state.fi[p->name] = Tensor::zeros(p->value.shape);
    }
    state.last_task = static_cast<long>(task);
}

Var ewc_penalty(Tape& tape, const BoundMlp& mlp, const FisherState& state, double lambda) {
    if (state.empty() || lambda == 0.0) return tape.constant(Tensor::scalar(0.0));
    Var total;
    bool first = true;
    for (const auto& [name, theta] : mlp.by_name) {
        auto fi = state.fi.find(name);
        auto anchor = state.anchor.find(name);
        if (fi == state.fi.end() || anchor == state.anchor.end()) {
            throw StateError("no anchor/importance for MLP parameter '" + name + "'");
        }
        Var term = ops::weighted_sq_diff(theta, anchor->second, fi->second);
        total = first ? term : ops::add(total, term);
        first = false;
    }
    if (state.fi.size() != mlp.by_name.size() || state.anchor.size() != mlp.by_name.size()) {
        throw StateError("Fisher state tracks parameters the MLP does not have");
    }
    return ops::scale(total, lambda);
}

}  // namespace linklearn
