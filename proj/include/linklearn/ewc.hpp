#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>

#include "linklearn/hypernet.hpp"
#include "linklearn/tensor.hpp"

namespace linklearn {

using TensorMap = std::map<std::string, Tensor>;

// Online-EWC state for the weight MLP: accumulated diagonal importances and
// a single rolling anchor (the MLP after the most recent task).
struct FisherState {
    TensorMap fi;
    TensorMap anchor;
    long last_task = -1;

    bool empty() const { return fi.empty(); }
};

// Mean over n samples of the squared per-sample gradient, for each named
// parameter. sample_grads(i) returns the gradients of sample i's task loss.
TensorMap estimate_fisher(std::size_t n, const std::function<GradMap(std::size_t)>& sample_grads,
                          std::span<const std::string> names);

// gamma * prev + next, element-wise. An empty prev yields next.
TensorMap accumulate_fisher(const TensorMap& prev, const TensorMap& next, double gamma);

// Folds a task's importances into the state and re-anchors at the current MLP.
void consolidate(FisherState& state, const TensorMap& task_fi, const WeightMLP& mlp, double gamma, std::size_t task);

// lambda * sum_j fi_j (anchor_j - theta_j)^2 over every MLP parameter.
// Zero (a constant) when no task has been consolidated yet.
Var ewc_penalty(Tape& tape, const BoundMlp& mlp, const FisherState& state, double lambda);

}  // namespace linklearn
