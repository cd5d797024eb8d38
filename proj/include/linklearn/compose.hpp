#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "linklearn/adapter.hpp"
#include "linklearn/hypernet.hpp"

namespace linklearn {

enum class Direction { forward, bidirectional };

// How the adapter output h_tilde at each layer is assembled for a target task.
struct ComposeMode {
    enum class Kind { standalone, train_forward, infer_forward, infer_bidirectional, constant };
    Kind kind = Kind::standalone;
    double k = 1.0;                          // constant only
    Direction direction = Direction::forward;  // constant only

    static ComposeMode standalone() { return {Kind::standalone}; }
    static ComposeMode train_forward() { return {Kind::train_forward}; }
    static ComposeMode forward() { return {Kind::infer_forward}; }
    static ComposeMode bidirectional() { return {Kind::infer_bidirectional}; }
    static ComposeMode constant(double k, Direction d) { return {Kind::constant, k, d}; }

    // Report label: standalone, forward, bidirectional, forward-k<k>, bidirectional-k<k>.
    std::string name() const;
    static ComposeMode parse(const std::string& name);
};

// Adapters of the first n tasks bound to one tape, [task][layer].
struct BoundBank {
    std::vector<std::vector<BoundAdapter>> adapters;

    const BoundAdapter& at(std::size_t task, std::size_t layer) const;
};

BoundBank bind(Tape& tape, const AdapterBank& bank, std::size_t n_tasks);

// Task t's own adapter with implicit weight 1.
Var compose_standalone(std::size_t t, std::size_t layer, Var h_bar, const BoundBank& bank);

// sum_{p<t} beta^{pt}_k A^p(h_bar) + beta^{tt}_k A^t(h_bar)
Var compose_train(std::size_t t, std::size_t layer, Var h_bar, const BoundBank& bank, const BetaSet& betas);

// compose_train plus sum_{t<s<m} beta^{ts}_k A^s(h_bar).
Var compose_infer(std::size_t t, std::size_t m, std::size_t layer, Var h_bar, const BoundBank& bank,
                  const BetaSet& betas);

// The forward or bidirectional sum with every weight (self included) set to k.
Var compose_constant(std::size_t t, std::size_t m, std::size_t layer, Var h_bar, const BoundBank& bank, double k,
                     Direction direction);

}  // namespace linklearn
