#include "linklearn/compose.hpp"

#include <cstdio>
#include <cstdlib>

#include "linklearn/errors.hpp"
#include "linklearn/ops.hpp"

namespace linklearn {
namespace {

struct Term {
    std::size_t task;
    Var weights;  // [1 x L]
};

// Terms are summed in ascending task order so that every mode reduces to the
// same floating-point expression when its extra weights vanish.
Var weighted_sum(std::size_t layer, Var h_bar, const BoundBank& bank, const std::vector<Term>& terms) {
    Var acc;
    bool first = true;
    for (const auto& term : terms) {
        Var out = ops::scale_by(adapter_forward(bank.at(term.task, layer), h_bar), term.weights, layer);
        acc = first ? out : ops::add(acc, out);
        first = false;
    }
    return acc;
}

std::string format_k(double k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", k);
    return buf;
}

}  // namespace

std::string ComposeMode::name() const {
    switch (kind) {
        case Kind::standalone: return "standalone";
        case Kind::train_forward: return "train-forward";
        case Kind::infer_forward: return "forward";
        case Kind::infer_bidirectional: return "bidirectional";
        case Kind::constant:
            return std::string(direction == Direction::forward ? "forward" : "bidirectional") + "-k" + format_k(k);
    }
    return "unknown";
}

ComposeMode ComposeMode::parse(const std::string& name) {
    if (name == "standalone") return standalone();
    if (name == "forward") return forward();
    if (name == "bidirectional") return bidirectional();
    for (auto [prefix, dir] : {std::pair{"forward-k", Direction::forward}, std::pair{"bidirectional-k", Direction::bidirectional}}) {
        const std::string p(prefix);
        if (name.rfind(p, 0) == 0 && name.size() > p.size()) {
            char* end = nullptr;
            const double k = std::strtod(name.c_str() + p.size(), &end);
            if (end && *end == '\0') return constant(k, dir);
        }
    }
    throw ConfigError("unknown compose mode '" + name + "'");
}

const BoundAdapter& BoundBank::at(std::size_t task, std::size_t layer) const {
    if (task >= adapters.size() || layer >= adapters[task].size()) {
        throw StateError("no adapter for task " + std::to_string(task) + " at layer " + std::to_string(layer));
    }
    return adapters[task][layer];
}

BoundBank bind(Tape& tape, const AdapterBank& bank, std::size_t n_tasks) {
    if (n_tasks > bank.task_count()) {
        throw StateError("bank holds " + std::to_string(bank.task_count()) + " tasks, " + std::to_string(n_tasks) +
                         " requested");
    }
    BoundBank out;
    for (std::size_t t = 0; t < n_tasks; ++t) {
        std::vector<BoundAdapter> layers;
        for (std::size_t k = 0; k < bank.config().layers; ++k) layers.push_back(bind(tape, bank.at(t, k)));
        out.adapters.push_back(std::move(layers));
    }
    return out;
}

Var compose_standalone(std::size_t t, std::size_t layer, Var h_bar, const BoundBank& bank) {
    return adapter_forward(bank.at(t, layer), h_bar);
}

Var compose_train(std::size_t t, std::size_t layer, Var h_bar, const BoundBank& bank, const BetaSet& betas) {
    std::vector<Term> terms;
    for (std::size_t p = 0; p <= t; ++p) terms.push_back({p, betas.get(p, t)});
    return weighted_sum(layer, h_bar, bank, terms);
}

Var compose_infer(std::size_t t, std::size_t m, std::size_t layer, Var h_bar, const BoundBank& bank,
                  const BetaSet& betas) {
    if (t >= m) throw IndexError("target task " + std::to_string(t) + " not below task count " + std::to_string(m));
    std::vector<Term> terms;
    for (std::size_t p = 0; p <= t; ++p) terms.push_back({p, betas.get(p, t)});
    for (std::size_t s = t + 1; s < m; ++s) terms.push_back({s, betas.get(t, s)});
    return weighted_sum(layer, h_bar, bank, terms);
}

Var compose_constant(std::size_t t, std::size_t m, std::size_t layer, Var h_bar, const BoundBank& bank, double k,
                     Direction direction) {
    if (t >= m) throw IndexError("target task " + std::to_string(t) + " not below task count " + std::to_string(m));
    bank.at(t, layer);
    const std::size_t n_layers = bank.adapters[t].size();
    Var weights = h_bar.tape->constant(Tensor::filled({1, n_layers}, k));
    const std::size_t last = direction == Direction::forward ? t : m - 1;
    std::vector<Term> terms;
    for (std::size_t p = 0; p <= last; ++p) terms.push_back({p, weights});
    return weighted_sum(layer, h_bar, bank, terms);
}

}  // namespace linklearn
