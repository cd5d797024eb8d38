#include "linklearn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "linklearn/errors.hpp"

namespace linklearn {

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> d, bool rg)
    : shape(std::move(s)), data(std::move(d)), requires_grad(rg) {
    if (shape_numel(shape) != data.size()) {
        throw DimensionError("shape " + shape_str(shape) + " holds " +
                             std::to_string(shape_numel(shape)) + " values, got " +
                             std::to_string(data.size()));
    }
    for (auto extent : shape) {
        if (extent == 0) throw DimensionError("zero extent in shape " + shape_str(shape));
    }
}

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

std::size_t Tensor::rows() const {
    if (shape.empty()) return 1;
    return numel() / shape.back();
}

std::size_t Tensor::cols() const { return shape.empty() ? 1 : shape.back(); }

double Tensor::item() const {
    if (numel() != 1) throw RankError("expected a scalar, got shape " + shape_str(shape));
    return data[0];
}

bool Tensor::all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

const Tensor& Var::value() const { return tape->value(id); }

bool Var::requires_grad() const { return tape->requires_grad(id); }

Var Tape::constant(Tensor value) { return leaf(std::move(value), false); }

Var Tape::leaf(Tensor value, bool rg) {
    value.requires_grad = rg;
    Node node;
    node.value = std::move(value);
    node.requires_grad = rg;
    nodes_.push_back(std::move(node));
    return Var{this, nodes_.size() - 1};
}

Var Tape::param(const Parameter& p) {
    Var v = leaf(p.value, !p.frozen);
    nodes_[v.id].param_name = p.name;
    return v;
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
    bool rg = false;
    for (auto id : inputs) rg = rg || nodes_[id].requires_grad;
    value.requires_grad = rg;
    Node node;
    node.value = std::move(value);
    node.requires_grad = rg;
    if (rg) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var{this, nodes_.size() - 1};
}

std::vector<double>& Tape::grad(std::size_t id) {
    auto& node = nodes_[id];
    if (node.grad.empty()) node.grad.assign(node.value.numel(), 0.0);
    return node.grad;
}

GradMap backward(Tape& tape, Var loss) {
    if (loss.tape != &tape) throw StateError("loss belongs to a different tape");
    const Tensor& lv = tape.value(loss.id);
    if (lv.numel() != 1) throw RankError("loss must be a scalar, got shape " + shape_str(lv.shape));

    for (auto& node : tape.nodes_) node.grad.clear();
    tape.backward_visits_ = 0;
    if (tape.nodes_[loss.id].requires_grad) {
        tape.grad(loss.id)[0] = 1.0;
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            auto& node = tape.nodes_[i];
            if (!node.requires_grad || node.grad.empty() || !node.backward) continue;
            // Closures only write to their inputs, which precede node i.
            node.backward(tape, node.grad);
            ++tape.backward_visits_;
        }
    }

    GradMap grads;
    for (std::size_t i = 0; i < tape.nodes_.size(); ++i) {
        auto& node = tape.nodes_[i];
        if (node.param_name.empty() || !node.requires_grad) continue;
        auto [it, inserted] = grads.try_emplace(node.param_name, Tensor::zeros(node.value.shape));
        if (!node.grad.empty()) {
            for (std::size_t j = 0; j < node.grad.size(); ++j) it->second.data[j] += node.grad[j];
        }
    }
    return grads;
}

void sgd_step(std::span<Parameter* const> params, const GradMap& grads, double lr) {
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    for (Parameter* p : params) {
        if (p->frozen) continue;
        auto it = grads.find(p->name);
        if (it == grads.end()) continue;
        if (it->second.shape != p->value.shape) {
            throw DimensionError("gradient " + shape_str(it->second.shape) + " for parameter '" +
                                 p->name + "' " + shape_str(p->value.shape));
        }
        for (std::size_t j = 0; j < p->value.numel(); ++j) p->value.data[j] -= lr * it->second.data[j];
    }
}

GradCheckReport grad_check(const std::function<Var(Tape&)>& fn, std::span<Parameter* const> params,
                           double eps) {
    if (!(eps > 0.0)) throw ConfigError("grad_check eps must be positive");
    GradCheckReport report;

    auto evaluate = [&]() {
        Tape tape;
        const double v = fn(tape).value().item();
        if (!std::isfinite(v)) throw NumericError("non-finite loss during grad_check");
        return v;
    };

    GradMap analytic;
    {
        Tape tape;
        Var loss = fn(tape);
        for (std::size_t i = 0; i < tape.size(); ++i) {
            if (!tape.value(i).all_finite()) throw NumericError("non-finite intermediate at node " + std::to_string(i));
        }
        analytic = backward(tape, loss);
    }

    for (Parameter* p : params) {
        if (p->frozen) continue;
        auto it = analytic.find(p->name);
        for (std::size_t j = 0; j < p->value.numel(); ++j) {
            const double saved = p->value.data[j];
            p->value.data[j] = saved + eps;
            const double up = evaluate();
            p->value.data[j] = saved - eps;
            const double down = evaluate();
            p->value.data[j] = saved;

            GradCheckEntry e;
            e.param = p->name;
            e.index = j;
            e.analytic = it == analytic.end() ? 0.0 : it->second.data[j];
            e.numeric = (up - down) / (2.0 * eps);
            const double denom = std::max({std::abs(e.analytic), std::abs(e.numeric), kGradCheckFloor});
            e.rel_error = std::abs(e.analytic - e.numeric) / denom;
            report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
            report.entries.push_back(e);
        }
    }
    return report;
}

}  // namespace linklearn
