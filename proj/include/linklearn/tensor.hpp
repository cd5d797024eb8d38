#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace linklearn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major float64 tensor. A plain value; autodiff state lives on a Tape.
struct Tensor {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;

    Tensor() = default;
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(Shape shape);
    static Tensor filled(Shape shape, double value);
    static Tensor scalar(double value);

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    // Product of every dimension but the last.
    std::size_t rows() const;
    std::size_t cols() const;
    double item() const;

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }
    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    bool all_finite() const;
};

// A named, optionally frozen model weight. Frozen parameters never receive
// gradients and are never touched by an optimizer step.
struct Parameter {
    std::string name;
    Tensor value;
    bool frozen = false;
};

using GradMap = std::map<std::string, Tensor>;

class Tape;

// Handle to a value recorded on a tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape; }
    bool requires_grad() const;
};

// Records differentiable operations in execution order. Because a node can
// only reference nodes created before it, insertion order is a topological
// order and a single reverse sweep visits every node once.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const std::vector<double>& out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    Var leaf(Tensor value, bool requires_grad);
    // Binds a parameter: differentiable unless frozen. Gradients are reported
    // under the parameter's name by backward().
    Var param(const Parameter& p);

    // Used by op implementations.
    Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);
    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    // Gradient buffer for a node, allocated on first use. Only valid for nodes
    // that require grad.
    std::vector<double>& grad(std::size_t id);

    std::size_t size() const { return nodes_.size(); }
    // Number of nodes whose backward closure ran during the last backward().
    std::size_t backward_visits() const { return backward_visits_; }

    friend GradMap backward(Tape& tape, Var loss);

private:
    struct Node {
        Tensor value;
        bool requires_grad = false;
        std::vector<double> grad;
        BackwardFn backward;
        std::string param_name;
    };
    std::vector<Node> nodes_;
    std::size_t backward_visits_ = 0;
};

// Reverse sweep from a scalar loss. Returns gradients for every non-frozen
// parameter bound on the tape (zeros if the loss does not depend on it).
GradMap backward(Tape& tape, Var loss);

// p <- p - lr * g for each non-frozen parameter that has a gradient.
void sgd_step(std::span<Parameter* const> params, const GradMap& grads, double lr);

struct GradCheckEntry {
    std::string param;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::vector<GradCheckEntry> entries;
};

// |a - n| / max(|a|, |n|, floor). The floor keeps gradients that are zero up
// to round-off from reporting spurious relative errors.
inline constexpr double kGradCheckFloor = 1e-6;

// Compares tape gradients of fn against central finite differences, element by
// element, for every non-frozen parameter in params. fn must bind the
// parameters itself (via Tape::param) and return a scalar.
GradCheckReport grad_check(const std::function<Var(Tape&)>& fn, std::span<Parameter* const> params,
                           double eps = 1e-5);

}  // namespace linklearn
