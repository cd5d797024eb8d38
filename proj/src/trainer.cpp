#include "linklearn/trainer.hpp"

#include <algorithm>
#include <numeric>

#include "linklearn/errors.hpp"
#include "linklearn/ops.hpp"
#include "linklearn/rng.hpp"

namespace linklearn {
namespace {

constexpr std::size_t kEvalBatch = 64;

TaskHead make_head(std::size_t t, std::size_t d_model, std::size_t classes, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x4EAD0 + t));
    TaskHead h;
    h.w = {"head.t" + std::to_string(t) + ".w", Tensor::zeros({d_model, classes}), false};
    for (auto& v : h.w.value.data) v = rng.normal(0.0, 0.02);
    h.b = {"head.t" + std::to_string(t) + ".b", Tensor::zeros({classes}), false};
    return h;
}

Var apply_head(Tape& tape, const TaskHead& head, Var rep) {
    return ops::add_bias(ops::matmul(rep, tape.param(head.w)), tape.param(head.b));
}

// Builds the adapter hooks for target task t and runs the network.
Var forward_logits(Tape& tape, const ContinualState& s, const Tensor& images, std::size_t t, const ComposeMode& mode,
                   const ForcedBetas* forced, BoundMlp* mlp_out = nullptr) {
    const std::size_t L = s.model.backbone.layers;
    std::vector<AdapterHook> hooks;
    hooks.reserve(L);

    using Kind = ComposeMode::Kind;
    if (mode.kind == Kind::standalone && forced == nullptr) {
        BoundBank bank = bind(tape, s.bank, t + 1);
        for (std::size_t k = 0; k < L; ++k) {
            hooks.push_back([bank, t, k](Var h) { return compose_standalone(t, k, h, bank); });
        }
    } else if (forced != nullptr) {
        const std::size_t m = s.bank.task_count();
        BoundBank bank = bind(tape, s.bank, m);
        BetaSet betas;
        betas.role = BetaRole::infer;
        betas.target = t;
        for (const auto& [pair, w] : *forced) betas.weights.emplace(pair, tape.constant(w));
        for (std::size_t k = 0; k < L; ++k) {
            hooks.push_back([bank, betas, t, m, k](Var h) { return compose_infer(t, m, k, h, bank, betas); });
        }
    } else {
        if (s.regime != Regime::linked && mode.kind != Kind::constant) {
            throw StateError("mode " + mode.name() + " needs a linked state");
        }
        if (mode.kind == Kind::constant) {
            const std::size_t m = mode.direction == Direction::forward ? t + 1 : s.tasks_trained;
            BoundBank bank = bind(tape, s.bank, m);
            for (std::size_t k = 0; k < L; ++k) {
                hooks.push_back([bank, t, m, k, mode](Var h) {
                    return compose_constant(t, m, k, h, bank, mode.k, mode.direction);
                });
            }
        } else if (mode.kind == Kind::train_forward) {
            BoundMlp mlp = bind(tape, s.mlp);
            BetaSet betas = train_betas(tape, t, s.embeddings, mlp);
            BoundBank bank = bind(tape, s.bank, t + 1);
            for (std::size_t k = 0; k < L; ++k) {
                hooks.push_back([bank, betas, t, k](Var h) { return compose_train(t, k, h, bank, betas); });
            }
            if (mlp_out) *mlp_out = std::move(mlp);
        } else {
            const std::size_t m = mode.kind == Kind::infer_forward ? t + 1 : s.tasks_trained;
            BoundMlp mlp = bind(tape, s.mlp);
            BetaSet betas = infer_betas(tape, t, m, s.embeddings, mlp);
            BoundBank bank = bind(tape, s.bank, m);
            for (std::size_t k = 0; k < L; ++k) {
                hooks.push_back([bank, betas, t, m, k](Var h) { return compose_infer(t, m, k, h, bank, betas); });
            }
        }
    }
    Var rep = backbone_forward(tape, s.backbone, images, hooks);
    return apply_head(tape, s.heads.at(t), rep);
}

void check_predictable(const ContinualState& s, std::size_t t) {
    if (t >= s.tasks_trained || t >= s.heads.size()) {
        throw IndexError("task " + std::to_string(t) + " not trained (" + std::to_string(s.tasks_trained) + " tasks)");
    }
}

template <typename Fn>
Tensor batched_logits(const ContinualState& s, const Tensor& images, std::size_t t, Fn&& fn) {
    check_predictable(s, t);
    const std::size_t n = batch_size_of(images, s.model.backbone);
    const std::size_t px = images.numel() / n;
    const std::size_t classes = s.heads[t].b.value.numel();
    Tensor out = Tensor::zeros({n, classes});
    for (std::size_t start = 0; start < n; start += kEvalBatch) {
        const std::size_t b = std::min(kEvalBatch, n - start);
        Tensor chunk({b, s.model.backbone.image_h, s.model.backbone.image_w, s.model.backbone.channels},
                     std::vector<double>(images.data.begin() + static_cast<std::ptrdiff_t>(start * px),
                                         images.data.begin() + static_cast<std::ptrdiff_t>((start + b) * px)));
        Tape tape;
        const Tensor& logits = fn(tape, chunk).value();
        std::copy(logits.data.begin(), logits.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(start * classes));
    }
    return out;
}

}  // namespace

void ModelConfig::validate() const {
    backbone.validate();
    adapter_config().validate();
    hypernet.validate();
    if (hypernet.layers != backbone.layers) {
        throw ConfigError("hypernetwork emits " + std::to_string(hypernet.layers) + " weights for " +
                          std::to_string(backbone.layers) + " layers");
    }
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    if (epochs == 0) throw ConfigError("epochs must be >= 1");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
}

std::string to_string(Regime r) { return r == Regime::linked ? "linked" : "standalone"; }

Regime parse_regime(const std::string& s) {
    if (s == "linked") return Regime::linked;
    if (s == "standalone") return Regime::standalone;
    throw ConfigError("unknown regime '" + s + "'");
}

ContinualState ContinualState::create(const ModelConfig& model, Backbone backbone, Regime regime, std::uint64_t seed) {
    model.validate();
    if (!backbone.frozen()) throw StateError("continual training needs a frozen backbone");
    if (backbone.config.d_model != model.backbone.d_model || backbone.config.layers != model.backbone.layers) {
        throw ConfigError("backbone does not match model config");
    }
    ContinualState s;
    s.model = model;
    s.model.backbone = backbone.config;
    s.regime = regime;
    s.seed = seed;
    s.backbone = std::move(backbone);
    s.bank = AdapterBank(model.adapter_config());
    s.mlp = WeightMLP::init(model.hypernet, seed);
    return s;
}

std::vector<Parameter*> ContinualState::trainable_for(std::size_t t) {
    std::vector<Parameter*> out = bank.task_parameters(t);
    out.push_back(&heads.at(t).w);
    out.push_back(&heads.at(t).b);
    if (regime == Regime::linked) {
        out.push_back(&embeddings.at(t).vec);
        for (Parameter* p : mlp.parameters()) out.push_back(p);
    }
    return out;
}

std::vector<const Parameter*> ContinualState::all_parameters() const {
    auto& self = const_cast<ContinualState&>(*this);
    std::vector<const Parameter*> out;
    for (Parameter* p : self.backbone.parameters()) out.push_back(p);
    for (Parameter* p : self.bank.parameters()) out.push_back(p);
    for (auto& h : self.heads) {
        out.push_back(&h.w);
        out.push_back(&h.b);
    }
    for (auto& e : self.embeddings) out.push_back(&e.vec);
    for (Parameter* p : self.mlp.parameters()) out.push_back(p);
    return out;
}

LossTerms training_loss(Tape& tape, const ContinualState& s, std::size_t t, const Tensor& images,
                        std::span<const std::size_t> labels, double lambda) {
    const ComposeMode mode = s.regime == Regime::linked ? ComposeMode::train_forward() : ComposeMode::standalone();
    BoundMlp mlp;
    Var logits = forward_logits(tape, s, images, t, mode, nullptr, &mlp);
    LossTerms terms;
    terms.task = ops::softmax_cross_entropy(logits, labels);
    if (s.regime == Regime::linked) {
        terms.penalty = ewc_penalty(tape, mlp, s.fisher, lambda);
        terms.total = ops::add(terms.task, terms.penalty);
    } else {
        terms.penalty = tape.constant(Tensor::scalar(0.0));
        terms.total = terms.task;
    }
    return terms;
}

TrainStats train_task(ContinualState& s, std::size_t t, const Dataset& train, const TrainConfig& config,
                      const StepObserver& observer) {
    config.validate();
    if (t != s.tasks_trained) {
        throw ProtocolError("task " + std::to_string(t) + " arrived but " + std::to_string(s.tasks_trained) +
                            " tasks are trained");
    }
    if (train.size() == 0) throw DataError("task " + std::to_string(t) + " has no training data");
    train.validate();

    const std::uint64_t task_seed = derive_seed(s.seed, t);
    s.bank.add_task(t, task_seed);
    s.heads.push_back(make_head(t, s.model.backbone.d_model, train.n_classes, task_seed));
    if (s.regime == Regime::linked) s.embeddings.push_back(make_task_embedding(t, s.model.hypernet, task_seed));

    const ComposeMode mode = s.regime == Regime::linked ? ComposeMode::train_forward() : ComposeMode::standalone();
    std::vector<Parameter*> trainable = s.trainable_for(t);

    Rng shuffle_rng(derive_seed(task_seed, 0x5EED));
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainStats stats;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t n = std::min(config.batch_size, order.size() - start);
            std::span<const std::size_t> idx(order.data() + start, n);
            Tape tape;
            const auto labels = batch_labels(train, idx);
            const LossTerms terms = training_loss(tape, s, t, batch_images(train, idx), labels, config.lambda);
            const double penalty = terms.penalty.value().item();
            Var task_loss = terms.task;
            Var loss = terms.total;
            const GradMap grads = backward(tape, loss);
            if (observer) observer({t, step, task_loss.value().item(), penalty, &grads});
            sgd_step(trainable, grads, config.lr);
            stats.task_losses.push_back(task_loss.value().item());
            ++step;
        }
    }

    if (s.regime == Regime::linked) {
        std::vector<std::size_t> sample_order(train.size());
        std::iota(sample_order.begin(), sample_order.end(), std::size_t{0});
        Rng fisher_rng(derive_seed(task_seed, 0xF15E));
        fisher_rng.shuffle(sample_order);
        const std::size_t n = config.fisher_samples == 0 ? train.size() : std::min(config.fisher_samples, train.size());
        std::vector<std::string> names;
        for (const Parameter* p : s.mlp.parameters()) names.push_back(p->name);
        auto sample_grads = [&](std::size_t i) {
            const std::size_t idx = sample_order[i];
            Tape tape;
            Var logits = forward_logits(tape, s, batch_images(train, {&idx, 1}), t, mode, nullptr);
            const std::size_t label = train.labels[idx];
            return backward(tape, ops::softmax_cross_entropy(logits, {&label, 1}));
        };
        consolidate(s.fisher, estimate_fisher(n, sample_grads, names), s.mlp, config.gamma, t);
        s.embeddings[t].vec.frozen = true;
    }
    s.bank.freeze_task(t);
    s.heads[t].w.frozen = true;
    s.heads[t].b.frozen = true;
    s.tasks_trained = t + 1;
    return stats;
}

Tensor predict(const ContinualState& s, const Tensor& images, std::size_t t, const ComposeMode& mode) {
    if (mode.kind == ComposeMode::Kind::infer_bidirectional || (mode.kind == ComposeMode::Kind::constant &&
                                                                 mode.direction == Direction::bidirectional)) {
        if (s.bank.task_count() != s.tasks_trained) throw StateError("bidirectional inference needs every task trained");
    }
    return batched_logits(s, images, t, [&](Tape& tape, const Tensor& chunk) {
        return forward_logits(tape, s, chunk, t, mode, nullptr);
    });
}

Tensor predict_with_betas(const ContinualState& s, const Tensor& images, std::size_t t, const ForcedBetas& betas) {
    return batched_logits(s, images, t, [&](Tape& tape, const Tensor& chunk) {
        return forward_logits(tape, s, chunk, t, ComposeMode::bidirectional(), &betas);
    });
}

Tensor predict_backbone_only(const ContinualState& s, const Tensor& images, std::size_t t) {
    return batched_logits(s, images, t, [&](Tape& tape, const Tensor& chunk) {
        std::vector<AdapterHook> hooks(s.model.backbone.layers, zero_hook());
        return apply_head(tape, s.heads.at(t), backbone_forward(tape, s.backbone, chunk, hooks));
    });
}

std::vector<ComposeMode> default_end_modes(Regime regime, const std::vector<double>& constant_ks) {
    if (regime == Regime::standalone) return {ComposeMode::standalone()};
    std::vector<ComposeMode> modes{ComposeMode::forward(), ComposeMode::bidirectional()};
    for (double k : constant_ks) {
        modes.push_back(ComposeMode::constant(k, Direction::forward));
        modes.push_back(ComposeMode::constant(k, Direction::bidirectional));
    }
    return modes;
}

std::vector<double> evaluate_mode(const ContinualState& s, const TaskSplit& tasks, const ComposeMode& mode) {
    std::vector<double> acc;
    for (std::size_t i = 0; i < tasks.tasks.size(); ++i) acc.push_back(eval_accuracy(s, i, tasks.tasks[i].test, mode));
    return acc;
}

AccuracyMatrix run_sequence(ContinualState& s, const TaskSplit& tasks, const TrainConfig& config,
                            const std::vector<ComposeMode>& end_modes) {
    AccuracyMatrix m;
    m.n_tasks = tasks.tasks.size();
    const ComposeMode during_mode = s.regime == Regime::linked ? ComposeMode::forward() : ComposeMode::standalone();
    for (std::size_t t = 0; t < tasks.tasks.size(); ++t) {
        train_task(s, t, tasks.tasks[t].train, config);
        m.during.push_back(eval_accuracy(s, t, tasks.tasks[t].test, during_mode));
    }
    for (const auto& mode : end_modes) m.add_end(mode.name(), evaluate_mode(s, tasks, mode));
    return m;
}

}  // namespace linklearn
