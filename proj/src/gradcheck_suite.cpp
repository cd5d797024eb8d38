#include "linklearn/gradcheck_suite.hpp"

#include <cmath>
#include <functional>

#include "linklearn/backbone.hpp"
#include "linklearn/compose.hpp"
#include "linklearn/ewc.hpp"
#include "linklearn/hypernet.hpp"
#include "linklearn/ops.hpp"
#include "linklearn/rng.hpp"
#include "linklearn/trainer.hpp"

namespace linklearn {
namespace {

Parameter random_param(Rng& rng, std::string name, Shape shape, double std = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = rng.normal(0.0, std);
    return {std::move(name), std::move(t), false};
}

Tensor random_tensor(Rng& rng, Shape shape, double std = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = rng.normal(0.0, std);
    return t;
}

// Contracts an arbitrary output with fixed random weights so every output
// element contributes a distinct amount to the scalar. The weights shrink with
// the output size to keep the scalar O(1): finite-difference round-off grows
// with the loss magnitude.
Var project(Tape& tape, Var out, std::uint64_t seed) {
    Rng rng(seed);
    const double std = 1.0 / std::sqrt(static_cast<double>(shape_numel(out.shape())));
    return ops::sum(ops::mul(out, tape.constant(random_tensor(rng, out.shape(), std))));
}

GradCheckCase check(std::string name, const std::function<Var(Tape&)>& fn, std::vector<Parameter*> params) {
    const GradCheckReport r = grad_check(fn, params);
    return {std::move(name), r.max_rel_error, r.entries.size()};
}

BackboneConfig tiny_backbone() {
    BackboneConfig c;
    c.image_h = 8;
    c.image_w = 8;
    c.channels = 1;
    c.patch = 4;
    c.d_model = 8;
    c.n_heads = 2;
    c.d_ff = 16;
    c.layers = 2;
    return c;
}

ModelConfig tiny_model() {
    ModelConfig m;
    m.backbone = tiny_backbone();
    m.bottleneck = 3;
    m.adapter_activation = Activation::relu;
    m.hypernet.embed_dim = 4;
    m.hypernet.hidden = {6, 5};
    m.hypernet.layers = 2;
    return m;
}

void randomize(std::vector<Parameter*> params, Rng& rng, double std) {
    for (Parameter* p : params) {
        for (auto& v : p->value.data) v = rng.normal(0.0, std);
    }
}

}  // namespace

std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 1));
    std::vector<GradCheckCase> out;
    const std::uint64_t proj = derive_seed(seed, 2);

    {
        Parameter a = random_param(rng, "a", {3, 4}), b = random_param(rng, "b", {4, 5});
        out.push_back(check("op.matmul", [&](Tape& t) {
            return project(t, ops::matmul(t.param(a), t.param(b)), proj);
        }, {&a, &b}));
    }
    {
        Parameter a = random_param(rng, "a", {3, 4}), b = random_param(rng, "b", {3, 4});
        out.push_back(check("op.add", [&](Tape& t) { return project(t, ops::add(t.param(a), t.param(b)), proj); },
                            {&a, &b}));
        out.push_back(check("op.mul", [&](Tape& t) { return project(t, ops::mul(t.param(a), t.param(b)), proj); },
                            {&a, &b}));
        out.push_back(check("op.scale", [&](Tape& t) { return project(t, ops::scale(t.param(a), -1.7), proj); },
                            {&a}));
        out.push_back(check("op.relu", [&](Tape& t) { return project(t, ops::relu(t.param(a)), proj); }, {&a}));
        out.push_back(check("op.gelu", [&](Tape& t) { return project(t, ops::gelu(t.param(a)), proj); }, {&a}));
        out.push_back(check("op.sum", [&](Tape& t) { return ops::sum(ops::mul(t.param(a), t.param(b))); },
                            {&a, &b}));
    }
    {
        Parameter x = random_param(rng, "x", {3, 4}), bias = random_param(rng, "bias", {4});
        out.push_back(check("op.add_bias", [&](Tape& t) {
            return project(t, ops::add_bias(t.param(x), t.param(bias)), proj);
        }, {&x, &bias}));
    }
    {
        Parameter x = random_param(rng, "x", {3, 4}), v = random_param(rng, "v", {1, 3});
        out.push_back(check("op.scale_by", [&](Tape& t) {
            return project(t, ops::scale_by(t.param(x), t.param(v), 1), proj);
        }, {&x, &v}));
    }
    {
        Parameter x = random_param(rng, "x", {4, 6}), g = random_param(rng, "gain", {6}), b = random_param(rng, "bias", {6});
        out.push_back(check("op.layernorm", [&](Tape& t) {
            return project(t, ops::layernorm(t.param(x), t.param(g), t.param(b)), proj);
        }, {&x, &g, &b}));
    }
    {
        Parameter a = random_param(rng, "a", {3, 2}), b = random_param(rng, "b", {3, 4});
        out.push_back(check("op.concat_cols", [&](Tape& t) {
            return project(t, ops::concat_cols(t.param(a), t.param(b)), proj);
        }, {&a, &b}));
    }
    {
        Parameter logits = random_param(rng, "logits", {4, 3});
        const std::vector<std::size_t> labels{0, 2, 1, 2};
        out.push_back(check("op.softmax_cross_entropy", [&](Tape& t) {
            return ops::softmax_cross_entropy(t.param(logits), labels);
        }, {&logits}));
    }
    {
        Parameter theta = random_param(rng, "theta", {2, 3});
        const Tensor anchor = random_tensor(rng, {2, 3});
        Tensor fi = random_tensor(rng, {2, 3});
        for (auto& v : fi.data) v = v * v;
        out.push_back(check("op.weighted_sq_diff", [&](Tape& t) {
            return ops::weighted_sq_diff(t.param(theta), anchor, fi);
        }, {&theta}));
    }
    {
        // 2 sequences of 3 tokens, 2 heads of width 2.
        Parameter q = random_param(rng, "q", {6, 4}), k = random_param(rng, "k", {6, 4}), v = random_param(rng, "v", {6, 4});
        out.push_back(check("op.attention", [&](Tape& t) {
            return project(t, ops::attention(t.param(q), t.param(k), t.param(v), 2, 2), proj);
        }, {&q, &k, &v}));
    }
    {
        Parameter patches = random_param(rng, "patches", {4, 3}), cls = random_param(rng, "cls", {1, 3}),
                  pos = random_param(rng, "pos", {3, 3});
        out.push_back(check("op.assemble_tokens", [&](Tape& t) {
            return project(t, ops::assemble_tokens(t.param(patches), t.param(cls), t.param(pos), 2), proj);
        }, {&patches, &cls, &pos}));
        out.push_back(check("op.select_rows", [&](Tape& t) {
            return project(t, ops::select_rows(t.param(patches), 2, 1), proj);
        }, {&patches}));
    }

    const ModelConfig model = tiny_model();
    const BackboneConfig& bc = model.backbone;
    const std::size_t batch = 2;
    const Tensor images = random_tensor(rng, {batch, bc.image_h, bc.image_w, bc.channels});

    {
        // One block, every backbone weight live, with a nonzero adapter hook.
        Backbone bb = Backbone::init(bc, derive_seed(seed, 3));
        randomize(bb.parameters(), rng, 0.3);
        AdapterBank bank(model.adapter_config());
        bank.add_task(0, derive_seed(seed, 4));
        randomize(bank.task_parameters(0), rng, 0.5);
        std::vector<Parameter*> params = bb.parameters();
        for (Parameter* p : bank.task_parameters(0)) params.push_back(p);
        out.push_back(check("block", [&](Tape& t) {
            Var h = patch_embed(t, bb, images);
            const Adapter& a = bank.at(0, 0);
            BlockActivations act = block_forward(t, bb, 0, h, batch, [&](Var hb) { return adapter_forward(t, a, hb); });
            return project(t, act.h_out, proj);
        }, params));
    }
    {
        // Two linked adapters summed with generated per-layer weights.
        AdapterBank bank(model.adapter_config());
        bank.add_task(0, derive_seed(seed, 5));
        randomize(bank.task_parameters(0), rng, 0.5);
        bank.freeze_task(0);
        bank.add_task(1, derive_seed(seed, 6));
        randomize(bank.task_parameters(1), rng, 0.5);
        Parameter b01 = random_param(rng, "beta01", {1, bc.layers}), b11 = random_param(rng, "beta11", {1, bc.layers});
        Parameter hbar = random_param(rng, "h_bar", {5, bc.d_model});
        std::vector<Parameter*> params = bank.task_parameters(1);
        params.insert(params.end(), {&b01, &b11, &hbar});
        out.push_back(check("composition", [&](Tape& t) {
            BoundBank bound = bind(t, bank, 2);
            BetaSet betas;
            betas.target = 1;
            betas.weights[{0, 1}] = t.param(b01);
            betas.weights[{1, 1}] = t.param(b11);
            Var h = t.param(hbar);
            Var total = compose_train(1, 0, h, bound, betas);
            total = ops::add(total, compose_train(1, 1, h, bound, betas));
            return project(t, total, proj);
        }, params));
    }
    {
        WeightMLP mlp = WeightMLP::init(model.hypernet, derive_seed(seed, 7));
        TaskEmbedding e0 = make_task_embedding(0, model.hypernet, derive_seed(seed, 8));
        TaskEmbedding e1 = make_task_embedding(1, model.hypernet, derive_seed(seed, 9));
        randomize({&e0.vec, &e1.vec}, rng, 1.0);
        std::vector<Parameter*> params = mlp.parameters();
        params.insert(params.end(), {&e0.vec, &e1.vec});
        out.push_back(check("beta_generation", [&](Tape& t) {
            BoundMlp bound = bind(t, mlp);
            return project(t, gen_beta(bound, t.param(e0.vec), t.param(e1.vec)), proj);
        }, params));
    }
    {
        // Total objective for the second task of a linked state: cross-entropy
        // through composed adapters plus the consolidated MLP penalty.
        Backbone bb = Backbone::init(bc, derive_seed(seed, 10));
        randomize(bb.parameters(), rng, 0.3);
        bb.freeze();
        ContinualState s = ContinualState::create(model, std::move(bb), Regime::linked, derive_seed(seed, 11));
        Dataset train;
        train.height = bc.image_h;
        train.width = bc.image_w;
        train.channels = bc.channels;
        train.n_classes = 2;
        for (std::size_t i = 0; i < 4; ++i) {
            for (std::size_t j = 0; j < train.pixels(); ++j) train.images.push_back(static_cast<float>(rng.normal()));
            train.labels.push_back(i % 2);
        }
        TrainConfig tc;
        tc.epochs = 1;
        tc.batch_size = 4;
        tc.lambda = 0.0;
        train_task(s, 0, train, tc);
        // Move the MLP off its anchor so the penalty has a gradient.
        randomize(s.mlp.parameters(), rng, 0.4);
        for (auto& [name, fi] : s.fisher.fi) {
            for (auto& v : fi.data) v = std::abs(rng.normal()) + 0.1;
        }
        // Second task's parameters, as train_task would create them.
        s.bank.add_task(1, derive_seed(seed, 12));
        TaskHead head;
        head.w = random_param(rng, "head.t1.w", {bc.d_model, 2}, 0.5);
        head.b = random_param(rng, "head.t1.b", {2}, 0.5);
        s.heads.push_back(head);
        s.embeddings.push_back(make_task_embedding(1, model.hypernet, derive_seed(seed, 13)));
        randomize(s.bank.task_parameters(1), rng, 0.5);
        s.tasks_trained = 1;

        const std::size_t idx[] = {0, 1, 2, 3};
        const Tensor x = batch_images(train, idx);
        const auto labels = batch_labels(train, idx);
        std::vector<Parameter*> params = s.trainable_for(1);
        out.push_back(check("training_objective", [&](Tape& t) {
            return training_loss(t, s, 1, x, labels, 0.05).total;
        }, params));
    }
    return out;
}

}  // namespace linklearn
