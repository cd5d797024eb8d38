#include "linklearn/backbone.hpp"

#include <numeric>

#include "linklearn/errors.hpp"
#include "linklearn/ops.hpp"
#include "linklearn/rng.hpp"
#include "linklearn/taskdata.hpp"

namespace linklearn {
namespace {

constexpr double kInitStd = 0.02;

Parameter gaussian(std::string name, Shape shape, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = rng.normal(0.0, kInitStd);
    return Parameter{std::move(name), std::move(t), false};
}

Parameter constant(std::string name, Shape shape, double value) {
    return Parameter{std::move(name), Tensor::filled(std::move(shape), value), false};
}

template <typename Fn>
void for_each_param(BlockParams& b, Fn&& fn) {
    for (Parameter* p : {&b.norm_attn_gain, &b.norm_attn_bias, &b.wq, &b.bq, &b.wk, &b.bk, &b.wv, &b.bv, &b.wo,
                         &b.bo, &b.norm_post_gain, &b.norm_post_bias, &b.ff_in_w, &b.ff_in_b, &b.ff_out_w,
                         &b.ff_out_b}) {
        fn(p);
    }
}

Var linear(Tape& tape, Var x, const Parameter& w, const Parameter& b) {
    return ops::add_bias(ops::matmul(x, tape.param(w)), tape.param(b));
}

}  // namespace

void BackboneConfig::validate() const {
    if (patch == 0 || image_h % patch != 0 || image_w % patch != 0) {
        throw ConfigError("patch " + std::to_string(patch) + " must divide image " + std::to_string(image_h) + "x" +
                          std::to_string(image_w));
    }
    if (channels == 0) throw ConfigError("channels must be >= 1");
    if (n_heads == 0 || d_model % n_heads != 0) {
        throw ConfigError("d_model " + std::to_string(d_model) + " not divisible by n_heads " + std::to_string(n_heads));
    }
    if (layers == 0) throw ConfigError("backbone needs at least one layer");
    if (d_ff == 0) throw ConfigError("d_ff must be >= 1");
}

Backbone Backbone::init(const BackboneConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(derive_seed(seed, 0xBAC0));
    const std::size_t d = config.d_model;
    Backbone bb;
    bb.config = config;
    bb.patch_w = gaussian("backbone.patch.w", {config.patch_dim(), d}, rng);
    bb.patch_b = constant("backbone.patch.b", {d}, 0.0);
    bb.cls = gaussian("backbone.cls", {1, d}, rng);
    bb.pos = gaussian("backbone.pos", {config.tokens(), d}, rng);
    for (std::size_t k = 0; k < config.layers; ++k) {
        const std::string p = "backbone.block" + std::to_string(k) + ".";
        BlockParams b;
        b.norm_attn_gain = constant(p + "norm_attn.gain", {d}, 1.0);
        b.norm_attn_bias = constant(p + "norm_attn.bias", {d}, 0.0);
        b.wq = gaussian(p + "attn.wq", {d, d}, rng);
        b.bq = constant(p + "attn.bq", {d}, 0.0);
        b.wk = gaussian(p + "attn.wk", {d, d}, rng);
        b.bk = constant(p + "attn.bk", {d}, 0.0);
        b.wv = gaussian(p + "attn.wv", {d, d}, rng);
        b.bv = constant(p + "attn.bv", {d}, 0.0);
        b.wo = gaussian(p + "attn.wo", {d, d}, rng);
        b.bo = constant(p + "attn.bo", {d}, 0.0);
        b.norm_post_gain = constant(p + "norm_post.gain", {d}, 1.0);
        b.norm_post_bias = constant(p + "norm_post.bias", {d}, 0.0);
        b.ff_in_w = gaussian(p + "ffn.in.w", {d, config.d_ff}, rng);
        b.ff_in_b = constant(p + "ffn.in.b", {config.d_ff}, 0.0);
        b.ff_out_w = gaussian(p + "ffn.out.w", {config.d_ff, d}, rng);
        b.ff_out_b = constant(p + "ffn.out.b", {d}, 0.0);
        bb.blocks.push_back(std::move(b));
    }
    return bb;
}

std::vector<Parameter*> Backbone::parameters() {
    std::vector<Parameter*> out{&patch_w, &patch_b, &cls, &pos};
    for (auto& b : blocks) for_each_param(b, [&](Parameter* p) { out.push_back(p); });
    return out;
}

std::vector<const Parameter*> Backbone::parameters() const {
    auto mut = const_cast<Backbone*>(this)->parameters();
    return {mut.begin(), mut.end()};
}

void Backbone::freeze() {
    for (Parameter* p : parameters()) p->frozen = true;
}

bool Backbone::frozen() const {
    for (const Parameter* p : parameters()) {
        if (!p->frozen) return false;
    }
    return true;
}

AdapterHook zero_hook() {
    return [](Var h_bar) { return h_bar.tape->constant(Tensor::zeros(h_bar.shape())); };
}

std::size_t batch_size_of(const Tensor& images, const BackboneConfig& config) {
    const Shape single{config.image_h, config.image_w, config.channels};
    if (images.shape == single) return 1;
    if (images.rank() == 4 && Shape(images.shape.begin() + 1, images.shape.end()) == single) return images.shape[0];
    throw ConfigError("image shape " + shape_str(images.shape) + " does not match config " + shape_str(single));
}

Tensor extract_patches(const Tensor& images, const BackboneConfig& config) {
    const std::size_t batch = batch_size_of(images, config);
    const std::size_t ps = config.patch, c = config.channels, w = config.image_w;
    const std::size_t gh = config.image_h / ps, gw = config.image_w / ps;
    const std::size_t pd = config.patch_dim();
    const std::size_t img_px = config.image_h * w * c;
    Tensor out = Tensor::zeros({batch * gh * gw, pd});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t gi = 0; gi < gh; ++gi) {
            for (std::size_t gj = 0; gj < gw; ++gj) {
                double* dst = &out.data[((b * gh + gi) * gw + gj) * pd];
                for (std::size_t r = 0; r < ps; ++r) {
                    for (std::size_t col = 0; col < ps; ++col) {
                        for (std::size_t ch = 0; ch < c; ++ch) {
                            const std::size_t y = gi * ps + r, x = gj * ps + col;
                            dst[(r * ps + col) * c + ch] = images.data[b * img_px + (y * w + x) * c + ch];
                        }
                    }
                }
            }
        }
    }
    return out;
}

Var patch_embed(Tape& tape, const Backbone& bb, const Tensor& images) {
    const std::size_t batch = batch_size_of(images, bb.config);
    Var patches = tape.constant(extract_patches(images, bb.config));
    Var projected = linear(tape, patches, bb.patch_w, bb.patch_b);
    return ops::assemble_tokens(projected, tape.param(bb.cls), tape.param(bb.pos), batch);
}

BlockActivations block_forward(Tape& tape, const Backbone& bb, std::size_t layer, Var h_in, std::size_t batch,
                               const AdapterHook& hook) {
    if (layer >= bb.blocks.size()) {
        throw IndexError("layer " + std::to_string(layer) + " outside backbone of " + std::to_string(bb.blocks.size()));
    }
    const BlockParams& p = bb.blocks[layer];
    BlockActivations a;
    a.h_in = h_in;

    Var normed = ops::layernorm(h_in, tape.param(p.norm_attn_gain), tape.param(p.norm_attn_bias));
    Var q = linear(tape, normed, p.wq, p.bq);
    Var k = linear(tape, normed, p.wk, p.bk);
    Var v = linear(tape, normed, p.wv, p.bv);
    Var attended = ops::attention(q, k, v, batch, bb.config.n_heads);
    a.h_prime = ops::add(h_in, linear(tape, attended, p.wo, p.bo));

    a.h_bar = ops::layernorm(a.h_prime, tape.param(p.norm_post_gain), tape.param(p.norm_post_bias));
    a.h_tilde = hook(a.h_bar);
    if (a.h_tilde.tape != &tape || a.h_tilde.shape() != a.h_bar.shape()) {
        throw CompositionError("adapter hook at layer " + std::to_string(layer) + " returned " +
                               shape_str(a.h_tilde.shape()) + ", expected " + shape_str(a.h_bar.shape()));
    }
    a.h_hat = ops::add(a.h_bar, a.h_tilde);

    Var ff = ops::gelu(linear(tape, a.h_hat, p.ff_in_w, p.ff_in_b));
    // Residual from h_bar, not h_hat.
    a.h_out = ops::add(a.h_bar, linear(tape, ff, p.ff_out_w, p.ff_out_b));
    return a;
}

Var backbone_forward(Tape& tape, const Backbone& bb, const Tensor& images, std::span<const AdapterHook> hooks) {
    if (hooks.size() != bb.blocks.size()) {
        throw ConfigError(std::to_string(hooks.size()) + " adapter hooks for " + std::to_string(bb.blocks.size()) +
                          " layers");
    }
    const std::size_t batch = batch_size_of(images, bb.config);
    Var h = patch_embed(tape, bb, images);
    for (std::size_t k = 0; k < bb.blocks.size(); ++k) h = block_forward(tape, bb, k, h, batch, hooks[k]).h_out;
    return ops::select_rows(h, bb.config.tokens(), 0);
}

namespace {

double dataset_loss(const Backbone& bb, const Parameter& head_w, const Parameter& head_b, const Dataset& data,
                    std::size_t batch_size) {
    std::vector<AdapterHook> hooks(bb.blocks.size(), zero_hook());
    double total = 0.0;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        std::vector<std::size_t> idx(std::min(batch_size, data.size() - start));
        std::iota(idx.begin(), idx.end(), start);
        Tape tape;
        Var rep = backbone_forward(tape, bb, batch_images(data, idx), hooks);
        Var logits = linear(tape, rep, head_w, head_b);
        auto labels = batch_labels(data, idx);
        total += ops::softmax_cross_entropy(logits, labels).value().item() * static_cast<double>(idx.size());
    }
    return total / static_cast<double>(data.size());
}

}  // namespace

PretrainResult pretrain_backbone(const BackboneConfig& config, const Dataset& base, const PretrainOptions& options) {
    if (base.size() == 0) throw DataError("pretraining dataset is empty");
    base.validate();
    if (base.height != config.image_h || base.width != config.image_w || base.channels != config.channels) {
        throw ConfigError("pretraining images do not match backbone config");
    }
    if (options.batch_size == 0) throw ConfigError("batch size must be >= 1");

    PretrainResult result{Backbone::init(config, options.seed), {}};
    Backbone& bb = result.backbone;
    Rng head_rng(derive_seed(options.seed, 0x4EAD));
    Parameter head_w = gaussian("pretrain.head.w", {config.d_model, base.n_classes}, head_rng);
    Parameter head_b = constant("pretrain.head.b", {base.n_classes}, 0.0);

    std::vector<Parameter*> params = bb.parameters();
    params.push_back(&head_w);
    params.push_back(&head_b);

    std::vector<AdapterHook> hooks(config.layers, zero_hook());
    Rng shuffle_rng(derive_seed(options.seed, 0x5EED));
    std::vector<std::size_t> order(base.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    result.losses.push_back(dataset_loss(bb, head_w, head_b, base, options.batch_size));
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
            const std::size_t n = std::min(options.batch_size, order.size() - start);
            std::span<const std::size_t> idx(order.data() + start, n);
            Tape tape;
            Var rep = backbone_forward(tape, bb, batch_images(base, idx), hooks);
            Var logits = linear(tape, rep, head_w, head_b);
            auto labels = batch_labels(base, idx);
            Var loss = ops::softmax_cross_entropy(logits, labels);
            sgd_step(params, backward(tape, loss), options.lr);
        }
        result.losses.push_back(dataset_loss(bb, head_w, head_b, base, options.batch_size));
    }
    bb.freeze();
    return result;
}

}  // namespace linklearn
