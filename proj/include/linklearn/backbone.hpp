#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "linklearn/tensor.hpp"

namespace linklearn {

struct Dataset;

struct BackboneConfig {
    std::size_t image_h = 16;
    std::size_t image_w = 16;
    std::size_t channels = 1;
    std::size_t patch = 4;
    std::size_t d_model = 32;
    std::size_t n_heads = 4;
    std::size_t d_ff = 64;
    std::size_t layers = 4;

    void validate() const;
    std::size_t patches() const { return (image_h / patch) * (image_w / patch); }
    // Patches plus the classification token.
    std::size_t tokens() const { return patches() + 1; }
    std::size_t patch_dim() const { return patch * patch * channels; }
};

struct BlockParams {
    Parameter norm_attn_gain, norm_attn_bias;
    Parameter wq, bq, wk, bk, wv, bv, wo, bo;
    Parameter norm_post_gain, norm_post_bias;
    Parameter ff_in_w, ff_in_b, ff_out_w, ff_out_b;
};

// ViT-style encoder. Every parameter is frozen once pretraining finishes.
struct Backbone {
    BackboneConfig config;
    Parameter patch_w;  // [patch_dim x d_model]
    Parameter patch_b;  // [d_model]
    Parameter cls;      // [1 x d_model]
    Parameter pos;      // [tokens x d_model]
    std::vector<BlockParams> blocks;

    // Gaussian(0, 0.02) weights, zero biases, unit norm gains.
    static Backbone init(const BackboneConfig& config, std::uint64_t seed);

    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;
    void freeze();
    bool frozen() const;
};

// Values of one block, named after the quantities they hold:
//   h_prime = h_in + MHSA(Norm(h_in))
//   h_bar   = Norm(h_prime)
//   h_tilde = hook(h_bar)
//   h_hat   = h_bar + h_tilde
//   h_out   = h_bar + FFN(h_hat)
struct BlockActivations {
    Var h_in, h_prime, h_bar, h_tilde, h_hat, h_out;
};

// Maps the adapter input h_bar [rows x d_model] to the adapter output h_tilde
// at one layer.
using AdapterHook = std::function<Var(Var h_bar)>;

AdapterHook zero_hook();

// Images [batch x h x w x c] (or a single [h x w x c]) to non-overlapping
// flattened patches [batch * patches x patch_dim].
Tensor extract_patches(const Tensor& images, const BackboneConfig& config);
std::size_t batch_size_of(const Tensor& images, const BackboneConfig& config);

Var patch_embed(Tape& tape, const Backbone& backbone, const Tensor& images);
BlockActivations block_forward(Tape& tape, const Backbone& backbone, std::size_t layer, Var h_in, std::size_t batch,
                               const AdapterHook& hook);
// Classification-token representations [batch x d_model] after the last block.
Var backbone_forward(Tape& tape, const Backbone& backbone, const Tensor& images, std::span<const AdapterHook> hooks);

struct PretrainOptions {
    std::size_t epochs = 10;
    double lr = 0.05;
    std::size_t batch_size = 8;
    std::uint64_t seed = 0;
};

struct PretrainResult {
    Backbone backbone;
    // Mean training loss before any update, then after each epoch.
    std::vector<double> losses;
};

// Trains the backbone together with a throwaway linear head on a base task,
// then freezes it.
PretrainResult pretrain_backbone(const BackboneConfig& config, const Dataset& base, const PretrainOptions& options);

}  // namespace linklearn
