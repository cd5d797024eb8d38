#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "linklearn/adapter.hpp"
#include "linklearn/backbone.hpp"
#include "linklearn/compose.hpp"
#include "linklearn/ewc.hpp"
#include "linklearn/hypernet.hpp"
#include "linklearn/metrics.hpp"
#include "linklearn/taskdata.hpp"

namespace linklearn {

struct ModelConfig {
    BackboneConfig backbone;
    std::size_t bottleneck = 8;
    Activation adapter_activation = Activation::relu;
    HypernetConfig hypernet;

    AdapterConfig adapter_config() const {
        return {backbone.d_model, bottleneck, backbone.layers, adapter_activation};
    }
    void validate() const;
};

struct TrainConfig {
    double lr = 0.1;
    std::size_t epochs = 3;
    std::size_t batch_size = 32;
    double lambda = 100.0;
    double gamma = 1.0;
    std::uint64_t seed = 0;
    std::size_t fisher_samples = 0;  // 0: the whole training set

    void validate() const;
};

// standalone: each task trains only its own adapter and head.
// linked: adapters are composed through MLP-generated attention weights.
enum class Regime { standalone, linked };

std::string to_string(Regime r);
Regime parse_regime(const std::string& s);

struct TaskHead {
    Parameter w;  // [d_model x classes]
    Parameter b;  // [classes]
};

struct ContinualState {
    ModelConfig model;
    Regime regime = Regime::linked;
    std::uint64_t seed = 0;
    Backbone backbone;
    AdapterBank bank;
    std::vector<TaskHead> heads;
    std::vector<TaskEmbedding> embeddings;
    WeightMLP mlp;
    FisherState fisher;
    std::size_t tasks_trained = 0;

    // backbone must already be frozen.
    static ContinualState create(const ModelConfig& model, Backbone backbone, Regime regime, std::uint64_t seed);

    // Parameters train_task(t) may update.
    std::vector<Parameter*> trainable_for(std::size_t t);
    std::vector<const Parameter*> all_parameters() const;
};

struct StepInfo {
    std::size_t task = 0;
    std::size_t step = 0;
    double task_loss = 0.0;
    double penalty = 0.0;
    const GradMap* grads = nullptr;
};

using StepObserver = std::function<void(const StepInfo&)>;

struct TrainStats {
    std::vector<double> task_losses;  // one per step
};

struct LossTerms {
    Var task;     // mean cross-entropy on task-local labels
    Var penalty;  // lambda-weighted MLP regularizer (constant 0 when standalone or before consolidation)
    Var total;
};

// The objective minimized for task t on one batch.
LossTerms training_loss(Tape& tape, const ContinualState& state, std::size_t t, const Tensor& images,
                        std::span<const std::size_t> labels, double lambda);

// Trains task t (which must be the next task) and then stores and freezes its
// adapters, embedding and head; in the linked regime also folds the task's
// Fisher importances into the MLP regularizer and re-anchors it.
TrainStats train_task(ContinualState& state, std::size_t t, const Dataset& train, const TrainConfig& config,
                      const StepObserver& observer = {});

// Task-local logits [n x classes_t]; never mutates the state.
Tensor predict(const ContinualState& state, const Tensor& images, std::size_t t, const ComposeMode& mode);

// Bidirectional composition with caller-supplied attention weights [1 x L]
// keyed by (earlier task, later task).
using ForcedBetas = std::map<std::pair<std::size_t, std::size_t>, Tensor>;
Tensor predict_with_betas(const ContinualState& state, const Tensor& images, std::size_t t, const ForcedBetas& betas);

// Adapter-free backbone plus head t.
Tensor predict_backbone_only(const ContinualState& state, const Tensor& images, std::size_t t);

// The modes evaluated at the end of a sequence for a regime.
std::vector<ComposeMode> default_end_modes(Regime regime, const std::vector<double>& constant_ks = {});

// Trains every task in order. During: task t's test accuracy right after its
// training (forward composition over tasks 0..t, or standalone). End: every
// task's accuracy in each mode once the whole sequence is trained.
AccuracyMatrix run_sequence(ContinualState& state, const TaskSplit& tasks, const TrainConfig& config,
                            const std::vector<ComposeMode>& end_modes);

// End-of-sequence accuracies of an already trained state.
std::vector<double> evaluate_mode(const ContinualState& state, const TaskSplit& tasks, const ComposeMode& mode);

// Checkpoints: manifest.json (tensor table + model config), tensors.bin
// (float32 little-endian, row-major, manifest order) and config.json (echo).
inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const ContinualState& state, const std::filesystem::path& dir, const std::string& config_echo = "");
ContinualState load_checkpoint(const std::filesystem::path& dir);

// Backbone-only checkpoint in the same format.
void save_backbone(const Backbone& backbone, const std::filesystem::path& dir, const std::string& config_echo = "");
Backbone load_backbone(const std::filesystem::path& dir);

}  // namespace linklearn
