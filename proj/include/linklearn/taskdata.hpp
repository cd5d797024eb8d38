#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "linklearn/tensor.hpp"

namespace linklearn {

struct Dataset {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::size_t n_classes = 0;
    std::vector<float> images;        // [n x height x width x channels]
    std::vector<std::size_t> labels;  // [n]

    std::size_t size() const { return labels.size(); }
    std::size_t pixels() const { return height * width * channels; }
    std::span<const float> sample(std::size_t i) const { return {images.data() + i * pixels(), pixels()}; }
    void validate() const;
};

// Gathers samples into a float64 batch [b x h x w x c].
Tensor batch_images(const Dataset& data, std::span<const std::size_t> indices);
std::vector<std::size_t> batch_labels(const Dataset& data, std::span<const std::size_t> indices);
Tensor all_images(const Dataset& data);

// .clds, little-endian:
//   u32 magic 0x434C4453, u16 version 1, u32 n_samples, u16 height, u16 width,
//   u16 channels, u16 n_classes, f32 pixels [n x h x w x c], u16 labels [n]
inline constexpr std::uint32_t kCldsMagic = 0x434C4453;
inline constexpr std::uint16_t kCldsVersion = 1;
inline constexpr std::size_t kCldsHeaderBytes = 18;

void write_clds(const Dataset& data, const std::filesystem::path& path);
Dataset read_clds(const std::filesystem::path& path);

struct TaskData {
    std::size_t source_index = 0;     // position in the unpermuted split
    std::vector<std::size_t> classes;  // global class ids, ascending
    Dataset train, val, test;          // labels remapped to 0..classes.size()-1
};

struct TaskSplit {
    std::vector<TaskData> tasks;
};

// Stratified per-class split fractions.
inline constexpr std::size_t kTrainPercent = 70;
inline constexpr std::size_t kValPercent = 10;

// Task i takes classes [first_class + i * per_task, first_class + (i + 1) * per_task).
TaskSplit split_by_class(const Dataset& data, std::size_t n_tasks, std::size_t classes_per_task,
                         std::size_t first_class = 0);

// Parses "41230" (one digit per task) or "4,1,2,3,0".
std::vector<std::size_t> parse_task_order(const std::string& text);
// Result task i is input task permutation[i].
TaskSplit apply_task_order(const TaskSplit& split, std::span<const std::size_t> permutation);
std::vector<std::size_t> invert_permutation(std::span<const std::size_t> permutation);

struct SyntheticSpec {
    std::size_t n_classes = 14;
    std::size_t train_per_class = 200;
    std::size_t test_per_class = 50;
    std::size_t image_h = 16;
    std::size_t image_w = 16;
    std::size_t channels = 1;
    std::size_t basis_rank = 6;
    double prototype_scale = 1.0;
    double noise_sigma = 0.25;
    std::uint64_t seed = 1234;

    void validate() const;
};

// Class prototypes are seeded combinations of a shared low-rank basis
// B [rank x pixels] (entries N(0, 1 / pixels), so rows have roughly unit
// norm); weights are N(0, prototype_scale^2). Each sample adds N(0, sigma^2)
// pixel noise. Samples are stored class-major.
struct SyntheticData {
    Dataset data;
    Tensor basis;       // [rank x pixels]
    Tensor prototypes;  // [n_classes x pixels]
};

SyntheticData gen_synthetic_full(const SyntheticSpec& spec);
Dataset gen_synthetic(const SyntheticSpec& spec);

// The continual benchmark: the first continual_classes classes are split into
// tasks, the following base_classes form the pretraining task.
struct BenchmarkSpec {
    SyntheticSpec synthetic;
    std::size_t n_tasks = 5;
    std::size_t classes_per_task = 2;
    std::size_t base_classes = 4;

    std::size_t continual_classes() const { return n_tasks * classes_per_task; }
    void validate() const;
};

struct Benchmark {
    TaskSplit split;
    Dataset base;
};

Benchmark make_benchmark(const BenchmarkSpec& spec);

// Keeps only the samples whose label is in [first, first + count), remapped to 0..count-1.
Dataset select_classes(const Dataset& data, std::size_t first, std::size_t count);

std::string synthetic_manifest_json(const BenchmarkSpec& spec);

}  // namespace linklearn
