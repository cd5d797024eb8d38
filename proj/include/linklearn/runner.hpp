#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "linklearn/config.hpp"
#include "linklearn/metrics.hpp"

namespace linklearn {

using Log = std::function<void(const std::string&)>;

// The configured benchmark: read from data.path when set, generated otherwise.
Benchmark load_benchmark(const ExperimentConfig& config);

// Loads pretrain.checkpoint when set; otherwise pretrains on the benchmark's
// base classes. When save_dir is non-empty a freshly trained backbone is
// saved there.
Backbone obtain_backbone(const ExperimentConfig& config, const Benchmark& bench,
                         const std::filesystem::path& save_dir = {}, const Log& log = {});

// One seed: a standalone sequence and a linked sequence with identical seeds,
// merged into one matrix (standalone column first). With a non-empty dir the
// seed's config echo, data manifest, both checkpoints and accmatrix are written.
SeedRun run_seed(const ExperimentConfig& config, const Backbone& backbone, const TaskSplit& tasks, std::uint64_t seed,
                 const std::filesystem::path& dir = {}, const Log& log = {});

// One (order, lambda) combination across all seeds.
struct RunGroup {
    std::string name;  // directory name
    std::string order;
    double lambda = 0.0;
    Report report;
    std::vector<ModeSummary> summary;
};

struct RunResult {
    std::filesystem::path root;
    std::vector<RunGroup> groups;
};

// The `run` command. Layout under config.out:
//   config.json, data_manifest.json, backbone/        shared inputs
//   <group>/seed-<s>/                                 per seed
//   <group>/accmatrix.csv, summary.csv, summary.json  per group
//   orders.csv                                        KT per order and lambda
RunResult run_experiment(const ExperimentConfig& config, const Log& log = {});

// `gen-data`: <out>/synthetic.clds plus synthetic.manifest.json.
void generate_data(const ExperimentConfig& config, const std::filesystem::path& out);

// `report`: every accmatrix.csv found in the given seed directories (a
// directory holding seed-* subdirectories is expanded) merged into one report.
Report collect_report(const std::vector<std::filesystem::path>& dirs);

// KT (against standalone), accuracy and BT means per group and mode.
std::string orders_csv(const std::vector<RunGroup>& groups);

}  // namespace linklearn
