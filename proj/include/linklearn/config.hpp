#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "linklearn/backbone.hpp"
#include "linklearn/taskdata.hpp"
#include "linklearn/trainer.hpp"

namespace linklearn {

// Everything a run needs. Configuration files are JSON objects with the
// sections data, model, pretrain, train and run; see README for the keys.
struct ExperimentConfig {
    BenchmarkSpec data;
    std::string data_path;  // optional .clds holding every class; generated when empty
    ModelConfig model;
    PretrainOptions pretrain;
    std::string backbone_path;  // optional pretrained backbone checkpoint
    TrainConfig train;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    std::vector<std::string> orders{"identity"};
    std::vector<double> constant_k;
    std::vector<double> lambda_sweep;
    std::string out;

    // The order as a permutation of task indices ("identity" included).
    std::vector<std::size_t> permutation(const std::string& order) const;
};

inline constexpr const char* kOutEnv = "LINKLEARN_OUT";
inline constexpr const char* kDefaultOut = "runs";

// Full configuration as JSON, every key present.
std::string config_echo(const ExperimentConfig& config);

// One "section.key" = value override. The value is parsed as JSON, falling
// back to a plain string.
struct Override {
    std::string key;
    std::string value;
};

// defaults <- file (if given; an empty file means defaults) <- overrides.
// run.out falls back to $LINKLEARN_OUT, then "runs", when nothing sets it.
// Unknown keys, type errors and conflicting values raise ConfigError naming the key.
ExperimentConfig load_config(const std::filesystem::path& file, const std::vector<Override>& overrides = {});
ExperimentConfig parse_config(const std::string& text, const std::vector<Override>& overrides = {});

}  // namespace linklearn
