#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "linklearn/tensor.hpp"

namespace linklearn {

struct ComposeMode;
struct ContinualState;
struct Dataset;

// Per-task accuracies (fractions) of one seed.
//   during:            linked run, right after each task was trained
//   end[mode]:         after the whole sequence, one column per mode
//   standalone_during: the paired standalone run's during phase (when known)
struct AccuracyMatrix {
    std::size_t n_tasks = 0;
    std::vector<double> during;
    std::vector<std::string> modes;  // column order of end
    std::map<std::string, std::vector<double>> end;
    std::vector<double> standalone_during;

    const std::vector<double>& end_for(const std::string& mode) const;
    void add_end(const std::string& mode, std::vector<double> acc);
    void validate() const;
};

// Fraction of rows whose argmax equals the label.
double accuracy_from_logits(const Tensor& logits, std::span<const std::size_t> labels);
double eval_accuracy(const ContinualState& state, std::size_t t, const Dataset& test, const ComposeMode& mode);

double mean(std::span<const double> v);
// Population standard deviation.
double stddev(std::span<const double> v);

// (1/m) sum_i (acc_link_i - acc_a_i)
double knowledge_transfer(std::span<const double> acc_link, std::span<const double> acc_a);
// (1/m) sum_i (acc_end_i - acc_during_i)
double backward_transfer(std::span<const double> acc_end, std::span<const double> acc_during);

struct SeedRun {
    std::uint64_t seed = 0;
    AccuracyMatrix matrix;
};

struct Report {
    std::string config_json;  // echoed verbatim into summary.json
    std::vector<SeedRun> runs;
};

struct ModeSummary {
    std::string mode;
    std::size_t n_seeds = 0;
    std::vector<double> avg_acc, kt, bt;  // per seed
    double avg_acc_mean = 0, avg_acc_std = 0, kt_mean = 0, kt_std = 0, bt_mean = 0, bt_std = 0;
};

inline constexpr const char* kStandaloneMode = "standalone";
inline constexpr const char* kDuringMode = "linked";

// Per-seed and aggregate statistics for every mode. KT is measured against
// the standalone column; BT against the linked during phase, except for
// standalone itself, which is measured against its own during phase.
std::vector<ModeSummary> summarize(const Report& report);

// accmatrix.csv: task,phase,mode,seed,accuracy   (phase: during | end)
// summary.csv:   mode,n_seeds,avg_acc_mean,avg_acc_std,kt_mean,kt_std,bt_mean,bt_std  (percent, 2 decimals)
// summary.json:  full-precision statistics, per-seed values, config echo
void export_report(const Report& report, const std::filesystem::path& dir);
std::string accmatrix_csv(const Report& report);
std::string summary_csv(const std::vector<ModeSummary>& summary);
Report read_accmatrix_csv(const std::filesystem::path& path);

}  // namespace linklearn
