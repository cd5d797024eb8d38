#include "linklearn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "linklearn/errors.hpp"
#include "linklearn/trainer.hpp"

namespace linklearn {

const std::vector<double>& AccuracyMatrix::end_for(const std::string& mode) const {
    auto it = end.find(mode);
    if (it == end.end()) throw StateError("accuracy matrix has no '" + mode + "' column");
    return it->second;
}

void AccuracyMatrix::add_end(const std::string& mode, std::vector<double> acc) {
    if (!end.count(mode)) modes.push_back(mode);
    end[mode] = std::move(acc);
}

void AccuracyMatrix::validate() const {
    auto check = [&](const std::vector<double>& v, const std::string& what) {
        if (v.size() != n_tasks) {
            throw DimensionError(what + " has " + std::to_string(v.size()) + " entries for " + std::to_string(n_tasks) +
                                 " tasks");
        }
        for (double a : v) {
            if (!(a >= 0.0 && a <= 1.0)) throw DataError(what + " holds accuracy outside [0, 1]");
        }
    };
    check(during, "during");
    for (const auto& m : modes) check(end_for(m), "end[" + m + "]");
    if (!standalone_during.empty()) check(standalone_during, "standalone during");
}

double accuracy_from_logits(const Tensor& logits, std::span<const std::size_t> labels) {
    if (labels.empty()) throw DataError("accuracy over an empty set");
    if (logits.rank() != 2 || logits.shape[0] != labels.size()) {
        throw DimensionError("logits " + shape_str(logits.shape) + " for " + std::to_string(labels.size()) + " labels");
    }
    const std::size_t c = logits.shape[1];
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double* row = &logits.data[i * c];
        const auto best = static_cast<std::size_t>(std::max_element(row, row + c) - row);
        if (best == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double eval_accuracy(const ContinualState& state, std::size_t t, const Dataset& test, const ComposeMode& mode) {
    if (test.size() == 0) throw DataError("empty test set for task " + std::to_string(t));
    return accuracy_from_logits(predict(state, all_images(test), t, mode), test.labels);
}

double mean(std::span<const double> v) {
    if (v.empty()) throw DataError("mean of an empty list");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double stddev(std::span<const double> v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

namespace {

std::vector<double> gaps(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DimensionError("accuracy lists differ in length: " + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()));
    }
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    return d;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_percent(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
    return buf;
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw StorageError("cannot open " + path.string() + " for writing");
    f << contents;
    if (!f) throw StorageError("write failed for " + path.string());
}

}  // namespace

double knowledge_transfer(std::span<const double> acc_link, std::span<const double> acc_a) {
    return mean(gaps(acc_link, acc_a));
}

double backward_transfer(std::span<const double> acc_end, std::span<const double> acc_during) {
    return mean(gaps(acc_end, acc_during));
}

std::vector<ModeSummary> summarize(const Report& report) {
    if (report.runs.empty()) throw DataError("report has no seed runs");
    const AccuracyMatrix& first = report.runs.front().matrix;
    std::vector<ModeSummary> out;
    for (const auto& mode : first.modes) {
        ModeSummary s;
        s.mode = mode;
        for (const auto& run : report.runs) {
            const AccuracyMatrix& m = run.matrix;
            const auto& acc = m.end_for(mode);
            s.avg_acc.push_back(mean(acc));
            s.kt.push_back(m.end.count(kStandaloneMode) ? knowledge_transfer(acc, m.end_for(kStandaloneMode)) : 0.0);
            if (mode == kStandaloneMode) {
                s.bt.push_back(m.standalone_during.empty() ? 0.0 : backward_transfer(acc, m.standalone_during));
            } else {
                s.bt.push_back(backward_transfer(acc, m.during));
            }
        }
        s.n_seeds = report.runs.size();
        s.avg_acc_mean = mean(s.avg_acc);
        s.avg_acc_std = stddev(s.avg_acc);
        s.kt_mean = mean(s.kt);
        s.kt_std = stddev(s.kt);
        s.bt_mean = mean(s.bt);
        s.bt_std = stddev(s.bt);
        out.push_back(std::move(s));
    }
    return out;
}

std::string accmatrix_csv(const Report& report) {
    std::ostringstream os;
    os << "task,phase,mode,seed,accuracy\n";
    for (const auto& run : report.runs) {
        const AccuracyMatrix& m = run.matrix;
        m.validate();
        for (std::size_t i = 0; i < m.n_tasks; ++i) {
            os << i << ",during," << kDuringMode << ',' << run.seed << ',' << fmt_double(m.during[i]) << '\n';
        }
        for (const auto& mode : m.modes) {
            const auto& acc = m.end_for(mode);
            for (std::size_t i = 0; i < m.n_tasks; ++i) {
                os << i << ",end," << mode << ',' << run.seed << ',' << fmt_double(acc[i]) << '\n';
            }
        }
    }
    return os.str();
}

std::string summary_csv(const std::vector<ModeSummary>& summary) {
    std::ostringstream os;
    os << "mode,n_seeds,avg_acc_mean,avg_acc_std,kt_mean,kt_std,bt_mean,bt_std\n";
    for (const auto& s : summary) {
        os << s.mode << ',' << s.n_seeds << ',' << fmt_percent(s.avg_acc_mean) << ',' << fmt_percent(s.avg_acc_std)
           << ',' << fmt_percent(s.kt_mean) << ',' << fmt_percent(s.kt_std) << ',' << fmt_percent(s.bt_mean) << ','
           << fmt_percent(s.bt_std) << '\n';
    }
    return os.str();
}

void export_report(const Report& report, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw StorageError("cannot create " + dir.string() + ": " + ec.message());
    const auto summary = summarize(report);
    write_file(dir / "accmatrix.csv", accmatrix_csv(report));
    write_file(dir / "summary.csv", summary_csv(summary));

    nlohmann::ordered_json j;
    j["seeds"] = nlohmann::json::array();
    for (const auto& run : report.runs) j["seeds"].push_back(run.seed);
    j["modes"] = nlohmann::json::array();
    for (const auto& s : summary) {
        nlohmann::ordered_json m;
        m["mode"] = s.mode;
        m["n_seeds"] = s.n_seeds;
        m["avg_acc"] = {{"mean", s.avg_acc_mean}, {"std", s.avg_acc_std}, {"per_seed", s.avg_acc}};
        m["kt"] = {{"mean", s.kt_mean}, {"std", s.kt_std}, {"per_seed", s.kt}};
        m["bt"] = {{"mean", s.bt_mean}, {"std", s.bt_std}, {"per_seed", s.bt}};
        j["modes"].push_back(std::move(m));
    }
    if (!report.config_json.empty()) {
        j["config"] = nlohmann::ordered_json::parse(report.config_json, nullptr, false);
    }
    write_file(dir / "summary.json", j.dump(2) + "\n");
}

Report read_accmatrix_csv(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw StorageError("cannot open " + path.string());
    std::string line;
    if (!std::getline(f, line) || line != "task,phase,mode,seed,accuracy") {
        throw FormatError(path.string() + ": missing accmatrix header");
    }
    Report report;
    std::size_t line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cols.push_back(c);
        if (cols.size() != 5) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected 5 columns");
        std::size_t task = 0;
        std::uint64_t seed = 0;
        double acc = 0.0;
        try {
            task = std::stoul(cols[0]);
            seed = std::stoull(cols[3]);
            acc = std::stod(cols[4]);
        } catch (const std::exception&) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": malformed number");
        }
        auto it = std::find_if(report.runs.begin(), report.runs.end(), [&](const SeedRun& r) { return r.seed == seed; });
        if (it == report.runs.end()) {
            report.runs.push_back({seed, {}});
            it = report.runs.end() - 1;
        }
        AccuracyMatrix& m = it->matrix;
        std::vector<double>* column = nullptr;
        if (cols[1] == "during") {
            column = &m.during;
        } else if (cols[1] == "end") {
            if (!m.end.count(cols[2])) m.add_end(cols[2], {});
            column = &m.end[cols[2]];
        } else {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": unknown phase '" + cols[1] + "'");
        }
        if (column->size() <= task) column->resize(task + 1, 0.0);
        (*column)[task] = acc;
        m.n_tasks = std::max(m.n_tasks, task + 1);
    }
    for (auto& run : report.runs) run.matrix.validate();
    return report;
}

}  // namespace linklearn
