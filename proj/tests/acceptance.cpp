// One PASS/FAIL line per acceptance criterion; exit status 1 when any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "linklearn/adapter.hpp"
#include "linklearn/config.hpp"
#include "linklearn/gradcheck_suite.hpp"
#include "linklearn/runner.hpp"
#include "linklearn/trainer.hpp"

using namespace linklearn;
namespace fs = std::filesystem;

#ifndef LINKLEARN_CLI
#define LINKLEARN_CLI "linklearn"
#endif

namespace {

int failures = 0;

void verdict(int id, bool ok, const std::string& title, const std::string& detail) {
    std::printf("%s %d %s: %s\n", ok ? "PASS" : "FAIL", id, title.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

template <typename F>
void criterion(std::initializer_list<int> ids, const std::string& title, F&& body) {
    try {
        body();
    } catch (const std::exception& e) {
        for (int id : ids) verdict(id, false, title, std::string("raised ") + e.what());
    }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("linklearn_accept_" + name);
    fs::remove_all(p);
    return p;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) return INFINITY;
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

// L=2, d_model=8, three tasks of two classes each.
const char* kTinyThree = R"({
  "data": {"n_tasks": 3, "classes_per_task": 2, "base_classes": 2, "train_per_class": 30,
           "test_per_class": 10, "image_size": 8},
  "model": {"patch": 4, "d_model": 8, "n_heads": 2, "d_ff": 16, "layers": 2, "bottleneck": 3,
            "embed_dim": 4, "mlp_hidden": [6, 5]},
  "pretrain": {"epochs": 3},
  "train": {"epochs": 2, "batch_size": 8}
})";

// Five tasks so that the order 41230 applies.
const char* kTinyFive = R"({
  "data": {"n_tasks": 5, "classes_per_task": 2, "base_classes": 2, "train_per_class": 20,
           "test_per_class": 6, "image_size": 8},
  "model": {"patch": 4, "d_model": 8, "n_heads": 2, "d_ff": 16, "layers": 2, "bottleneck": 3,
            "embed_dim": 4, "mlp_hidden": [6, 5]},
  "pretrain": {"epochs": 10},
  "train": {"epochs": 10, "batch_size": 8},
  "run": {"seeds": [0, 1]}
})";

struct Tiny {
    ExperimentConfig config;
    Benchmark bench;
    Backbone backbone;
};

Tiny make_tiny(const char* text, const std::vector<Override>& overrides = {}) {
    Tiny t;
    t.config = parse_config(text, overrides);
    t.bench = load_benchmark(t.config);
    t.backbone = obtain_backbone(t.config, t.bench);
    return t;
}

ContinualState train_all(const Tiny& t, Regime regime, const TrainConfig& tc, std::uint64_t seed = 0) {
    ContinualState s = ContinualState::create(t.config.model, t.backbone, regime, seed);
    for (std::size_t i = 0; i < t.bench.split.tasks.size(); ++i) train_task(s, i, t.bench.split.tasks[i].train, tc);
    return s;
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string("\"") + LINKLEARN_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    return std::system(cmd.c_str());
}

void gradient_suite() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto cases = run_gradcheck_suite();
    const double secs = seconds_since(t0);
    double worst = 0.0;
    std::string worst_name;
    std::size_t checked = 0;
    for (const auto& c : cases) {
        checked += c.checked;
        if (c.max_rel_error >= worst) {
            worst = c.max_rel_error;
            worst_name = c.name;
        }
    }
    const bool ok = worst <= kGradCheckTolerance && secs < 60.0 && !cases.empty();
    verdict(1, ok, "gradient suite",
            std::to_string(cases.size()) + " cases, " + std::to_string(checked) + " entries, max rel error " +
                fmt("%.2e", worst) + " (" + worst_name + "), " + fmt("%.2f", secs) + " s");
}

void standalone_equivalence() {
    const Tiny t = make_tiny(kTinyThree, {{"model.adapter_activation", "identity"}});
    const ContinualState s = train_all(t, Regime::linked, t.config.train);
    const std::size_t m = t.bench.split.tasks.size(), L = s.model.backbone.layers;
    double worst = 0.0;
    std::size_t inputs = 0;
    for (std::size_t task = 0; task < m; ++task) {
        ForcedBetas betas;
        for (std::size_t p = 0; p <= task; ++p) betas[{p, task}] = Tensor::filled({1, L}, p == task ? 1.0 : 0.0);
        for (std::size_t q = task + 1; q < m; ++q) betas[{task, q}] = Tensor::zeros({1, L});
        const Tensor x = all_images(t.bench.split.tasks[task].test);
        inputs += x.shape[0];
        worst = std::max(worst, max_abs_diff(predict_with_betas(s, x, task, betas),
                                             predict(s, x, task, ComposeMode::standalone())));
    }
    verdict(2, worst <= 1e-10, "forced-weight bidirectional equals standalone",
            "max |logit diff| " + fmt("%.2e", worst) + " over " + std::to_string(inputs) + " test inputs, 3 tasks");
}

void last_task_agreement() {
    const Tiny t = make_tiny(kTinyThree);
    const ContinualState s = train_all(t, Regime::linked, t.config.train);
    const std::size_t last = t.bench.split.tasks.size() - 1;
    double worst = 0.0;
    std::size_t inputs = 0;
    for (const auto* part : {&t.bench.split.tasks[last].train, &t.bench.split.tasks[last].test}) {
        const Tensor x = all_images(*part);
        inputs += x.shape[0];
        worst = std::max(worst, max_abs_diff(predict(s, x, last, ComposeMode::forward()),
                                             predict(s, x, last, ComposeMode::bidirectional())));
    }
    verdict(4, worst <= 1e-12, "last task forward equals bidirectional",
            "max |logit diff| " + fmt("%.2e", worst) + " over " + std::to_string(inputs) + " inputs");
}

void ewc_behavior() {
    const Tiny t = make_tiny(kTinyThree);
    // Penalty at the anchor.
    ContinualState s = ContinualState::create(t.config.model, t.backbone, Regime::linked, 0);
    train_task(s, 0, t.bench.split.tasks[0].train, t.config.train);
    Tape tape;
    const double at_anchor = ewc_penalty(tape, bind(tape, s.mlp), s.fisher, 1e6).value().item();

    // Drift of the MLP from its post-task-1 anchor after the second task.
    auto drift = [&](double lambda) {
        TrainConfig tc = t.config.train;
        tc.lambda = lambda;
        ContinualState st = ContinualState::create(t.config.model, t.backbone, Regime::linked, 0);
        train_task(st, 0, t.bench.split.tasks[0].train, tc);
        const TensorMap anchor = st.fisher.anchor;
        train_task(st, 1, t.bench.split.tasks[1].train, tc);
        double sq = 0.0;
        for (const Parameter* p : st.mlp.parameters()) {
            const Tensor& a = anchor.at(p->name);
            for (std::size_t j = 0; j < a.numel(); ++j) sq += std::pow(p->value.data[j] - a.data[j], 2);
        }
        return std::sqrt(sq);
    };
    const double free = drift(0.0), held = drift(1e6);
    verdict(5, at_anchor == 0.0 && held < free, "regularizer behavior",
            "penalty at anchor " + fmt("%g", at_anchor) + "; MLP drift after task 2: lambda=0 " + fmt("%.15e", free) +
                ", lambda=1e6 " + fmt("%.15e", held));
}

// Criteria 3 and 6 share the default benchmark run.
void default_benchmark() {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentConfig c = parse_config("", {{"run.out", scratch("default").string()}});
    const RunResult r = run_experiment(c, [](const std::string& line) { std::printf("  .. %s\n", line.c_str()); });
    const double secs = seconds_since(t0);
    const RunGroup& g = r.groups.at(0);

    bool exact = true;
    for (const auto& run : g.report.runs) {
        exact = exact && run.matrix.end_for(kStandaloneMode) == run.matrix.standalone_during;
    }
    double standalone_bt = 0.0, bidir_bt = 0.0, fwd_kt_mean = 0.0;
    for (const auto& s : g.summary) {
        if (s.mode == kStandaloneMode) standalone_bt = s.bt_mean;
        if (s.mode == "bidirectional") bidir_bt = s.bt_mean;
        if (s.mode == "forward") fwd_kt_mean = s.kt_mean;
    }
    verdict(3, exact && standalone_bt == 0.0, "standalone never forgets",
            std::string("end == during bitwise for all tasks and seeds: ") + (exact ? "yes" : "no") +
                "; standalone BT " + fmt("%g", standalone_bt));

    int kt_ok = 0, order_ok = 0;
    std::string per_seed;
    for (const auto& run : g.report.runs) {
        const auto& m = run.matrix;
        const double kt = knowledge_transfer(m.end_for("forward"), m.end_for(kStandaloneMode));
        const double fwd = mean(m.end_for("forward")), bi = mean(m.end_for("bidirectional"));
        kt_ok += kt >= 0.0;
        order_ok += bi >= fwd;
        per_seed += " seed " + std::to_string(run.seed) + ": KT " + fmt("%+.2f", 100 * kt) + "% fwd " +
                    fmt("%.2f", 100 * fwd) + "% bi " + fmt("%.2f", 100 * bi) + "%;";
    }
    const bool ok = kt_ok >= 4 && order_ok >= 3 && bidir_bt >= standalone_bt && secs < 600.0;
    verdict(6, ok, "desk-scale ordering on synth-10/5",
            "(a) KT>=0 in " + std::to_string(kt_ok) + "/5 seeds, mean " + fmt("%+.4f", 100 * fwd_kt_mean) +
                "%; (b) bidirectional>=forward in " + std::to_string(order_ok) + "/5; (c) BT bidirectional " +
                fmt("%+.4f", 100 * bidir_bt) + "% vs standalone " + fmt("%+.4f", 100 * standalone_bt) + "%; " +
                fmt("%.0f", secs) + " s;" + per_seed);
    fs::remove_all(r.root);
}

void constant_ablation() {
    const fs::path dir = scratch("constant");
    fs::create_directories(dir);
    std::ofstream(dir / "tiny.json") << kTinyFive;
    const int rc = run_cli("run -c \"" + (dir / "tiny.json").string() + "\" --seeds 0 --constant-k 1 -o \"" +
                               (dir / "out").string() + "\"",
                           dir / "log.txt");
    bool ok = rc == 0;
    std::string detail = "exit " + std::to_string(rc);
    if (ok) {
        const Report rep = read_accmatrix_csv(dir / "out/order-identity/accmatrix.csv");
        const auto& m = rep.runs.at(0).matrix;
        for (const char* mode : {"forward", "bidirectional", "forward-k1", "bidirectional-k1"}) {
            ok = ok && m.end.count(mode) && m.end_for(mode).size() == 5;
            if (m.end.count(mode)) detail += std::string("; ") + mode + " " + fmt("%.2f", 100 * mean(m.end_for(mode))) + "%";
        }
    }
    verdict(7, ok, "constant-weight ablation", detail);
    fs::remove_all(dir);
}

void order_harness() {
    const fs::path dir = scratch("orders");
    fs::create_directories(dir);
    std::ofstream(dir / "tiny.json") << kTinyFive;
    const int rc = run_cli("run -c \"" + (dir / "tiny.json").string() + "\" --order identity --order 41230 -o \"" +
                               (dir / "out").string() + "\"",
                           dir / "log.txt");
    bool ok = rc == 0;
    std::string detail = "exit " + std::to_string(rc);
    if (ok) {
        const Report a = read_accmatrix_csv(dir / "out/order-identity/accmatrix.csv");
        const Report b = read_accmatrix_csv(dir / "out/order-41230/accmatrix.csv");
        ok = a.runs.size() == b.runs.size();
        for (std::size_t i = 0; ok && i < a.runs.size(); ++i) {
            ok = a.runs[i].matrix.n_tasks == b.runs[i].matrix.n_tasks && a.runs[i].matrix.modes == b.runs[i].matrix.modes;
        }
        const std::string orders = slurp(dir / "out/orders.csv");
        std::istringstream lines(orders);
        std::string line;
        while (std::getline(lines, line)) {
            if (line.find(",forward,") != std::string::npos) {
                // group,order,lambda,mode,n_seeds,avg_acc_mean,kt_mean,kt_std,bt_mean
                std::vector<std::string> cols;
                std::stringstream ss(line);
                for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
                detail += "; order " + cols.at(1) + " forward KT " + cols.at(6) + "%";
            }
        }
        ok = ok && orders.find("order-41230") != std::string::npos;
        detail += ok ? "; matrices share shape" : "; shape mismatch";
    }
    verdict(8, ok, "task-order harness", detail);
    fs::remove_all(dir);
}

void parameter_accounting() {
    const std::size_t n = added_param_count(768, 96, 12).adapters;
    const double share = 100.0 * static_cast<double>(n) / 86e6;
    verdict(9, std::abs(share - 2.0) <= 0.5, "adapter parameter growth",
            std::to_string(n) + " adapter parameters = " + fmt("%.3f", share) + "% of 86M");
}

void reproducibility() {
    const ExperimentConfig base = parse_config(kTinyFive);
    ExperimentConfig a = base, b = base;
    a.out = scratch("repro_a").string();
    b.out = scratch("repro_b").string();
    const RunResult ra = run_experiment(a);
    run_experiment(b);
    const std::string csv_a = slurp(fs::path(a.out) / "order-identity/accmatrix.csv");
    const bool identical = !csv_a.empty() && csv_a == slurp(fs::path(b.out) / "order-identity/accmatrix.csv");

    // Re-evaluate every end column of every seed from the saved checkpoints.
    const Benchmark bench = load_benchmark(base);
    bool reloaded = true;
    std::size_t cells = 0;
    for (const auto& run : ra.groups.at(0).report.runs) {
        const fs::path seed_dir = fs::path(a.out) / "order-identity" / ("seed-" + std::to_string(run.seed));
        const ContinualState standalone = load_checkpoint(seed_dir / "checkpoint-standalone");
        const ContinualState linked = load_checkpoint(seed_dir / "checkpoint-linked");
        const Report saved = read_accmatrix_csv(seed_dir / "accmatrix.csv");
        const AccuracyMatrix& m = saved.runs.at(0).matrix;
        for (const auto& mode : m.modes) {
            const ContinualState& s = mode == kStandaloneMode ? standalone : linked;
            const auto acc = evaluate_mode(s, bench.split, ComposeMode::parse(mode));
            reloaded = reloaded && acc == m.end_for(mode);
            cells += acc.size();
        }
    }
    verdict(10, identical && reloaded, "reproducibility",
            std::string("accmatrix.csv byte-identical across two runs: ") + (identical ? "yes" : "no") +
                "; " + std::to_string(cells) + " end accuracies re-evaluated from checkpoints: " +
                (reloaded ? "all equal" : "MISMATCH"));
    fs::remove_all(a.out);
    fs::remove_all(b.out);
}

}  // namespace

int main() {
    criterion({1}, "gradient suite", gradient_suite);
    criterion({2}, "forced-weight bidirectional equals standalone", standalone_equivalence);
    criterion({4}, "last task forward equals bidirectional", last_task_agreement);
    criterion({5}, "regularizer behavior", ewc_behavior);
    criterion({3, 6}, "standalone never forgets / desk-scale ordering", default_benchmark);
    criterion({7}, "constant-weight ablation", constant_ablation);
    criterion({8}, "task-order harness", order_harness);
    criterion({9}, "adapter parameter growth", parameter_accounting);
    criterion({10}, "reproducibility", reproducibility);
    std::printf("%s: %d criteria failed\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
    return failures == 0 ? 0 : 1;
}
