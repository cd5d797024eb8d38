#include "linklearn/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "linklearn/errors.hpp"

namespace linklearn {
namespace {

void write_file(const std::filesystem::path& path, const std::string& contents) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw StorageError("cannot open " + path.string() + " for writing");
    f << contents;
    if (!f) throw StorageError("write failed for " + path.string());
}

void make_dirs(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw StorageError("cannot create " + dir.string() + ": " + ec.message());
}

std::string fmt_g(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

void say(const Log& log, const std::string& msg) {
    if (log) log(msg);
}

std::string data_manifest(const ExperimentConfig& c) {
    if (c.data_path.empty()) return synthetic_manifest_json(c.data);
    nlohmann::ordered_json j;
    j["source"] = c.data_path;
    j["n_tasks"] = c.data.n_tasks;
    j["classes_per_task"] = c.data.classes_per_task;
    j["base_classes"] = c.data.base_classes;
    j["split_percent"] = {kTrainPercent, kValPercent, 100 - kTrainPercent - kValPercent};
    return j.dump(2) + "\n";
}

}  // namespace

Benchmark load_benchmark(const ExperimentConfig& c) {
    if (c.data_path.empty()) return make_benchmark(c.data);
    Dataset all = read_clds(c.data_path);
    const std::size_t needed = c.data.continual_classes() + c.data.base_classes;
    if (all.n_classes < needed) {
        throw ConfigError("key 'data.path': " + c.data_path + " has " + std::to_string(all.n_classes) +
                          " classes, the benchmark needs " + std::to_string(needed));
    }
    if (all.height != c.model.backbone.image_h || all.width != c.model.backbone.image_w ||
        all.channels != c.model.backbone.channels) {
        throw ConfigError("key 'data.path': image shape does not match data.image_size / data.channels");
    }
    Benchmark b;
    b.split = split_by_class(all, c.data.n_tasks, c.data.classes_per_task, 0);
    if (c.data.base_classes > 0) b.base = select_classes(all, c.data.continual_classes(), c.data.base_classes);
    return b;
}

Backbone obtain_backbone(const ExperimentConfig& c, const Benchmark& bench, const std::filesystem::path& save_dir,
                         const Log& log) {
    if (!c.backbone_path.empty()) {
        Backbone bb = load_backbone(c.backbone_path);
        const auto& want = c.model.backbone;
        const auto& got = bb.config;
        if (got.image_h != want.image_h || got.image_w != want.image_w || got.channels != want.channels ||
            got.patch != want.patch || got.d_model != want.d_model || got.n_heads != want.n_heads ||
            got.d_ff != want.d_ff || got.layers != want.layers) {
            throw ConfigError("key 'pretrain.checkpoint': backbone shape does not match the model section");
        }
        if (!bb.frozen()) throw LoadError(c.backbone_path + ": backbone is not frozen");
        say(log, "loaded backbone from " + c.backbone_path);
        return bb;
    }
    say(log, "pretraining backbone on " + std::to_string(bench.base.size()) + " base samples");
    PretrainResult r = pretrain_backbone(c.model.backbone, bench.base, c.pretrain);
    say(log, "pretrain loss " + fmt_g(r.losses.front()) + " -> " + fmt_g(r.losses.back()));
    if (!save_dir.empty()) save_backbone(r.backbone, save_dir, config_echo(c));
    return std::move(r.backbone);
}

SeedRun run_seed(const ExperimentConfig& c, const Backbone& backbone, const TaskSplit& tasks, std::uint64_t seed,
                 const std::filesystem::path& dir, const Log& log) {
    TrainConfig tc = c.train;
    tc.seed = seed;

    ContinualState standalone = ContinualState::create(c.model, backbone, Regime::standalone, seed);
    AccuracyMatrix sa = run_sequence(standalone, tasks, tc, default_end_modes(Regime::standalone));
    ContinualState linked = ContinualState::create(c.model, backbone, Regime::linked, seed);
    AccuracyMatrix ln = run_sequence(linked, tasks, tc, default_end_modes(Regime::linked, c.constant_k));

    AccuracyMatrix m;
    m.n_tasks = ln.n_tasks;
    m.during = ln.during;
    m.standalone_during = sa.during;
    m.add_end(kStandaloneMode, sa.end_for(kStandaloneMode));
    for (const auto& mode : ln.modes) m.add_end(mode, ln.end_for(mode));
    m.validate();
    SeedRun run{seed, std::move(m)};

    if (!dir.empty()) {
        make_dirs(dir);
        ExperimentConfig echo = c;
        echo.seeds = {seed};
        echo.lambda_sweep.clear();
        write_file(dir / "config.json", config_echo(echo));
        write_file(dir / "data_manifest.json", data_manifest(c));
        save_checkpoint(standalone, dir / "checkpoint-standalone", config_echo(echo));
        save_checkpoint(linked, dir / "checkpoint-linked", config_echo(echo));
        Report single;
        single.config_json = config_echo(echo);
        single.runs.push_back(run);
        export_report(single, dir);
    }
    const auto& fwd = run.matrix.end_for("forward");
    say(log, "seed " + std::to_string(seed) + ": KT(forward) " +
                 fmt_g(100.0 * knowledge_transfer(fwd, run.matrix.end_for(kStandaloneMode))) + "%");
    return run;
}

RunResult run_experiment(const ExperimentConfig& c, const Log& log) {
    RunResult result;
    result.root = c.out;
    make_dirs(result.root);
    write_file(result.root / "config.json", config_echo(c));
    write_file(result.root / "data_manifest.json", data_manifest(c));

    const Benchmark bench = load_benchmark(c);
    const Backbone backbone = obtain_backbone(c, bench, result.root / "backbone", log);

    std::vector<double> lambdas = c.lambda_sweep;
    const bool sweep = !lambdas.empty();
    if (!sweep) lambdas.push_back(c.train.lambda);

    for (const auto& order : c.orders) {
        const TaskSplit tasks = apply_task_order(bench.split, c.permutation(order));
        for (double lambda : lambdas) {
            ExperimentConfig gc = c;
            gc.train.lambda = lambda;
            gc.orders = {order};
            RunGroup g;
            g.name = "order-" + order + (sweep ? "-lambda-" + fmt_g(lambda) : "");
            g.order = order;
            g.lambda = lambda;
            g.report.config_json = config_echo(gc);
            const auto gdir = result.root / g.name;
            for (std::uint64_t seed : c.seeds) {
                say(log, g.name + " seed " + std::to_string(seed));
                g.report.runs.push_back(run_seed(gc, backbone, tasks, seed, gdir / ("seed-" + std::to_string(seed)), log));
            }
            export_report(g.report, gdir);
            const Report reread = read_accmatrix_csv(gdir / "accmatrix.csv");
            if (reread.runs.size() != c.seeds.size()) {
                throw StorageError(gdir.string() + "/accmatrix.csv does not hold every seed");
            }
            g.summary = summarize(g.report);
            result.groups.push_back(std::move(g));
        }
    }
    write_file(result.root / "orders.csv", orders_csv(result.groups));
    return result;
}

void generate_data(const ExperimentConfig& c, const std::filesystem::path& out) {
    make_dirs(out);
    SyntheticSpec spec = c.data.synthetic;
    write_clds(gen_synthetic(spec), out / "synthetic.clds");
    write_file(out / "synthetic.manifest.json", synthetic_manifest_json(c.data));
}

Report collect_report(const std::vector<std::filesystem::path>& dirs) {
    std::vector<std::filesystem::path> files;
    for (const auto& d : dirs) {
        if (std::filesystem::exists(d / "accmatrix.csv") && !std::filesystem::exists(d / "summary.json")) {
            files.push_back(d / "accmatrix.csv");
            continue;
        }
        std::vector<std::filesystem::path> seeds;
        std::error_code ec;
        for (const auto& e : std::filesystem::directory_iterator(d, ec)) {
            if (e.is_directory() && e.path().filename().string().rfind("seed-", 0) == 0 &&
                std::filesystem::exists(e.path() / "accmatrix.csv")) {
                seeds.push_back(e.path() / "accmatrix.csv");
            }
        }
        if (seeds.empty() && std::filesystem::exists(d / "accmatrix.csv")) seeds.push_back(d / "accmatrix.csv");
        if (seeds.empty()) throw StorageError("no accmatrix.csv under " + d.string());
        std::sort(seeds.begin(), seeds.end());
        files.insert(files.end(), seeds.begin(), seeds.end());
    }
    Report out;
    for (const auto& f : files) {
        Report r = read_accmatrix_csv(f);
        for (auto& run : r.runs) {
            for (const auto& have : out.runs) {
                if (have.seed == run.seed) throw DataError("seed " + std::to_string(run.seed) + " appears twice");
            }
            out.runs.push_back(std::move(run));
        }
    }
    if (out.runs.empty()) throw DataError("no seed runs found");
    return out;
}

std::string orders_csv(const std::vector<RunGroup>& groups) {
    std::ostringstream os;
    os << "group,order,lambda,mode,n_seeds,avg_acc_mean,kt_mean,kt_std,bt_mean\n";
    auto pct = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
        return std::string(buf);
    };
    for (const auto& g : groups) {
        for (const auto& s : g.summary) {
            os << g.name << ',' << g.order << ',' << fmt_g(g.lambda) << ',' << s.mode << ',' << s.n_seeds << ','
               << pct(s.avg_acc_mean) << ',' << pct(s.kt_mean) << ',' << pct(s.kt_std) << ',' << pct(s.bt_mean) << '\n';
        }
    }
    return os.str();
}

}  // namespace linklearn
