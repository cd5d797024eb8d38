// linklearn command-line entry point.
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "linklearn/config.hpp"
#include "linklearn/errors.hpp"
#include "linklearn/gradcheck_suite.hpp"
#include "linklearn/runner.hpp"

namespace {

using linklearn::Override;

struct Common {
    std::string config;
    std::vector<std::string> sets;

    void add_to(CLI::App* cmd) {
        cmd->add_option("-c,--config", config, "JSON config file")->check(CLI::ExistingFile);
        cmd->add_option("--set", sets, "override one key, section.key=value (repeatable)");
    }

    std::vector<Override> overrides() const {
        std::vector<Override> out;
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw linklearn::ConfigError("--set expects key=value, got '" + s + "'");
            out.push_back({s.substr(0, eq), s.substr(eq + 1)});
        }
        return out;
    }
};

void log_line(const std::string& msg) { std::cerr << msg << '\n'; }

std::string one_line(std::string s) {
    for (auto& ch : s) {
        if (ch == '\n' || ch == '\r') ch = ' ';
    }
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Linked adapters continual learning on a frozen transformer backbone"};
    app.require_subcommand(1);

    Common gen_common, pre_common, run_common;
    std::string gen_out, pre_out, run_out, run_backbone, report_out;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> orders;
    std::vector<double> constant_k, lambda_sweep;
    double lambda = 0.0;
    std::uint64_t gradcheck_seed = 7;
    std::vector<std::string> report_dirs;

    auto* gen = app.add_subcommand("gen-data", "write the synthetic dataset as .clds plus a manifest");
    gen_common.add_to(gen);
    gen->add_option("-o,--out", gen_out, "output directory (default <out root>/data)");

    auto* pre = app.add_subcommand("pretrain", "pretrain and freeze the backbone on the base classes");
    pre_common.add_to(pre);
    pre->add_option("-o,--out", pre_out, "checkpoint directory (default <out root>/backbone)");

    auto* run = app.add_subcommand("run", "standalone and linked sequences for every seed, order and lambda");
    run_common.add_to(run);
    run->add_option("--seeds", seeds, "seed list, e.g. 0,1,2,3,4")->delimiter(',');
    run->add_option("--order", orders, "task order, e.g. 41230 or identity (repeatable)");
    run->add_option("--constant-k", constant_k, "also evaluate every attention weight fixed to k")->delimiter(',');
    auto* lambda_opt = run->add_option("--lambda", lambda, "regularization strength");
    run->add_option("--lambda-sweep", lambda_sweep, "one run group per lambda")->delimiter(',');
    run->add_option("--backbone", run_backbone, "pretrained backbone checkpoint directory");
    run->add_option("-o,--out", run_out, "output root (default $LINKLEARN_OUT, else ./runs)");

    auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    grad->add_option("--seed", gradcheck_seed, "seed for the random inputs");

    auto* report = app.add_subcommand("report", "aggregate seed directories into one report");
    report->add_option("dirs", report_dirs, "seed directories or run groups")->required();
    report->add_option("-o,--out", report_out, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            const auto c = linklearn::load_config(gen_common.config, gen_common.overrides());
            const std::filesystem::path out = gen_out.empty() ? std::filesystem::path(c.out) / "data" : std::filesystem::path(gen_out);
            linklearn::generate_data(c, out);
            std::cout << "wrote " << (out / "synthetic.clds").string() << '\n';
        } else if (pre->parsed()) {
            const auto c = linklearn::load_config(pre_common.config, pre_common.overrides());
            const std::filesystem::path out = pre_out.empty() ? std::filesystem::path(c.out) / "backbone" : std::filesystem::path(pre_out);
            const auto bench = linklearn::load_benchmark(c);
            linklearn::obtain_backbone(c, bench, out, log_line);
            std::cout << "wrote " << out.string() << '\n';
        } else if (run->parsed()) {
            auto overrides = run_common.overrides();
            if (!seeds.empty()) overrides.push_back({"run.seeds", nlohmann::json(seeds).dump()});
            if (!orders.empty()) overrides.push_back({"run.orders", nlohmann::json(orders).dump()});
            if (!constant_k.empty()) overrides.push_back({"run.constant_k", nlohmann::json(constant_k).dump()});
            if (!lambda_sweep.empty()) overrides.push_back({"run.lambda_sweep", nlohmann::json(lambda_sweep).dump()});
            if (lambda_opt->count() > 0) overrides.push_back({"train.lambda", nlohmann::json(lambda).dump()});
            if (!run_backbone.empty()) overrides.push_back({"pretrain.checkpoint", nlohmann::json(run_backbone).dump()});
            if (!run_out.empty()) overrides.push_back({"run.out", nlohmann::json(run_out).dump()});
            const auto c = linklearn::load_config(run_common.config, overrides);
            const auto result = linklearn::run_experiment(c, log_line);
            std::cout << linklearn::orders_csv(result.groups);
            std::cout << "results in " << result.root.string() << '\n';
        } else if (grad->parsed()) {
            double worst = 0.0;
            for (const auto& r : linklearn::run_gradcheck_suite(gradcheck_seed)) {
                std::printf("%-26s %5zu entries  max rel err %.3e\n", r.name.c_str(), r.checked, r.max_rel_error);
                worst = std::max(worst, r.max_rel_error);
            }
            std::printf("max relative error %.3e (tolerance %.0e)\n", worst, linklearn::kGradCheckTolerance);
            return worst <= linklearn::kGradCheckTolerance ? 0 : 1;
        } else if (report->parsed()) {
            std::vector<std::filesystem::path> dirs(report_dirs.begin(), report_dirs.end());
            const auto r = linklearn::collect_report(dirs);
            linklearn::export_report(r, report_out);
            std::cout << linklearn::summary_csv(linklearn::summarize(r));
        }
    } catch (const std::exception& e) {
        std::cerr << "linklearn: " << one_line(e.what()) << '\n';
        return 2;
    }
    return 0;
}
