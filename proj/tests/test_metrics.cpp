#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "linklearn/errors.hpp"
#include "linklearn/metrics.hpp"

using namespace linklearn;
namespace fs = std::filesystem;

namespace {

AccuracyMatrix matrix(std::vector<double> during, std::vector<double> alone, std::vector<double> fwd,
                      std::vector<double> bi) {
    AccuracyMatrix m;
    m.n_tasks = during.size();
    m.during = std::move(during);
    m.standalone_during = alone;
    m.add_end("standalone", std::move(alone));
    m.add_end("forward", std::move(fwd));
    m.add_end("bidirectional", std::move(bi));
    return m;
}

Report two_seed_report() {
    Report r;
    r.config_json = "{\"k\": 1}";
    r.runs.push_back({0, matrix({0.9, 0.8}, {0.85, 0.75}, {0.9, 0.8}, {0.91, 0.8})});
    r.runs.push_back({1, matrix({0.7, 0.6}, {0.7, 0.65}, {0.72, 0.6}, {0.7, 0.6})});
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("linklearn_metrics_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST(Accuracy, CountsArgmaxHits) {
    const Tensor logits({4, 2}, {2, 1, 0, 3, 5, -1, 0.5, 0.2});
    const std::vector<std::size_t> all{0, 1, 0, 0};
    EXPECT_EQ(accuracy_from_logits(logits, all), 1.0);
    const std::vector<std::size_t> three{0, 1, 0, 1};
    EXPECT_EQ(accuracy_from_logits(logits, three), 0.75);
    EXPECT_THROW(accuracy_from_logits(logits, std::vector<std::size_t>{}), DataError);
    EXPECT_THROW(accuracy_from_logits(logits, std::vector<std::size_t>{0, 1}), DimensionError);
}

TEST(Transfer, HandValues) {
    const std::vector<double> link{0.90, 0.80}, alone{0.85, 0.75};
    EXPECT_NEAR(knowledge_transfer(link, alone), 0.05, 1e-15);
    EXPECT_EQ(knowledge_transfer(link, link), 0.0);
    const std::vector<double> end{0.80, 0.90}, during{0.78, 0.91};
    EXPECT_NEAR(backward_transfer(end, during), 0.005, 1e-15);
    EXPECT_EQ(backward_transfer(end, end), 0.0);
    const std::vector<double> short_list{0.5};
    EXPECT_THROW(knowledge_transfer(link, short_list), DimensionError);
    EXPECT_THROW(backward_transfer(short_list, during), DimensionError);
}

TEST(Stats, PopulationStd) {
    const std::vector<double> v{1.0, 3.0};
    EXPECT_EQ(mean(v), 2.0);
    EXPECT_EQ(stddev(v), 1.0);
    const std::vector<double> one{0.4};
    EXPECT_EQ(stddev(one), 0.0);
}

TEST(Summary, PerModeStatistics) {
    const auto s = summarize(two_seed_report());
    ASSERT_EQ(s.size(), 3u);
    EXPECT_EQ(s[0].mode, "standalone");
    EXPECT_EQ(s[0].kt, (std::vector<double>{0.0, 0.0}));
    EXPECT_EQ(s[0].bt, (std::vector<double>{0.0, 0.0}));
    EXPECT_NEAR(s[1].kt[0], 0.05, 1e-15);
    EXPECT_NEAR(s[1].kt[1], -0.015, 1e-15);
    EXPECT_NEAR(s[1].bt[1], 0.01, 1e-15);
    EXPECT_NEAR(s[2].avg_acc_mean, (0.855 + 0.65) / 2, 1e-15);
    EXPECT_EQ(s[2].n_seeds, 2u);
}

TEST(Summary, SingleSeedHasZeroStd) {
    Report r = two_seed_report();
    r.runs.pop_back();
    for (const auto& s : summarize(r)) {
        EXPECT_EQ(s.avg_acc_std, 0.0);
        EXPECT_EQ(s.kt_std, 0.0);
        EXPECT_EQ(s.bt_std, 0.0);
    }
}

TEST(Export, RowCountAndIdempotence) {
    Report r = two_seed_report();
    r.runs.pop_back();
    const fs::path dir = scratch("export");
    export_report(r, dir);
    const std::string csv = slurp(dir / "accmatrix.csv");
    const auto rows = std::count(csv.begin(), csv.end(), '\n') - 1;
    EXPECT_EQ(rows, 2 * (1 + 3));
    const std::string summary = slurp(dir / "summary.csv");
    const std::string json = slurp(dir / "summary.json");
    export_report(r, dir);
    EXPECT_EQ(slurp(dir / "accmatrix.csv"), csv);
    EXPECT_EQ(slurp(dir / "summary.csv"), summary);
    EXPECT_EQ(slurp(dir / "summary.json"), json);
    EXPECT_NE(summary.find("forward,1,85.00,0.00,5.00,0.00,0.00,0.00"), std::string::npos) << summary;
    fs::remove_all(dir);
}

TEST(Export, SummaryRecomputesFromCsv) {
    const Report r = two_seed_report();
    const fs::path dir = scratch("recompute");
    export_report(r, dir);
    const Report back = read_accmatrix_csv(dir / "accmatrix.csv");
    ASSERT_EQ(back.runs.size(), 2u);
    const auto a = summarize(r);
    const auto b = summarize(back);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].mode, b[i].mode);
        EXPECT_EQ(a[i].avg_acc, b[i].avg_acc);
        EXPECT_EQ(a[i].kt, b[i].kt);
        EXPECT_EQ(a[i].bt, b[i].bt);
    }
    EXPECT_EQ(summary_csv(a), summary_csv(b));
    fs::remove_all(dir);
}

TEST(Export, MalformedCsv) {
    const fs::path dir = scratch("malformed");
    fs::create_directories(dir);
    std::ofstream(dir / "a.csv") << "task,phase,mode,seed\n";
    EXPECT_THROW(read_accmatrix_csv(dir / "a.csv"), FormatError);
    std::ofstream(dir / "b.csv") << "task,phase,mode,seed,accuracy\n0,later,forward,0,0.5\n";
    EXPECT_THROW(read_accmatrix_csv(dir / "b.csv"), FormatError);
    std::ofstream(dir / "c.csv") << "task,phase,mode,seed,accuracy\n0,end,forward,0,zero\n";
    EXPECT_THROW(read_accmatrix_csv(dir / "c.csv"), FormatError);
    EXPECT_THROW(read_accmatrix_csv(dir / "none.csv"), StorageError);
    fs::remove_all(dir);
}

TEST(Matrix, Validation) {
    AccuracyMatrix m = matrix({0.9, 0.8}, {0.85, 0.75}, {0.9, 0.8}, {0.91, 0.8});
    m.validate();
    EXPECT_THROW(m.end_for("sideways"), StateError);
    m.end["forward"].push_back(0.5);
    EXPECT_THROW(m.validate(), DimensionError);
    AccuracyMatrix bad = matrix({0.9, 1.2}, {0.85, 0.75}, {0.9, 0.8}, {0.91, 0.8});
    EXPECT_THROW(bad.validate(), DataError);
}
