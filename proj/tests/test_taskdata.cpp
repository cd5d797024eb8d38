#include <filesystem>
#include <fstream>
#include <set>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "linklearn/errors.hpp"
#include "linklearn/taskdata.hpp"

using namespace linklearn;
namespace fs = std::filesystem;

namespace {

Dataset two_samples() {
    Dataset d;
    d.height = 4;
    d.width = 4;
    d.channels = 1;
    d.n_classes = 2;
    for (int i = 0; i < 32; ++i) d.images.push_back(0.125f * static_cast<float>(i) - 1.0f);
    d.labels = {1, 0};
    return d;
}

fs::path scratch(const std::string& name) { return fs::temp_directory_path() / ("linklearn_data_" + name); }

SyntheticSpec small_spec() {
    SyntheticSpec s;
    s.n_classes = 10;
    s.train_per_class = 20;
    s.test_per_class = 0;
    s.image_h = 8;
    s.image_w = 8;
    return s;
}

}  // namespace

TEST(Clds, FileSizeFromHeaderArithmetic) {
    const fs::path p = scratch("size.clds");
    write_clds(two_samples(), p);
    EXPECT_EQ(fs::file_size(p), 150u);
    EXPECT_EQ(kCldsHeaderBytes + 2 * 16 * 4 + 2 * 2, 150u);
    fs::remove(p);
}

TEST(Clds, RoundTripIsExact) {
    const fs::path p = scratch("rt.clds");
    const Dataset d = gen_synthetic(small_spec());
    write_clds(d, p);
    const Dataset back = read_clds(p);
    EXPECT_EQ(back.images, d.images);
    EXPECT_EQ(back.labels, d.labels);
    EXPECT_EQ(back.n_classes, d.n_classes);
    EXPECT_EQ(back.height, 8u);
    // Canonical writes are byte-stable.
    const fs::path q = scratch("rt2.clds");
    write_clds(back, q);
    std::ifstream a(p, std::ios::binary), b(q, std::ios::binary);
    EXPECT_TRUE(std::equal(std::istreambuf_iterator<char>(a), {}, std::istreambuf_iterator<char>(b)));
    fs::remove(p);
    fs::remove(q);
}

TEST(Clds, CorruptFilesAreFormatErrors) {
    const fs::path p = scratch("bad.clds");
    write_clds(two_samples(), p);
    {
        std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
        f.put('X');
    }
    try {
        read_clds(p);
        FAIL() << "bad magic accepted";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
    }

    write_clds(two_samples(), p);
    {
        std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(4);
        f.put(9);
    }
    EXPECT_THROW(read_clds(p), FormatError);

    write_clds(two_samples(), p);
    fs::resize_file(p, 149);
    try {
        read_clds(p);
        FAIL() << "truncated file accepted";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("labels"), std::string::npos);
    }
    fs::remove(p);
}

TEST(Split, TasksTakeConsecutiveClassPairs) {
    const Dataset d = gen_synthetic(small_spec());
    const TaskSplit s = split_by_class(d, 5, 2);
    ASSERT_EQ(s.tasks.size(), 5u);
    std::set<std::size_t> seen;
    for (std::size_t t = 0; t < 5; ++t) {
        EXPECT_EQ(s.tasks[t].classes, (std::vector<std::size_t>{2 * t, 2 * t + 1}));
        for (auto c : s.tasks[t].classes) EXPECT_TRUE(seen.insert(c).second);
        for (const Dataset* part : {&s.tasks[t].train, &s.tasks[t].val, &s.tasks[t].test}) {
            for (auto l : part->labels) EXPECT_LT(l, 2u);
        }
    }
    EXPECT_EQ(seen.size(), 10u);
}

TEST(Split, CountsFollowSeventyTenTwenty) {
    SyntheticSpec spec = small_spec();
    spec.train_per_class = 200;
    spec.test_per_class = 50;
    const TaskSplit s = split_by_class(gen_synthetic(spec), 5, 2);
    for (const auto& t : s.tasks) {
        EXPECT_EQ(t.train.size(), 2u * 175u);
        EXPECT_EQ(t.val.size(), 2u * 25u);
        EXPECT_EQ(t.test.size(), 2u * 50u);
    }
}

TEST(Split, SamplesAreDisjointAcrossParts) {
    SyntheticSpec spec = small_spec();
    const Dataset d = gen_synthetic(spec);
    const TaskSplit s = split_by_class(d, 5, 2);
    std::set<std::vector<float>> seen;
    std::size_t total = 0;
    for (const auto& t : s.tasks) {
        for (const Dataset* part : {&t.train, &t.val, &t.test}) {
            for (std::size_t i = 0; i < part->size(); ++i) {
                auto px = part->sample(i);
                EXPECT_TRUE(seen.emplace(px.begin(), px.end()).second);
                ++total;
            }
        }
    }
    EXPECT_EQ(total, d.size());
}

TEST(Split, TooFewClassesIsConfigError) {
    EXPECT_THROW(split_by_class(gen_synthetic(small_spec()), 6, 2), ConfigError);
    EXPECT_THROW(split_by_class(gen_synthetic(small_spec()), 5, 2, 1), ConfigError);
}

TEST(TaskOrder, ParseAndApply) {
    EXPECT_EQ(parse_task_order("41230"), (std::vector<std::size_t>{4, 1, 2, 3, 0}));
    EXPECT_EQ(parse_task_order("4,1,2,3,0"), (std::vector<std::size_t>{4, 1, 2, 3, 0}));
    const TaskSplit s = split_by_class(gen_synthetic(small_spec()), 5, 2);
    const auto perm = parse_task_order("41230");
    const TaskSplit r = apply_task_order(s, perm);
    std::vector<std::size_t> stream;
    for (const auto& t : r.tasks) stream.push_back(t.source_index);
    EXPECT_EQ(stream, perm);
    EXPECT_EQ(r.tasks[0].classes, (std::vector<std::size_t>{8, 9}));

    const TaskSplit back = apply_task_order(r, invert_permutation(perm));
    for (std::size_t t = 0; t < 5; ++t) {
        EXPECT_EQ(back.tasks[t].classes, s.tasks[t].classes);
        EXPECT_EQ(back.tasks[t].train.images, s.tasks[t].train.images);
    }
    const std::vector<std::size_t> id{0, 1, 2, 3, 4};
    EXPECT_EQ(apply_task_order(s, id).tasks[3].test.labels, s.tasks[3].test.labels);
}

TEST(TaskOrder, InvalidPermutations) {
    const TaskSplit s = split_by_class(gen_synthetic(small_spec()), 5, 2);
    for (const char* bad : {"4123", "41233", "41235"}) {
        const auto p = parse_task_order(bad);
        EXPECT_THROW(apply_task_order(s, p), ConfigError) << bad;
    }
    EXPECT_THROW(parse_task_order("4a230"), ConfigError);
    EXPECT_THROW(parse_task_order(""), ConfigError);
}

TEST(Synthetic, NoNoiseGivesPrototypes) {
    SyntheticSpec spec = small_spec();
    spec.noise_sigma = 0.0;
    const SyntheticData g = gen_synthetic_full(spec);
    for (std::size_t i = 0; i < g.data.size(); ++i) {
        const auto px = g.data.sample(i);
        const std::size_t c = g.data.labels[i];
        for (std::size_t j = 0; j < px.size(); ++j) {
            EXPECT_EQ(px[j], static_cast<float>(g.prototypes.data[c * px.size() + j]));
        }
    }
}

TEST(Synthetic, Deterministic) {
    EXPECT_EQ(gen_synthetic(small_spec()).images, gen_synthetic(small_spec()).images);
    SyntheticSpec other = small_spec();
    other.seed += 1;
    EXPECT_NE(gen_synthetic(other).images, gen_synthetic(small_spec()).images);
}

TEST(Synthetic, PrototypesLieInBasisSpan) {
    const SyntheticData g = gen_synthetic_full(small_spec());
    const std::size_t r = g.basis.shape[0], n = g.basis.shape[1];
    Eigen::MatrixXd B(n, r);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < n; ++j) B(j, i) = g.basis.data[i * n + j];
    }
    const auto qr = B.colPivHouseholderQr();
    for (std::size_t c = 0; c < g.prototypes.shape[0]; ++c) {
        Eigen::VectorXd p(n);
        for (std::size_t j = 0; j < n; ++j) p(j) = g.prototypes.data[c * n + j];
        const Eigen::VectorXd coef = qr.solve(p);
        EXPECT_LT((B * coef - p).norm(), 1e-8);
    }
}

TEST(Benchmark, BaseTaskIsDisjoint) {
    BenchmarkSpec spec;
    spec.synthetic = small_spec();
    spec.synthetic.n_classes = 14;
    const Benchmark b = make_benchmark(spec);
    EXPECT_EQ(b.split.tasks.size(), 5u);
    EXPECT_EQ(b.base.n_classes, 4u);
    EXPECT_EQ(b.base.size(), 4u * 20u);
    EXPECT_EQ(b.split.tasks[4].classes, (std::vector<std::size_t>{8, 9}));
    spec.base_classes = 5;
    EXPECT_THROW(make_benchmark(spec), ConfigError);
}
