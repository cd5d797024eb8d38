#include <cmath>

#include <gtest/gtest.h>

#include "linklearn/adapter.hpp"
#include "linklearn/errors.hpp"
#include "linklearn/rng.hpp"
#include "scalar_adapters.hpp"

using namespace linklearn;

TEST(Adapter, FreshAdapterOutputsZero) {
    AdapterBank bank(AdapterConfig{});
    bank.add_task(0, 3);
    Rng rng(1);
    Tensor h = Tensor::zeros({5, 32});
    for (auto& v : h.data) v = rng.normal();
    Tape tape;
    const Tensor& out = adapter_forward(tape, bank.at(0, 2), tape.constant(h)).value();
    ASSERT_EQ(out.shape, (Shape{5, 32}));
    for (double v : out.data) EXPECT_EQ(v, 0.0);
}

TEST(Adapter, ScalarHandValue) {
    Tape tape;
    const Var out = adapter_forward(tape, scalar_adapter("a", 2.0, 3.0), tape.constant(Tensor({1, 1}, {0.5})));
    EXPECT_DOUBLE_EQ(out.value().item(), 3.0);
}

TEST(Adapter, ReluGatesNegativeInput) {
    Tape tape;
    const Var out = adapter_forward(tape, scalar_adapter("a", 1.0, 1.0, Activation::relu),
                                    tape.constant(Tensor({1, 1}, {-2.0})));
    EXPECT_EQ(out.value().item(), 0.0);
}

TEST(Adapter, WidthMismatchIsDimensionError) {
    Tape tape;
    EXPECT_THROW(adapter_forward(tape, scalar_adapter("a", 1.0, 1.0), tape.constant(Tensor::zeros({1, 2}))),
                 DimensionError);
}

TEST(Adapter, ActivationNames) {
    EXPECT_EQ(parse_activation(to_string(Activation::relu)), Activation::relu);
    EXPECT_EQ(parse_activation(to_string(Activation::identity)), Activation::identity);
    EXPECT_THROW(parse_activation("tanh"), ConfigError);
}

TEST(AdapterBank, AddsOneAdapterPerLayer) {
    AdapterBank bank(AdapterConfig{32, 8, 4, Activation::relu});
    bank.add_task(0, 9);
    EXPECT_EQ(bank.task_count(), 1u);
    EXPECT_EQ(bank.task_parameters(0).size(), 4u * 4u);
    EXPECT_THROW(bank.at(0, 4), StateError);
}

TEST(AdapterBank, SameSeedSameDownWeights) {
    AdapterBank a(AdapterConfig{}), b(AdapterConfig{});
    a.add_task(0, 42);
    b.add_task(0, 42);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(a.at(0, k).down_w.value.data, b.at(0, k).down_w.value.data);
    AdapterBank c(AdapterConfig{});
    c.add_task(0, 43);
    EXPECT_NE(a.at(0, 0).down_w.value.data, c.at(0, 0).down_w.value.data);
}

TEST(AdapterBank, OutOfOrderTaskIsProtocolError) {
    AdapterBank bank(AdapterConfig{});
    EXPECT_THROW(bank.add_task(1, 0), ProtocolError);
    bank.add_task(0, 0);
    EXPECT_THROW(bank.add_task(1, 0), ProtocolError);  // task 0 not frozen yet
    bank.freeze_task(0);
    bank.add_task(1, 0);
    bank.freeze_task(1);
    EXPECT_EQ(bank.frozen_through(), 1);
    EXPECT_THROW(bank.add_task(3, 0), ProtocolError);
}

TEST(AdapterBank, FreezeMarksEveryParameter) {
    AdapterBank bank(AdapterConfig{});
    bank.add_task(0, 0);
    for (Parameter* p : bank.task_parameters(0)) EXPECT_FALSE(p->frozen);
    bank.freeze_task(0);
    for (Parameter* p : bank.task_parameters(0)) EXPECT_TRUE(p->frozen);
}

TEST(ParamCount, DeskConfig) {
    EXPECT_EQ(added_param_count(32, 8, 4).adapters, 2208u);
    const ParamCount c = added_param_count(32, 8, 4, 2, 8);
    EXPECT_EQ(c.head, 66u);
    EXPECT_EQ(c.embedding, 8u);
    EXPECT_EQ(c.total(), 2208u + 66u + 8u);
}

TEST(ParamCount, VitBaseShareIsAboutTwoPercent) {
    const std::size_t n = added_param_count(768, 96, 12).adapters;
    EXPECT_EQ(n, 1779840u);
    const double share = 100.0 * static_cast<double>(n) / 86e6;
    EXPECT_NEAR(share, 2.0, 0.5);
}

TEST(ParamCount, ZeroBottleneckIsConfigError) {
    EXPECT_THROW(added_param_count(32, 0, 4), ConfigError);
    EXPECT_THROW(AdapterBank(AdapterConfig{32, 0, 4, Activation::relu}), ConfigError);
}
