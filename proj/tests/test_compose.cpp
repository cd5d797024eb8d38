#include <tuple>

#include <gtest/gtest.h>

#include "linklearn/compose.hpp"
#include "linklearn/errors.hpp"
#include "linklearn/rng.hpp"
#include "scalar_adapters.hpp"

using namespace linklearn;

namespace {

// Scalar tasks: A0(h) = 3 * 2h, A1(h) = 4 * h, A2(h) = 2 * h.
const Adapter kA0 = scalar_adapter("t0", 2.0, 3.0);
const Adapter kA1 = scalar_adapter("t1", 1.0, 4.0);
const Adapter kA2 = scalar_adapter("t2", 1.0, 2.0);

Var scalar(Tape& tape, double v) { return tape.constant(Tensor({1, 1}, {v})); }

BetaSet betas(Tape& tape, std::size_t target, std::initializer_list<std::tuple<std::size_t, std::size_t, double>> w) {
    BetaSet s;
    s.target = target;
    for (const auto& [p, q, v] : w) s.weights.emplace(std::pair{p, q}, scalar(tape, v));
    return s;
}

}  // namespace

TEST(Compose, SingleTaskUnitWeightIsTheAdapter) {
    Tape tape;
    const BoundBank bank = bind_scalar(tape, {kA0});
    const Var h = scalar(tape, 0.5);
    const BetaSet b = betas(tape, 0, {{0, 0, 1.0}});
    EXPECT_EQ(compose_train(0, 0, h, bank, b).value().item(), compose_standalone(0, 0, h, bank).value().item());
    EXPECT_DOUBLE_EQ(compose_standalone(0, 0, h, bank).value().item(), 3.0);
}

TEST(Compose, TrainHandValue) {
    Tape tape;
    const BoundBank bank = bind_scalar(tape, {kA0, kA1});
    const BetaSet b = betas(tape, 1, {{0, 1, 0.5}, {1, 1, 1.0}});
    EXPECT_DOUBLE_EQ(compose_train(1, 0, scalar(tape, 0.5), bank, b).value().item(), 3.5);
}

TEST(Compose, InferHandValue) {
    Tape tape;
    const BoundBank bank = bind_scalar(tape, {kA0, kA1, kA2});
    const BetaSet b = betas(tape, 1, {{0, 1, 0.5}, {1, 1, 1.0}, {1, 2, 0.25}});
    EXPECT_DOUBLE_EQ(compose_infer(1, 3, 0, scalar(tape, 0.5), bank, b).value().item(), 3.75);
    // With no later tasks the inference sum is the training sum.
    const BetaSet b2 = betas(tape, 1, {{0, 1, 0.5}, {1, 1, 1.0}});
    EXPECT_EQ(compose_infer(1, 2, 0, scalar(tape, 0.5), bank, b2).value().item(),
              compose_train(1, 0, scalar(tape, 0.5), bank, b2).value().item());
}

TEST(Compose, ForcedWeightsReduceToStandalone) {
    Tape tape;
    const BoundBank bank = bind_scalar(tape, {kA0, kA1, kA2});
    const BetaSet b = betas(tape, 1, {{0, 1, 0.0}, {1, 1, 1.0}, {1, 2, 0.0}});
    const Var h = scalar(tape, -0.8);
    EXPECT_EQ(compose_infer(1, 3, 0, h, bank, b).value().item(), compose_standalone(1, 0, h, bank).value().item());
}

TEST(Compose, ZeroWeightsAnnihilate) {
    Tape tape;
    const BoundBank bank = bind_scalar(tape, {kA0, kA1, kA2});
    const BetaSet b = betas(tape, 1, {{0, 1, 0.0}, {1, 1, 0.0}, {1, 2, 0.0}});
    EXPECT_EQ(compose_infer(1, 3, 0, scalar(tape, 0.9), bank, b).value().item(), 0.0);
    EXPECT_EQ(compose_train(1, 0, scalar(tape, 0.9), bank, b).value().item(), 0.0);
}

TEST(Compose, ConstantWeights) {
    Tape tape;
    const BoundBank bank = bind_scalar(tape, {kA0, kA1, kA2});
    const Var h = scalar(tape, 0.5);
    EXPECT_DOUBLE_EQ(compose_constant(1, 2, 0, h, bank, 0.5, Direction::forward).value().item(), 2.5);
    EXPECT_DOUBLE_EQ(compose_constant(1, 3, 0, h, bank, 0.5, Direction::forward).value().item(), 2.5);
    EXPECT_DOUBLE_EQ(compose_constant(1, 3, 0, h, bank, 0.5, Direction::bidirectional).value().item(), 3.0);
    EXPECT_EQ(compose_constant(0, 1, 0, h, bank, 1.0, Direction::forward).value().item(),
              compose_standalone(0, 0, h, bank).value().item());
    EXPECT_EQ(compose_constant(2, 3, 0, h, bank, 0.0, Direction::bidirectional).value().item(), 0.0);
}

TEST(Compose, LinearInWeights) {
    // f(a*b1 + c*b2) = a*f(b1) + c*f(b2) for the per-layer attention weights.
    Tape tape;
    const BoundBank bank = bind_scalar(tape, {kA0, kA1});
    Rng rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        const double x = rng.normal(), y = rng.normal(), u = rng.normal(), v = rng.normal();
        const double a = rng.normal(), c = rng.normal();
        const Var h = scalar(tape, rng.normal());
        auto f = [&](double p, double q) {
            return compose_train(1, 0, h, bank, betas(tape, 1, {{0, 1, p}, {1, 1, q}})).value().item();
        };
        EXPECT_NEAR(f(a * x + c * u, a * y + c * v), a * f(x, y) + c * f(u, v), 1e-12);
    }
}

TEST(Compose, MissingPiecesAreStateErrors) {
    Tape tape;
    const BoundBank bank = bind_scalar(tape, {kA0, kA1});
    const Var h = scalar(tape, 0.5);
    EXPECT_THROW(compose_train(1, 0, h, bank, betas(tape, 1, {{1, 1, 1.0}})), StateError);
    EXPECT_THROW(compose_standalone(2, 0, h, bank), StateError);
    EXPECT_THROW(compose_infer(1, 3, 0, h, bank, betas(tape, 1, {{0, 1, 1.0}, {1, 1, 1.0}, {1, 2, 1.0}})),
                 StateError);
    EXPECT_THROW(compose_infer(2, 2, 0, h, bank, betas(tape, 2, {})), IndexError);
}

TEST(Compose, ModeNamesRoundTrip) {
    for (const auto& m : {ComposeMode::standalone(), ComposeMode::forward(), ComposeMode::bidirectional(),
                          ComposeMode::constant(1.0, Direction::forward),
                          ComposeMode::constant(0.5, Direction::bidirectional)}) {
        const ComposeMode back = ComposeMode::parse(m.name());
        EXPECT_EQ(back.name(), m.name());
    }
    EXPECT_EQ(ComposeMode::constant(1.0, Direction::forward).name(), "forward-k1");
    EXPECT_THROW(ComposeMode::parse("sideways"), ConfigError);
}
